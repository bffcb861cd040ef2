import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdlab.cli import main
from fdlab.cli_io import (LINEARIZED_HEADER, PROFILE_HEADER, SCHEMA_VERSION, TRACE_HEADER,
                          ConfigError, dumps, emit_results, load_config, parse_config, read_csv,
                          render)
from fdlab.profiles import RadialProfile
from fdlab.radial_pde import EvolutionTrace


def write(tmp_path, text, name="cfg.json"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_config_materializes_defaults():
    cfg = parse_config({"n": 20, "p": 3})
    d = cfg.as_dict()
    assert d["n"] == 20 and d["p"] == 3.0 and d["seed"] == 0
    for block in ("solver", "steady", "linearize", "evolve", "certify", "rate_experiment",
                  "instability", "transform"):
        assert isinstance(d[block], dict) and d[block]
    # validated config is a fixed point
    assert parse_config(d).as_dict() == d


def test_gamma_outside_window_names_window():
    with pytest.raises(ConfigError) as info:
        parse_config({"n": 20, "p": 3, "rate_experiment": {"gamma": 9.5}})
    msg = str(info.value)
    assert "rate_experiment.gamma" in msg and "(3.522774425, 9)" in msg


@pytest.mark.parametrize("raw,fragment", [
    ({"n": 2, "p": 3}, "n: must be >= 3"),
    ({"n": 20, "p": 1}, "p: must be > 1"),
    ({"n": 20.5, "p": 3}, "n: expected an integer"),
    ({"p": 3}, "n: required"),
    ({"n": 20, "p": 3, "colour": 1}, "colour: unknown key"),
    ({"n": 20, "p": 3, "steady": {"alhpa": 1}}, "steady.alhpa: unknown key"),
    ({"n": 20, "p": 3, "steady": {"alpha": "one"}}, "steady.alpha: expected a finite number"),
    ({"n": 20, "p": 3, "evolve": {"kind": "sideways"}}, "evolve.kind: must be one of"),
    ({"n": 20, "p": 3, "certify": {"lemma": 5}}, "certify.lemma: must be one of"),
    ({"n": 20, "p": 3, "solver": []}, "solver: expected an object"),
])
def test_invalid_configs(raw, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(raw)


def test_duplicate_key_rejected(tmp_path):
    path = write(tmp_path, '{"n": 20, "p": 3, "n": 11}')
    with pytest.raises(ConfigError, match="duplicate key 'n'"):
        load_config(path)


def test_malformed_and_non_object(tmp_path):
    with pytest.raises(ConfigError, match="malformed"):
        load_config(write(tmp_path, '{"n": 20,'))
    with pytest.raises(ConfigError, match="top level"):
        load_config(write(tmp_path, "[1, 2]"))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")


def test_run_id_is_content_hash():
    a = parse_config({"n": 20, "p": 3})
    b = parse_config({"p": 3.0, "n": 20, "seed": 0})
    c = parse_config({"n": 20, "p": 3, "seed": 1})
    assert a.run_id() == b.run_id() != c.run_id()


def test_dumps_is_deterministic():
    obj = {"b": [1.0, -0.0, math.inf, np.float64(0.1)], "a": {"y": True, "x": None}}
    text = dumps(obj)
    assert text == '{"a":{"x":null,"y":true},"b":[1,0,null,0.10000000000000001]}'
    assert dumps(json.loads(text)) == dumps(json.loads(dumps(json.loads(text))))


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), max_size=8))
def test_float_round_trip(xs):
    assert json.loads(dumps(xs)) == [x + 0.0 for x in xs]


def profile(kind="steady_state", meta=None):
    r = np.linspace(0, 1.5, 9)
    return RadialProfile(r, np.cos(r), derivs=-np.sin(r), kind=kind, meta=meta or {})


def test_csv_headers_and_round_trip(tmp_path):
    echo = parse_config({"n": 20, "p": 3}).as_dict()
    path = emit_results(profile(), "csv", tmp_path / "phi.csv", echo)
    schema, config, cols, data = read_csv(path)
    assert path.read_text().splitlines()[2] == PROFILE_HEADER
    assert schema == SCHEMA_VERSION and config == json.loads(dumps(echo))
    np.testing.assert_array_equal(data[:, 1], np.cos(np.linspace(0, 1.5, 9)))
    emit_results(profile(), "csv", tmp_path / "again.csv", config)
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


def test_linearized_csv_adds_weighted_column():
    text = render(profile("linearized", {"gamma": 6.0}), "csv")
    assert text.splitlines()[2] == LINEARIZED_HEADER


def test_trace_csv_header():
    t = np.linspace(0, 1, 5)
    tr = EvolutionTrace(t, 1 + t, t, t, 1 + t, 0 * t)
    assert render(tr, "csv").splitlines()[2] == TRACE_HEADER
    with pytest.raises(TypeError):
        render({"a": 1}, "csv")
    with pytest.raises(ValueError):
        render(tr, "xml")


def test_json_envelope_bytes_stable():
    a = render({"x": 1.5}, "json", {"n": 20})
    assert a == render({"x": 1.5}, "json", {"n": 20})
    assert json.loads(a) == {"schema": SCHEMA_VERSION, "config": {"n": 20}, "result": {"x": 1.5}}


# ---------------------------------------------------------------- command line

def test_cli_exponents(capsys):
    assert main(["exponents", "--n", "20", "--p", "3", "--gamma", "6", "--json"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["nu"] == 1.0 and d["kappa(gamma)"] == pytest.approx(7 / 17)


def test_cli_steady_writes_report_and_csv(tmp_path, capsys):
    rc = main(["steady", "--n", "20", "--p", "3", "--rmax", "100", "--out-dir", str(tmp_path),
               "--csv", str(tmp_path / "phi.csv")])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    report = json.loads(open(out["report"]).read())
    assert report["config"]["steady"]["r_max"] == 100.0
    assert report["result"]["phi0"] == 1.0
    assert read_csv(tmp_path / "phi.csv")[2] == PROFILE_HEADER.split(",")


def test_cli_reports_are_reproducible(tmp_path, capsys):
    args = ["steady", "--n", "20", "--p", "3", "--rmax", "50", "--out-dir", str(tmp_path)]
    main(args)
    first = json.loads(capsys.readouterr().out)["report"]
    data = open(first, "rb").read()
    main(args)
    assert json.loads(capsys.readouterr().out)["report"] == first
    assert open(first, "rb").read() == data


def test_cli_config_file_and_override(tmp_path, capsys):
    cfg = write(tmp_path, json.dumps({"n": 20, "p": 3, "certify": {"lemma": 7}}))
    rc = main(["certify", "--params", str(cfg), "--json", str(tmp_path / "r.json")])
    assert rc == 0
    res = json.loads((tmp_path / "r.json").read_text())["result"]
    assert res["lemma"] == 7 and res["passed"]


def test_cli_invalid_input_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, '{"n": 20, "p": 3, "p": 2}')
    assert main(["steady", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
    assert "duplicate key" in capsys.readouterr().err
    assert main(["linearize", "--n", "20", "--p", "3", "--gamma", "12",
                 "--out-dir", str(tmp_path)]) == 2
    assert "admissible window" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        main(["certify", "--lemma", "5"])
    assert info.value.code == 2


def test_cli_not_passed_exit_code(tmp_path, capsys):
    rc = main(["certify", "--n", "20", "--p", "3", "--lemma", "2", "--A", "1", "--eps", "0.1",
               "--out-dir", str(tmp_path)])
    assert rc == 1
    assert json.loads(capsys.readouterr().out)["ok"] is False


def test_cli_transform_from_trace(tmp_path, capsys):
    t = np.linspace(0, 5, 21)
    tr = EvolutionTrace(t, np.ones_like(t), 0 * t, 0 * t, np.ones_like(t), 0 * t)
    echo = parse_config({"n": 20, "p": 3}).as_dict()
    emit_results(tr, "csv", tmp_path / "trace.csv", echo)
    rc = main(["transform", "--n", "20", "--p", "3", "--from-trace", str(tmp_path / "trace.csv"),
               "--json", str(tmp_path / "t.json")])
    assert rc == 0
    res = json.loads((tmp_path / "t.json").read_text())["result"]
    assert res["tau"][0] == 0.0 and res["roundtrip_error"] <= 1e-12
