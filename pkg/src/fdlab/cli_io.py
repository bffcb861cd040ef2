"""Run configuration parsing and deterministic result serialization."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exponents import Params, compute_exponents
from .profiles import RadialProfile
from .radial_pde import EvolutionTrace, SolverConfig

SCHEMA_VERSION = "fdlab/1"
OUTPUT_ENV = "FDLAB_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "fdlab_out"
TRACE_HEADER = "t,v_center,sup_dev"
PROFILE_HEADER = "r,value,deriv"
LINEARIZED_HEADER = "r,value,deriv,value_times_r_gamma"


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending key path."""


# ---------------------------------------------------------------- config blocks

@dataclass(frozen=True)
class SteadyBlock:
    alpha: float = 1.0
    r_max: float = 1e4
    tol: float = 1e-8
    points_per_decade: int = 100


@dataclass(frozen=True)
class LinearizeBlock:
    alpha: float = 1.0
    gamma: float = 6.0
    kappa: float | None = None
    r_max: float = 1e4


@dataclass(frozen=True)
class EvolveBlock:
    alpha: float = 1.0
    kind: str = "capped_above"
    b: float = 0.1
    gamma: float = 6.0
    eps: float = 0.0
    t_end: float = 25.0


@dataclass(frozen=True)
class CertifyBlock:
    lemma: int = 2
    alpha: float = 1.0
    gamma: float = 6.0
    beta: float | None = None
    mu: float | None = None
    A: float | None = None
    B: float | None = None
    b: float = 0.1
    eps: float | None = None
    r_max: float = 1e4
    t_end: float = 40.0


@dataclass(frozen=True)
class RateBlock:
    theorem: int = 1
    alpha: float = 1.0
    b: float = 0.1
    gamma: float = 6.0
    direction: str = "above"
    t_end: float | None = None
    tolerance: float = 0.1


@dataclass(frozen=True)
class InstabilityBlock:
    alpha: float = 1.0
    eps: float = 0.05
    side: str = "above"
    t_end: float = 50.0


@dataclass(frozen=True)
class TransformBlock:
    alpha: float = 1.0
    T: float = 1.0
    t_end: float = 5.0


BLOCKS = {
    "steady": SteadyBlock,
    "linearize": LinearizeBlock,
    "evolve": EvolveBlock,
    "certify": CertifyBlock,
    "rate_experiment": RateBlock,
    "instability": InstabilityBlock,
    "transform": TransformBlock,
}

CHOICES = {
    ("evolve", "kind"): ("above", "capped_above", "below", "exact"),
    ("certify", "lemma"): (2, 4, 6, 7, 8, 9, 10),
    ("rate_experiment", "theorem"): (1, 2),
    ("rate_experiment", "direction"): ("above", "below"),
    ("instability", "side"): ("above", "below"),
}


@dataclass(frozen=True)
class RunConfig:
    params: Params
    solver: SolverConfig = field(default_factory=SolverConfig)
    steady: SteadyBlock = field(default_factory=SteadyBlock)
    linearize: LinearizeBlock = field(default_factory=LinearizeBlock)
    evolve: EvolveBlock = field(default_factory=EvolveBlock)
    certify: CertifyBlock = field(default_factory=CertifyBlock)
    rate_experiment: RateBlock = field(default_factory=RateBlock)
    instability: InstabilityBlock = field(default_factory=InstabilityBlock)
    transform: TransformBlock = field(default_factory=TransformBlock)
    seed: int = 0
    output_dir: str | None = None

    def as_dict(self) -> dict:
        out = {"n": self.params.n, "p": self.params.p, "seed": self.seed,
               "output_dir": self.output_dir, "solver": self.solver.as_dict()}
        for name in BLOCKS:
            out[name] = dataclasses.asdict(getattr(self, name))
        return out

    def run_id(self) -> str:
        return hashlib.sha256(dumps(self.as_dict()).encode()).hexdigest()[:12]

    def resolve_output_dir(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT_DIR))


def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _coerce(path: str, value, annotation: str, default):
    optional = "None" in annotation
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}: null not allowed")
    if annotation.startswith("float"):
        if not _is_number(value) or not math.isfinite(value):
            raise ConfigError(f"{path}: expected a finite number, got {value!r}")
        return float(value)
    if annotation.startswith("int"):
        if not isinstance(value, int) or isinstance(value, bool):
            if _is_number(value) and float(value).is_integer():
                return int(value)
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if annotation.startswith("bool"):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true or false, got {value!r}")
        return value
    if annotation.startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported field type {annotation}")


def _build_block(cls, raw, path: str, name: str = ""):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key (allowed: {', '.join(sorted(known))})")
    kwargs = {}
    for key, f in known.items():
        if key in raw:
            kwargs[key] = _coerce(f"{path}.{key}", raw[key], str(f.type), f.default)
            allowed = CHOICES.get((name, key))
            if allowed is not None and kwargs[key] not in allowed:
                raise ConfigError(f"{path}.{key}: must be one of {list(allowed)}, got {raw[key]!r}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _check_gamma(exps, path: str, gamma) -> None:
    if gamma is None or not exps.rates_available:
        return
    lo, hi = exps.gamma_window
    if not lo < gamma < hi:
        raise ConfigError(f"{path}: gamma={gamma} outside the admissible window "
                          f"({lo:.10g}, {hi:.10g}) for n={exps.n}, p={exps.p}")


def parse_config(raw: dict) -> RunConfig:
    """Validate a decoded config object and fill every default explicitly."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>: expected an object")
    allowed = {"n", "p", "seed", "output_dir", "solver", *BLOCKS}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key (allowed: {', '.join(sorted(allowed))})")
    for key in ("n", "p"):
        if key not in raw:
            raise ConfigError(f"{key}: required")
    n = raw["n"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise ConfigError(f"n: expected an integer, got {n!r}")
    if n < 3:
        raise ConfigError(f"n: must be >= 3, got {n}")
    p = _coerce("p", raw["p"], "float", None)
    if p <= 1:
        raise ConfigError(f"p: must be > 1, got {p}")
    params = Params(n, p)
    exps = compute_exponents(params)
    seed = _coerce("seed", raw.get("seed", 0), "int", 0)
    out_dir = _coerce("output_dir", raw.get("output_dir"), "str | None", None)
    solver = _build_block(SolverConfig, raw.get("solver"), "solver")
    blocks = {name: _build_block(cls, raw.get(name), name, name) for name, cls in BLOCKS.items()}
    for name, blk in blocks.items():
        if hasattr(blk, "gamma"):
            _check_gamma(exps, f"{name}.gamma", blk.gamma)
    return RunConfig(params=params, solver=solver, seed=seed, output_dir=out_dir, **blocks)


def load_raw(path) -> dict:
    """Decode a JSON config file without validating it (duplicate keys rejected)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from None
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a JSON object at the top level")
    return raw


def load_config(path) -> RunConfig:
    return parse_config(load_raw(path))


# ---------------------------------------------------------------- serialization

def fmt_float(x: float) -> str:
    return "%.17g" % (x + 0.0)  # folds -0.0 into 0


def to_jsonable(obj):
    """Plain dict/list/str/number/bool/None view of a result object."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(to_jsonable(x) for x in obj)
    if isinstance(obj, RadialProfile):
        return {"kind": obj.kind, "grid": to_jsonable(obj.grid), "value": to_jsonable(obj.values),
                "deriv": None if obj.derivs is None else to_jsonable(obj.derivs),
                "meta": to_jsonable({k: v for k, v in obj.meta.items() if k != "deviation"})}
    if isinstance(obj, EvolutionTrace):
        return {"times": to_jsonable(obj.times), "center_values": to_jsonable(obj.center_values),
                "center_deviation": to_jsonable(obj.center_deviation),
                "sup_deviation": to_jsonable(obj.sup_deviation),
                "sup_norm": to_jsonable(obj.sup_norm), "status": obj.status.value,
                "flags": sorted(obj.flags), "alpha": obj.alpha,
                "max_newton_residual": obj.max_newton_residual}
    if hasattr(obj, "as_dict"):
        return to_jsonable(obj.as_dict())
    if dataclasses.is_dataclass(obj):
        return to_jsonable({f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)})
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, 17 significant digits, non-finite as null."""
    obj = to_jsonable(obj)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=True)
    if isinstance(obj, list):
        return "[" + ",".join(dumps(x) for x in obj) + "]"
    items = sorted(obj.items())
    return "{" + ",".join(json.dumps(k) + ":" + dumps(v) for k, v in items) + "}"


def envelope(result, config_echo: dict) -> dict:
    return {"schema": SCHEMA_VERSION, "config": config_echo, "result": to_jsonable(result)}


def _csv_rows(obj):
    if isinstance(obj, EvolutionTrace):
        return TRACE_HEADER, zip(obj.times, obj.center_values, obj.sup_deviation)
    if isinstance(obj, RadialProfile):
        deriv = obj.first_derivative()
        gamma = obj.meta.get("gamma")
        if obj.kind == "linearized" and gamma is not None:
            # tail check column: f r^gamma should level off
            return LINEARIZED_HEADER, zip(obj.grid, obj.values, deriv, obj.values * obj.grid**gamma)
        return PROFILE_HEADER, zip(obj.grid, obj.values, deriv)
    raise TypeError(f"CSV output supports traces and profiles, not {type(obj).__name__}")


def render(obj, fmt: str, config_echo: dict | None = None) -> str:
    echo = config_echo or {}
    if fmt == "json":
        return dumps(envelope(obj, echo)) + "\n"
    if fmt == "csv":
        header, rows = _csv_rows(obj)
        lines = [f"# schema {SCHEMA_VERSION}", f"# config {dumps(echo)}", header]
        lines += [",".join(fmt_float(float(x)) for x in row) for row in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")


def emit_results(obj, fmt: str, path, config_echo: dict | None = None) -> Path:
    """Write ``obj`` to ``path`` as CSV (traces, profiles) or JSON (anything)."""
    path = Path(path)
    text = render(obj, fmt, config_echo)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror}") from exc
    return path


def read_csv(path) -> tuple[str, dict, list[str], np.ndarray]:
    """Inverse of the CSV writer: ``(schema, config, columns, data)``."""
    lines = Path(path).read_text().splitlines()
    if len(lines) < 3 or not lines[0].startswith("# schema ") or not lines[1].startswith("# config "):
        raise ValueError(f"{path}: missing schema/config preamble")
    schema = lines[0][len("# schema "):]
    config = json.loads(lines[1][len("# config "):])
    cols = lines[2].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[3:]]).reshape(-1, len(cols))
    return schema, config, cols, data
