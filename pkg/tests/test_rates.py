import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdlab.exponents import Params
from fdlab.radial_pde import EvolutionTrace
from fdlab.rates import (RateFit, Verdict, _verdict, default_t_end, fit_rate, run_instability,
                         run_theorem1, run_theorem2, separable_solution, suggest_radius, t_of_tau,
                         tau_of_t, to_original_variables, u_of_v, v_of_u)

M, T = 1 / 3, 1.0


def synthetic(dev, t=None):
    t = np.linspace(0, 30, 301) if t is None else t
    dev = np.asarray(dev(t), dtype=float)
    return EvolutionTrace(t, 1 + dev, dev, np.abs(dev), 1 + np.abs(dev), 0 * t)


def test_fit_rate_exact_exponential():
    tr = synthetic(lambda t: 3 * np.exp(-0.7 * t))
    for ch in ("center", "sup"):
        fit = fit_rate(tr, ch)
        assert fit.rate == pytest.approx(0.7, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.window == (10.0, 27.0)


def test_fit_rate_below_direction_inferred():
    tr = synthetic(lambda t: -2 * np.exp(-0.25 * t))
    assert fit_rate(tr).rate == pytest.approx(0.25, abs=1e-12)


def test_constant_trace_has_zero_rate():
    fit = fit_rate(synthetic(lambda t: 0.5 + 0 * t))
    assert fit.rate == 0.0 and fit.r_squared == 0.0


def test_sign_change_rejected():
    with pytest.raises(ValueError, match="nonpositive"):
        fit_rate(synthetic(lambda t: np.exp(-t) * np.cos(t)), direction="above")


def test_too_few_samples():
    with pytest.raises(ValueError, match="samples"):
        fit_rate(synthetic(lambda t: np.exp(-t), np.linspace(0, 30, 12)))


def test_bad_channel_and_window():
    tr = synthetic(lambda t: np.exp(-t))
    with pytest.raises(ValueError):
        fit_rate(tr, "middle")
    with pytest.raises(ValueError):
        fit_rate(tr, window=(5, 5))


def test_ratefit_invariants():
    with pytest.raises(ValueError):
        RateFit(0.1, 0.0, (1.0, 0.5), 0.9, 20)
    with pytest.raises(ValueError):
        RateFit(0.1, 0.0, (0.0, 1.0), 1.5, 20)


def test_low_r_squared_is_inconclusive():
    fits = [RateFit(0.4, 0.0, (0, 1), 0.99, 20)]
    assert _verdict(fits, 0.4, 0.1) is Verdict.INCONCLUSIVE
    fits = [RateFit(0.4, 0.0, (0, 1), 0.9999, 20)]
    assert _verdict(fits, 0.4, 0.1) is Verdict.PASS
    assert _verdict(fits, 0.2, 0.1) is Verdict.FAIL
    assert _verdict(fits, 1.0, 0.1, lower_only=True) is Verdict.PASS


def test_default_t_end():
    assert default_t_end(7 / 17) == 25.0
    assert default_t_end(0.1) == pytest.approx(80.0)


def test_suggest_radius(p20_3):
    assert suggest_radius(p20_3, 6.0, 50.0) == pytest.approx(math.exp(2 * 50 * 6 / 51))
    assert suggest_radius(p20_3, 6.0, 25.0) == 1e4
    assert suggest_radius(p20_3, 9.5, 25.0) == 1e12
    assert suggest_radius(p20_3, 4.0, 1.0) == 1e4


@pytest.fixture(scope="module")
def gamma6_above(p20_3):
    return run_theorem1(p20_3, 1.0, 0.1, 6.0, "above")


def test_theorem1_gamma6(gamma6_above):
    rep, trace = gamma6_above
    assert rep.verdict is Verdict.PASS
    assert 0.37 <= rep.fitted_rate_center.rate <= 0.45
    assert rep.predicted_rate == pytest.approx(7 / 17)
    assert trace.status.value == "OK"
    d = rep.as_dict()
    assert d["verdict"] == "PASS" and d["config_echo"]["gamma"] == 6.0


def test_theorem1_rate_below_prediction_satisfies_lower_bound(gamma6_above):
    rep, _ = gamma6_above
    assert rep.fitted_rate_center.rate <= rep.predicted_rate * 1.1


@pytest.mark.slow
def test_rate_independent_of_amplitude(p20_3):
    rates = [run_theorem1(p20_3, 1.0, b, 6.0, "above")[0].fitted_rate_center.rate
             for b in (0.05, 0.1, 0.2)]
    assert np.ptp(rates) / np.mean(rates) < 0.03


def test_theorem2_below(p20_3):
    rep, _ = run_theorem2(p20_3, 1.0, 0.1, 6.0, "below")
    assert rep.verdict is Verdict.PASS
    assert rep.theorem == 2


def test_rate_experiment_rejects_bad_direction(p20_3):
    with pytest.raises(ValueError):
        run_theorem1(p20_3, 1.0, 0.1, 6.0, "sideways")


def test_instability_needs_intersecting_regime(p20_3):
    with pytest.raises(ValueError, match="INTERSECTING"):
        run_instability(p20_3, 1.0, 0.05, "above")
    with pytest.raises(ValueError):
        run_instability(Params(20, 1.4), 1.0, 0.0, "above")


def test_time_map_endpoints():
    assert tau_of_t(0.0, M, T) == 0.0
    assert float(tau_of_t(1e6, M, T)) <= T
    assert float(tau_of_t(60.0, M, T)) == pytest.approx(T, rel=1e-9)


@given(st.floats(0.0, 0.999), st.floats(0.1, 0.9), st.floats(0.1, 10.0))
def test_tau_round_trip(frac, m, TT):
    tau = frac * TT
    assert float(tau_of_t(t_of_tau(tau, m, TT), m, TT)) == pytest.approx(tau, abs=1e-12 * TT)


@given(st.floats(0.0, 20.0), st.floats(0.01, 10.0))
def test_u_v_round_trip(t, v):
    assert float(v_of_u(u_of_v(v, t, M, T), t, M, T)) == pytest.approx(v, rel=1e-12)


def test_u_vanishes_at_extinction():
    u = separable_solution(np.array([1.0]), np.array([0.0, 0.5, 0.999999, T]), M, T)
    assert u[0] == pytest.approx((1 - M) ** (1 / (1 - M)))
    assert np.all(np.diff(u) < 0) and u[-1] == 0.0


@pytest.mark.parametrize("m", [0.0, 1.0, 1.5, -0.2])
def test_m_outside_unit_interval(m):
    with pytest.raises(ValueError):
        tau_of_t(1.0, m, T)


def test_nonpositive_T_rejected():
    with pytest.raises(ValueError):
        t_of_tau(0.5, M, 0.0)


def test_original_trace_round_trip():
    # tau crowds against T at late times, so keep t moderate
    tr = synthetic(lambda t: np.exp(-0.4 * t), np.linspace(0, 10, 101))
    ot = to_original_variables(tr, M, T)
    t_back, v_back = ot.to_rescaled()
    np.testing.assert_allclose(v_back, tr.center_values, rtol=1e-12)
    assert ot.tau[0] == 0.0 and np.all(np.diff(ot.tau) > 0)
