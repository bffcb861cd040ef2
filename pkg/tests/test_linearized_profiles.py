import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdlab.exponents import Params, compute_exponents
from fdlab.linearized_profiles import (FSolution, linear_residual, solve_f, substitution_check,
                                       zero_order_coefficient)
from fdlab.steady_states import PhiSolution, fit_tail

RADII = np.array([0.5, 1.0, 2.0, 4.0])
# coupled (phi, f) Taylor-series integration at 30 digits (scripts/oracles.py)
F_1_7_17 = np.array([0.97399144989109128, 0.9011978216559579, 0.67311162270879769,
                     0.26167886418549939])


@pytest.fixture(scope="module")
def lp(p20_3):
    return solve_f(p20_3, 1.0, 7 / 17, 1e4)


def test_f_matches_high_precision_oracle(p20_3):
    f = FSolution(PhiSolution(p20_3, 1.0, 1e3), 7 / 17)
    np.testing.assert_allclose(f(RADII)[0], F_1_7_17, rtol=1e-11)


def test_initial_conditions_and_positivity(lp):
    assert lp.base.values[0] == 1.0
    assert lp.base.derivs[0] == 0.0
    assert np.all(lp.base.values > 0)
    assert lp.base.meta["residual_ok"]
    assert lp.gamma == pytest.approx(6.0, rel=1e-14)


def test_tail_slope_is_minus_gamma(lp):
    fit = fit_tail(lp.base, "single_power", window=(1e2, 1e4))
    assert fit.exponent == pytest.approx(6.0, rel=0.02)


def test_two_sided_power_bounds(lp):
    c_lo, c_hi = lp.bound_constants
    assert 0 < c_lo < c_hi < np.inf
    r = lp.base.grid
    out = r > 1
    scaled = lp.base.values[out] * r[out] ** lp.gamma
    assert np.all(scaled >= c_lo * (1 - 1e-12)) and np.all(scaled <= c_hi * (1 + 1e-12))


@pytest.mark.parametrize("frac", [0.1, 0.5, 0.9])
def test_tail_exponent_across_kappa(p20_3, frac):
    e = compute_exponents(p20_3)
    prof = solve_f(p20_3, 1.0, frac * e.kappa0, 1e4)
    fit = fit_tail(prof.base, "single_power", window=(1e2, 1e4))
    assert fit.exponent == pytest.approx(prof.gamma, rel=0.02)


@pytest.mark.parametrize("kappa", [0.0, -0.1, 10 / 17, 10 / 17 + 0.05])
def test_kappa_outside_range_rejected(p20_3, kappa):
    with pytest.raises(ValueError, match="kappa"):
        solve_f(p20_3, 1.0, kappa, 1e3)


def test_rates_unavailable_below_p_c(p20_14):
    with pytest.raises(ValueError, match="p_c"):
        solve_f(p20_14, 1.0, 0.1, 1e3)


def test_substitution_theta_zero_is_linear_residual(p20_3, lp):
    res0 = substitution_check(lp, 0.0, pointwise=True)
    lin = linear_residual(p20_3, lp.base, lp.solution.phi, lp.kappa)[lp.base.grid > 0][2:-2]
    np.testing.assert_allclose(res0, lin, atol=1e-13)


@pytest.mark.parametrize("theta", [1.0, 6.0])
def test_substitution_residual_bounded_by_original(lp, theta):
    res0 = np.abs(substitution_check(lp, 0.0, pointwise=True))
    res = np.abs(substitution_check(lp, theta, pointwise=True))
    assert np.all(res <= 10 * res0 + 1e-13)


def test_zero_order_coefficient_vanishes_on_singular_solution(p20_3):
    e = compute_exponents(p20_3)
    kappa = 7 / 17
    r = np.geomspace(1e-2, 1e4, 50)
    coef = zero_order_coefficient(p20_3, kappa, 6.0, r, e.L * r ** (-e.nu))
    scale = (kappa + 1) * e.p_L_pm1
    assert np.max(np.abs(coef)) / scale < 1e-12


@given(st.floats(0.3, 3.0))
def test_alpha_scaling(alpha):
    params = Params(20, 3.0)
    kappa = 7 / 17
    base = FSolution(PhiSolution(params, 1.0, 1e4), kappa)
    f = FSolution(PhiSolution(params, alpha, 1e3), kappa)
    r = np.geomspace(1e-2, 1e2, 40)
    s = alpha ** ((params.p - 1) / 2)
    np.testing.assert_allclose(f(r)[0], base(s * r)[0], rtol=1e-4)


@given(st.floats(0.05, 0.95))
def test_positive_for_every_admissible_kappa(frac):
    params = Params(20, 3.0)
    kappa = frac * compute_exponents(params).kappa0
    prof = solve_f(params, 1.0, kappa, 1e3, points_per_decade=50)
    assert np.all(prof.base.values > 0)
