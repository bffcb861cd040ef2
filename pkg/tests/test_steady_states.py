import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdlab.exponents import Params, compute_exponents
from fdlab.profiles import RadialProfile, sinh_grid
from fdlab.steady_states import (PhiSolution, PositivityLost, count_intersections, default_grid,
                                 fit_tail, ode_residual, phi_singular, singular_profile,
                                 solve_phi)

RADII = np.array([0.5, 1.0, 2.0, 4.0])
# 30-digit Taylor-series integration (scripts/oracles.py)
PHI1_20_3 = np.array([0.99380279054989963, 0.97582258923639435, 0.9119193437420548,
                      0.73874880840505409])
PHI1_20_14 = np.array([0.99377477876838363, 0.97539270139885288, 0.90605234649769085,
                       0.68419676438505754])


@pytest.mark.parametrize("p,ref", [(3.0, PHI1_20_3), (1.4, PHI1_20_14)])
def test_phi_matches_high_precision_oracle(p, ref):
    vals = PhiSolution(Params(20, p), 1.0, 1e3)(RADII)[0]
    np.testing.assert_allclose(vals, ref, rtol=1e-11)


def test_solve_phi_basic_shape(p20_3):
    prof = solve_phi(p20_3, 1.0, 1e4)
    assert prof.values[0] == 1.0
    assert prof.derivs[0] == 0.0
    assert np.all(prof.values > 0)
    assert np.all(np.diff(prof.values) < 0)
    assert prof.meta["residual_ok"]
    assert prof.meta["below_singular"]


def test_residual_converges_at_fourth_order(p20_3):
    res = [solve_phi(p20_3, 1.0, 1e3, grid=default_grid(1e3, ppd)).meta["max_rel_residual"]
           for ppd in (25, 50, 100)]
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    np.testing.assert_allclose(orders, 4.0, rtol=0.2)


@pytest.mark.parametrize("alpha", [0.5, 2.0])
def test_scaling_symmetry(p20_3, alpha):
    base = solve_phi(p20_3, 1.0, 1e4)
    scaled = solve_phi(p20_3, alpha, 1e3)
    r = np.geomspace(1e-2, 1e3, 300)
    lhs = scaled(r)
    rhs = alpha * base(alpha ** ((p20_3.p - 1) / 2) * r)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-6)


def test_singular_solution(p20_3):
    assert phi_singular(p20_3, 1.0) == pytest.approx(math.sqrt(17), rel=1e-15)
    prof = singular_profile(p20_3, np.array([0.5, 1.0, 10.0]))
    res = ode_residual(p20_3, prof) / prof.values**p20_3.p
    assert np.max(np.abs(res)) <= 1e-12
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            phi_singular(p20_3, bad)


def test_positivity_lost_below_sobolev():
    with pytest.raises(PositivityLost):
        solve_phi(Params(20, 1.1), 1.0, 1e3)


@pytest.mark.parametrize("kwargs", [{"r_max": 1.0}, {"tol": 1e-4}, {"tol": 1e-14}])
def test_solve_phi_rejects(p20_3, kwargs):
    args = {"r_max": 1e3, **kwargs}
    with pytest.raises(ValueError):
        solve_phi(p20_3, 1.0, **args)


def test_single_power_tail_exponent(p20_3):
    fit = fit_tail(solve_phi(p20_3, 1.0, 1e4), "single_power", window=(1e2, 1e3))
    assert fit.exponent == pytest.approx(1.0, abs=1e-3)


def test_two_term_fit_recovers_L(p20_3):
    e = compute_exponents(p20_3)
    fit = fit_tail(solve_phi(p20_3, 1.0, 1e4), "two_term", window=(1e2, 1e3), fix_leading=False)
    assert fit.leading == pytest.approx(e.L, rel=5e-3)
    assert fit.coefficient > 0


def test_two_term_on_singular_profile(p20_3):
    prof = singular_profile(p20_3, sinh_grid(1e3, 0.01)[1:])
    fit = fit_tail(prof, "two_term", window=(1e1, 1e3), fix_leading=False)
    assert fit.coefficient == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(ValueError, match="nonpositive gap"):
        fit_tail(prof, "two_term", window=(1e1, 1e3))


def test_a_alpha_scaling_invariant(p20_3):
    e = compute_exponents(p20_3)
    alphas = np.array([0.5, 1.0, 2.0, 4.0])
    a = np.array([fit_tail(solve_phi(p20_3, al, 1e4), "two_term", window=(1e2, 1e3)).coefficient
                  for al in alphas])
    assert np.all(np.diff(a) < 0)
    inv = a * alphas ** (e.lambda1 * (p20_3.p - 1) / 2)
    assert np.ptp(inv) / np.mean(inv) < 1e-2


@pytest.mark.parametrize("window", [(1e2, 2e2), (1e3, 1e2), (1e2, 1e5)])
def test_fit_tail_rejects_windows(p20_3, window):
    with pytest.raises(ValueError):
        fit_tail(solve_phi(p20_3, 1.0, 1e4), "single_power", window=window)


def test_intersections_by_regime(p20_3, p20_14):
    a = solve_phi(p20_3, 1.0, 1e3)
    b = solve_phi(p20_3, 2.0, 1e3, grid=a.grid)
    assert count_intersections(a, b) == 0
    assert count_intersections(a, a) == 0
    c = solve_phi(p20_14, 1.0, 1e3)
    d = solve_phi(p20_14, 2.0, 1e3, grid=c.grid)
    assert count_intersections(c, d) >= 1


def test_intersections_disjoint_grids_warn(p20_3, caplog):
    a = RadialProfile(np.array([0.0, 1.0, 2.0]), np.array([3.0, 2.0, 1.0]))
    b = RadialProfile(np.array([5.0, 6.0, 7.0]), np.array([3.0, 2.0, 1.0]))
    assert count_intersections(a, b) == 0
    assert "overlap" in caplog.text or "disjoint" in caplog.text


@given(st.floats(0.3, 3.0), st.floats(1.05, 3.0))
def test_ordering_above_p_c(alpha, factor):
    params = Params(20, 3.0)
    r = np.geomspace(1e-3, 1e3, 200)
    lo = PhiSolution(params, alpha, 1e3)(r)[0]
    hi = PhiSolution(params, alpha * factor, 1e3)(r)[0]
    assert np.all(lo < hi)
    assert np.all(hi < phi_singular(params, r))


def test_tail_deviation_matches_direct(phi1):
    e = phi1.exps
    r = np.array([0.5, 5.0, 50.0, 500.0])
    direct = r**e.nu * phi1(r)[0] - e.L
    np.testing.assert_allclose(phi1.tail_deviation(r), direct, rtol=1e-8)
