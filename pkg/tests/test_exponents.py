import math

import mpmath as mp
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdlab.exponents import (Params, Regime, classify_regime, compute_exponents, gamma_of_kappa,
                             joseph_lundgren_exponent, kappa_of_gamma, sobolev_exponent)

# 50-digit closed-form values (scripts/oracles.py)
ORACLE = {
    (20, 3.0): {"nu": 1.0, "L": 4.1231056256176605498, "p_L_pm1": 51.0,
                "p_S": 1.2222222222222222222, "p_c": 1.5492843974906966023,
                "lambda1": 2.5227744249483388654, "kappa0": 0.58823529411764705882},
    (11, 7.0): {"nu": 0.33333333333333333333, "L": 1.1934067037544125824,
                "p_L_pm1": 20.222222222222222222, "p_S": 1.4444444444444444444,
                "p_c": 6.922024586816337184, "lambda1": 4.0,
                "kappa0": 0.0013736263736263736264},
}


@pytest.mark.parametrize("key", sorted(ORACLE))
def test_exponents_match_high_precision_values(key):
    e = compute_exponents(Params(*key))
    for name, ref in ORACLE[key].items():
        assert getattr(e, name) == pytest.approx(ref, rel=1e-12), name


def test_closed_forms_for_20_3():
    e = compute_exponents(Params(20, 3))
    assert e.lambda1 == pytest.approx((16 - math.sqrt(120)) / 2, rel=1e-14)
    assert e.kappa0 == pytest.approx(10 / 17, rel=1e-14)
    assert e.p_c == pytest.approx((244 + 8 * math.sqrt(19)) / 180, rel=1e-14)
    assert e.gamma_window == pytest.approx((e.nu + e.lambda1, 9.0))
    assert e.regime is Regime.ORDERED


def test_lambda1_exact_for_11_7():
    e = compute_exponents(Params(11, 7))
    assert abs(e.lambda1 - 4.0) / 4.0 <= 1e-12
    assert e.discriminant == pytest.approx(1 / 9, rel=1e-12)
    assert e.p_c == pytest.approx((37 + 8 * math.sqrt(10)) / 9, rel=1e-14)


def test_kappa_gamma_pair_at_20_3():
    e = compute_exponents(Params(20, 3))
    assert kappa_of_gamma(e, 6.0) == pytest.approx(7 / 17, rel=1e-14)
    assert kappa_of_gamma(e, 4.5) == pytest.approx(0.19117647058823529412, rel=1e-13)
    assert gamma_of_kappa(e, 7 / 17) == pytest.approx(6.0, rel=1e-14)


def test_window_endpoints():
    e = compute_exponents(Params(20, 3))
    lo, hi = e.gamma_window
    assert kappa_of_gamma(e, lo, diagnostic=True) == pytest.approx(0.0, abs=1e-14)
    assert kappa_of_gamma(e, hi, diagnostic=True) == pytest.approx(e.kappa0, rel=1e-14)
    assert gamma_of_kappa(e, 0.0) == pytest.approx(lo, rel=1e-14)
    assert gamma_of_kappa(e, e.kappa0 * (1 - 1e-12)) == pytest.approx(hi, rel=1e-5)
    for g in (lo, hi, 2.0, 12.0):
        with pytest.raises(ValueError, match="window"):
            kappa_of_gamma(e, g)


@pytest.mark.parametrize("kappa", [-0.1, 10 / 17, 0.7])
def test_gamma_of_kappa_rejects(kappa):
    with pytest.raises(ValueError):
        gamma_of_kappa(compute_exponents(Params(20, 3)), kappa)


@pytest.mark.parametrize("n,p,regime", [
    (20, 1.4, Regime.INTERSECTING), (20, 3.0, Regime.ORDERED), (8, 3.0, Regime.INTERSECTING),
    (20, 1.1, Regime.NO_GROUND_STATES), (3, 5.0, Regime.INTERSECTING),
])
def test_regimes(n, p, regime):
    assert classify_regime(Params(n, p)) is regime


def test_p_c_infinite_for_small_n():
    e = compute_exponents(Params(8, 3))
    assert e.p_c is None and e.p_c_infinite
    assert not e.rates_available
    with pytest.raises(ValueError, match="p > p_c"):
        kappa_of_gamma(e, 2.0)


def test_p_equal_p_c_is_ordered_without_rates():
    p = joseph_lundgren_exponent(20)
    e = compute_exponents(Params(20, p))
    assert e.regime is Regime.ORDERED
    assert not e.rates_available


@pytest.mark.parametrize("n,p", [(2, 3.0), (20, 1.0), (20, 0.5), (20, float("nan")), (3.5, 2.0),
                                 (True, 2.0)])
def test_params_rejects(n, p):
    with pytest.raises(ValueError):
        Params(n, p)


def rate_params():
    @st.composite
    def build(draw):
        n = draw(st.integers(11, 40))
        p_c = joseph_lundgren_exponent(n)
        p = draw(st.floats(p_c * 1.001, p_c + 6.0))
        return Params(n, p)
    return build()


@given(rate_params(), st.floats(0.01, 0.99))
def test_gamma_kappa_round_trip(params, u):
    e = compute_exponents(params)
    lo, hi = e.gamma_window
    g = lo + u * (hi - lo)
    assert abs(gamma_of_kappa(e, kappa_of_gamma(e, g)) - g) < 1e-10
    k = kappa_of_gamma(e, g)
    assert k > 0
    assert abs(kappa_of_gamma(e, gamma_of_kappa(e, k)) - k) <= 1e-12 * max(k, 1e-3) + 1e-14


@given(rate_params(), st.floats(0.01, 0.98), st.floats(0.001, 0.01))
def test_kappa_increasing_in_gamma(params, u, du):
    e = compute_exponents(params)
    lo, hi = e.gamma_window
    g1 = lo + u * (hi - lo)
    g2 = g1 + du * (hi - lo)
    assert kappa_of_gamma(e, g2) > kappa_of_gamma(e, g1)


@given(rate_params())
def test_identities_and_lambda1_above_one(params):
    e = compute_exponents(params)
    p, nu, n = params.p, e.nu, params.n
    assert p * nu == pytest.approx(nu + 2, rel=1e-12)
    assert p * e.L ** (p - 1) == pytest.approx(e.p_L_pm1, rel=1e-12)
    assert e.p_L_pm1 == pytest.approx(p * nu * (n - 2 - nu), rel=1e-12)
    assert e.lambda1 > 1


@given(rate_params())
def test_against_arbitrary_precision(params):
    with mp.workdps(40):
        n, p = mp.mpf(params.n), mp.mpf(params.p)
        nu = 2 / (p - 1)
        L = (nu * (n - 2 - nu)) ** (1 / (p - 1))
        b = n - 2 - 2 * nu
        lam = (b - mp.sqrt(b * b - 8 * (n - 2 - nu))) / 2
        k0 = (n - 2) ** 2 / (4 * p * L ** (p - 1)) - 1
    e = compute_exponents(params)
    assert e.L == pytest.approx(float(L), rel=1e-13)
    assert e.lambda1 == pytest.approx(float(lam), rel=1e-10)
    assert e.kappa0 == pytest.approx(float(k0), rel=1e-9, abs=1e-15)


@given(st.integers(3, 60))
def test_sobolev_below_joseph_lundgren(n):
    p_c = joseph_lundgren_exponent(n)
    assert p_c is None or sobolev_exponent(n) < p_c
