import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdlab.profiles import RadialProfile, fd_derivative, pow_diff, sinh_grid


def test_sinh_grid_endpoints_and_spacing():
    r = sinh_grid(1e4, 0.01)
    assert r[0] == 0.0 and r[-1] == 1e4
    assert np.all(np.diff(r) > 0)
    assert np.sum(r <= 1.0) >= 20


@pytest.mark.parametrize("grid,values,kind", [
    ([0.0, 1.0, 1.0], [1.0, 2.0, 3.0], "snapshot"),
    ([0.0, 1.0], [1.0, np.nan], "snapshot"),
    ([0.0, 1.0], [1.0, 2.0, 3.0], "snapshot"),
    ([0.0, 1.0, 2.0], [1.0, 2.0, 3.0], "steady_state"),
    ([0.0, 1.0, 2.0], [3.0, 2.0, 1.0], "bogus"),
])
def test_invalid_profiles_rejected(grid, values, kind):
    with pytest.raises(ValueError):
        RadialProfile(np.array(grid), np.array(values), kind=kind)


def test_no_extrapolation():
    prof = RadialProfile(np.linspace(0, 1, 11), np.linspace(1, 0, 11))
    with pytest.raises(ValueError, match="outside"):
        prof(1.5)
    assert prof(0.55) == pytest.approx(0.45)


def test_profiles_are_immutable():
    prof = RadialProfile(np.linspace(0, 1, 5), np.ones(5))
    with pytest.raises(ValueError):
        prof.values[0] = 2.0


@given(st.integers(0, 4))
def test_fd_derivative_exact_on_quartics(deg):
    x = np.sort(np.concatenate([[0.0], np.geomspace(1e-2, 3.0, 40)]))
    y = x**deg
    exact = deg * x ** max(deg - 1, 0) if deg else np.zeros_like(x)
    np.testing.assert_allclose(fd_derivative(x, y, 1), exact, atol=1e-9)


@given(st.floats(1e-3, 10.0), st.floats(-0.999, 5.0), st.floats(0.2, 4.0))
def test_pow_diff_matches_direct(y, rel, q):
    x = y * (1 + rel)
    direct = x**q - y**q
    got = pow_diff(np.array([x]), np.array([y]), q)[0]
    assert got == pytest.approx(direct, rel=1e-9, abs=1e-12 * max(x, y) ** q)
