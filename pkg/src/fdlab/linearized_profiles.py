"""Separable profiles ``f_{alpha,kappa}`` of the linearisation around ``phi_alpha``.

``f`` solves ``f_rr + (n-1)/r f_r + (kappa+1) p phi_alpha^(p-1) f = 0`` with
``f(0) = 1``, ``f_r(0) = 0`` and decays like ``r^-gamma(kappa)``. Far out the
solver integrates ``h = r^gamma f`` in ``s = ln r``; by the choice of gamma
the zero-order coefficient of the ``h`` equation only involves the tail gap
of ``phi_alpha``, so ``h`` tends to a constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .exponents import Params, compute_exponents, gamma_of_kappa
from .profiles import RadialProfile, radial_laplacian
from .steady_states import RTOL, PhiSolution, default_grid


class LinearizedPositivityLost(RuntimeError):
    """``f`` reached zero, which contradicts positivity for ``kappa < kappa0``."""


class FSolution:
    """Continuous evaluator ``r -> (f(r), f'(r))`` with ``f''`` from the ODE."""

    def __init__(self, phi: PhiSolution, kappa: float, r_max: float | None = None,
                 rtol: float = RTOL):
        params, exps = phi.params, phi.exps
        exps.require_rates()
        if not 0 < kappa < exps.kappa0:
            raise ValueError(f"kappa must lie in (0, {exps.kappa0:.10g}), got {kappa}")
        self.phi, self.params, self.exps = phi, params, exps
        self.kappa = float(kappa)
        self.gamma = gamma_of_kappa(exps, kappa)
        self.r_max = phi.r_max if r_max is None else min(float(r_max), phi.r_max)
        n, p, a = params.n, params.p, phi.alpha
        k1p = (kappa + 1.0) * p
        self.coef = k1p
        self.r0 = phi.r0
        self.r1 = min(phi.r1, self.r_max)
        s0, s1, s_end = math.log(self.r0), math.log(self.r1), math.log(self.r_max)
        self.f0 = 1.0 - k1p * a ** (p - 1) * self.r0**2 / (2 * n)
        self.fr_slope = -k1p * a ** (p - 1) / n

        def core_rhs(s, y):
            f, psi = y
            ph = phi.core.sol(s)[0]
            return [psi, -(n - 2) * psi - k1p * math.exp(2 * s) * ph ** (p - 1) * f]

        def hits_zero(s, y):
            return y[0]
        hits_zero.terminal = True
        hits_zero.direction = -1

        self.core = solve_ivp(core_rhs, (s0, s1), [self.f0, self.fr_slope * self.r0**2],
                              method="DOP853", rtol=rtol, atol=1e-14, dense_output=True,
                              events=hits_zero)
        if self.core.status != 0:
            raise LinearizedPositivityLost(
                f"f_(alpha,kappa) reached zero near r={math.exp(self.core.t[-1]):.4g}")

        self.tail = None
        if s_end > s1:
            g, L = self.gamma, exps.L
            c0 = k1p * exps.p_L_pm1 / p  # (kappa+1) p L^(p-1)
            f1, psi1 = self.core.y[:, -1]
            e1 = math.exp(g * s1)
            h1, dh1 = e1 * f1, e1 * (psi1 + g * f1)

            def tail_rhs(s, y):
                h, dh = y
                z = phi.tail.sol(s)[0]
                gap = math.expm1((p - 1) * math.log1p(z / L))
                return [dh, -(n - 2 - 2 * g) * dh - c0 * gap * h]

            def tail_zero(s, y):
                return y[0]
            tail_zero.terminal = True
            tail_zero.direction = -1

            self.tail = solve_ivp(tail_rhs, (s1, s_end), [h1, dh1], method="DOP853",
                                  rtol=rtol, atol=1e-14 * abs(h1), dense_output=True,
                                  events=tail_zero)
            if self.tail.status != 0:
                raise LinearizedPositivityLost(
                    f"f_(alpha,kappa) reached zero near r={math.exp(self.tail.t[-1]):.4g}")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        if np.any(r < 0) or np.any(r > self.r_max * (1 + 1e-12)):
            raise ValueError(f"r outside [0, {self.r_max}]")
        val = np.empty_like(r)
        der = np.empty_like(r)
        inner = r < self.r0
        val[inner] = 1.0 + 0.5 * self.fr_slope * r[inner] ** 2
        der[inner] = self.fr_slope * r[inner]
        mid = (~inner) & (r <= self.r1)
        if np.any(mid):
            f, psi = self.core.sol(np.log(r[mid]))
            val[mid] = f
            der[mid] = psi / r[mid]
        far = r > self.r1
        if np.any(far):
            g = self.gamma
            s = np.log(np.minimum(r[far], self.r_max))
            h, dh = self.tail.sol(s)
            w = np.exp(-g * s)
            val[far] = w * h
            der[far] = w * (dh - g * h) / r[far]
        if scalar:
            return val[0], der[0]
        return val, der

    def scaled_tail(self, r) -> np.ndarray:
        """``h = r^gamma f`` (accurate far out, where ``f`` itself is tiny)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        far = r > self.r1
        if np.any(far):
            out[far] = self.tail.sol(np.log(r[far]))[0]
        if np.any(~far):
            out[~far] = r[~far] ** self.gamma * self(r[~far])[0]
        return out

    def second(self, r) -> np.ndarray:
        """``f_rr`` recovered from the ODE."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        f, fr = self(r)
        ph = self.phi(r)[0]
        n, p = self.params.n, self.params.p
        out = np.empty_like(r)
        nz = r > 0
        out[nz] = -(n - 1) * fr[nz] / r[nz] - self.coef * ph[nz] ** (p - 1) * f[nz]
        out[~nz] = self.fr_slope
        return out


@dataclass(frozen=True, eq=False)
class LinearizedProfile:
    base: RadialProfile
    alpha: float
    kappa: float
    gamma: float
    bound_constants: tuple[float, float]
    params: Params
    solution: FSolution

    @property
    def bound_ratio(self) -> float:
        return self.bound_constants[1] / self.bound_constants[0]


def solve_f(params: Params, alpha: float, kappa: float, r_max: float, tol: float = 1e-8,
            phi: PhiSolution | None = None, grid: np.ndarray | None = None,
            points_per_decade: int = 200) -> LinearizedProfile:
    """Solve for ``f_{alpha,kappa}`` on ``[0, r_max]``.

    ``phi`` may be supplied to reuse a steady-state solution; it must cover
    ``r_max``. ``tol`` bounds the nodal residual of the linear ODE relative to
    ``(kappa+1) p alpha^(p-1)``.
    """
    exps = compute_exponents(params)
    exps.require_rates()
    if not 0 < kappa < exps.kappa0:
        raise ValueError(f"kappa must lie in (0, kappa0={exps.kappa0:.10g}), got {kappa}")
    rtol = min(RTOL, max(1e-13, tol * 1e-2))
    if phi is None:
        phi = PhiSolution(params, alpha, r_max, rtol=rtol, atol=rtol * 1e-2)
    elif phi.r_max < r_max * (1 - 1e-12) or phi.alpha != alpha:
        raise ValueError("supplied phi does not match alpha or does not reach r_max")
    sol = FSolution(phi, kappa, r_max, rtol=rtol)
    if grid is None:
        grid = default_grid(r_max, points_per_decade, scale=alpha ** (-1.0 / exps.nu))
    grid = np.asarray(grid, dtype=float)
    values, derivs = sol(grid)
    if np.any(values <= 0):
        raise LinearizedPositivityLost("f_(alpha,kappa) is not positive on the grid")
    base = RadialProfile(grid, values, derivs, kind="linearized",
                         meta={"n": params.n, "p": params.p, "alpha": float(alpha),
                               "kappa": float(kappa), "gamma": sol.gamma}, dense=sol)
    res = linear_residual(params, base, phi, kappa)[2:-2]
    scale = (kappa + 1) * params.p * alpha ** (params.p - 1)
    base.meta["max_rel_residual"] = float(np.max(np.abs(res))) / scale
    base.meta["residual_ok"] = base.meta["max_rel_residual"] <= tol
    out = grid > 1
    h = sol.scaled_tail(grid[out])
    bounds = (float(h.min()), float(h.max())) if h.size else (math.nan, math.nan)
    return LinearizedProfile(base, float(alpha), float(kappa), sol.gamma, bounds, params, sol)


def linear_residual(params: Params, base: RadialProfile, phi, kappa: float) -> np.ndarray:
    """Nodal residual of the linear ODE from the stored ``f_r`` column."""
    r = base.grid
    lap = radial_laplacian(params.n, r, base.first_derivative(), base.second_derivative())
    ph = phi(r)[0]
    return lap + (kappa + 1) * params.p * ph ** (params.p - 1) * base.values


def zero_order_coefficient(params: Params, kappa: float, theta: float, r, phi_values):
    """``theta (theta + 2 - n) + (kappa+1) p phi^(p-1) r^2`` of the ``h = r^theta f`` equation."""
    r = np.asarray(r, dtype=float)
    return theta * (theta + 2 - params.n) + (kappa + 1) * params.p * \
        np.asarray(phi_values, dtype=float) ** (params.p - 1) * r**2


def substitution_check(profile: LinearizedProfile, theta: float,
                       pointwise: bool = False):
    """Residual of the ODE satisfied by ``h = r^theta f``.

    ``h``, ``h_r`` and ``h_rr`` are assembled from the nodal ``f``, ``f_r``
    and the differenced ``f_rr`` by the product rule, then inserted into the
    transformed equation with its own coefficients. The result is divided by
    ``r^theta`` so that it is comparable node by node with the residual of
    the ``f`` equation. Returns the max over interior nodes with ``r > 0``,
    or the nodal array when ``pointwise``.
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    params = profile.params
    n = params.n
    base = profile.base
    nz = base.grid > 0
    r = base.grid[nz]
    f = base.values[nz]
    fr = base.first_derivative()[nz]
    frr = base.second_derivative()[nz]
    # everything below is h, h_r, h_rr scaled by r^-theta
    h = f
    hr = fr + theta * f / r
    hrr = frr + 2 * theta * fr / r + theta * (theta - 1) * f / r**2
    ph = profile.solution.phi(r)[0]
    coef = zero_order_coefficient(params, profile.kappa, theta, r, ph)
    res = hrr + (n - 1 - 2 * theta) / r * hr + coef / r**2 * h
    res = res[2:-2]
    if pointwise:
        return res
    return float(np.max(np.abs(res)))
