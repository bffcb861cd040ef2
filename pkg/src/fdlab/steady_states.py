"""Regular steady states ``phi_alpha`` of ``Delta phi + phi^p = 0``.

The integration runs in ``s = ln r``. Near the core the unknowns are
``(phi, r phi_r)``; past a switch radius the Emden-Fowler deviation
``z = r^nu phi - L`` is integrated instead, so that the far-field gap
``L r^-nu - phi`` is carried without cancellation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .exponents import ExponentSet, Params, Regime, compute_exponents
from .profiles import RadialProfile, radial_laplacian, sinh_grid

log = logging.getLogger(__name__)

TAYLOR_RADIUS = 1e-3
SWITCH_SCALE = 5.0
RTOL = 1e-10
ATOL = 1e-12
# the far-field unknown decays like r^-lambda1; keep its error relative
ATOL_TAIL = 1e-40
MAX_POINTS_PER_DECADE = 1600


class PositivityLost(RuntimeError):
    """The integrated profile reached zero (p below p_S, or solver failure)."""


@dataclass(frozen=True)
class TailFit:
    exponent: float
    coefficient: float
    window: tuple[float, float]
    max_rel_residual: float
    model: str = "single_power"
    leading: float | None = None
    n_points: int = 0


class PhiSolution:
    """Continuous evaluator ``r -> (phi_alpha(r), phi_alpha'(r))``."""

    def __init__(self, params: Params, alpha: float, r_max: float,
                 rtol: float = RTOL, atol: float = ATOL, r0: float = TAYLOR_RADIUS):
        if alpha <= 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        exps = compute_exponents(params)
        if exps.regime is Regime.NO_GROUND_STATES:
            log.warning("p=%s < p_S=%s: no positive entire steady state expected",
                        params.p, exps.p_S)
        self.params, self.exps, self.alpha = params, exps, float(alpha)
        n, p, nu = params.n, params.p, exps.nu
        self.r_max = float(r_max)
        # core length scale of phi_alpha is alpha^(-1/nu)
        core = alpha ** (-1.0 / nu)
        self.r0 = min(r0 * core, 0.5 * r_max)
        # no singular solution below p_S: the far-field variables do not exist
        self.r1 = min(SWITCH_SCALE * core, r_max) if math.isfinite(exps.L) else self.r_max
        s0, s1, s_end = math.log(self.r0), math.log(self.r1), math.log(self.r_max)

        phi0 = alpha - alpha**p * self.r0**2 / (2 * n)
        psi0 = -(alpha**p) * self.r0**2 / n

        def core_rhs(s, y):
            phi, psi = y
            return [psi, -(n - 2) * psi - math.exp(2 * s) * abs(phi) ** (p - 1) * phi]

        def hits_zero(s, y):
            return y[0]
        hits_zero.terminal = True
        hits_zero.direction = -1

        self.core = solve_ivp(core_rhs, (s0, s1), [phi0, psi0], method="DOP853",
                              rtol=rtol, atol=atol * alpha, dense_output=True,
                              events=hits_zero)
        if self.core.status != 0:
            raise PositivityLost(
                f"phi_alpha reached zero near r={math.exp(self.core.t[-1]):.4g} "
                f"(alpha={alpha}, p={p}, p_S={exps.p_S:.6g})")

        self.tail = None
        if s_end > s1:
            L = exps.L
            Lq = L ** (p - 1)
            phi1, psi1 = self.core.y[:, -1]
            e1 = math.exp(nu * s1)
            z1 = e1 * phi1 - L
            dz1 = e1 * (psi1 + nu * phi1)

            def tail_rhs(s, y):
                z, dz = y
                u = L + z
                # nu(n-2-nu) u - u^p written as -u L^(p-1) expm1((p-1) log(u/L))
                src = -u * Lq * math.expm1((p - 1) * math.log1p(z / L)) if u > 0 else -1e300
                return [dz, -(n - 2 - 2 * nu) * dz + src]

            def tail_zero(s, y):
                return L + y[0]
            tail_zero.terminal = True
            tail_zero.direction = -1

            self.tail = solve_ivp(tail_rhs, (s1, s_end), [z1, dz1], method="DOP853",
                                  rtol=rtol, atol=ATOL_TAIL, dense_output=True,
                                  events=tail_zero)
            if self.tail.status != 0:
                raise PositivityLost(
                    f"phi_alpha reached zero near r={math.exp(self.tail.t[-1]):.4g}")

    def deviation(self, r) -> np.ndarray:
        """Far-field ``z = r^nu phi - L`` on ``r >= r1`` (for tail fits)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.tail is None or np.any(r < self.r1):
            raise ValueError("deviation is only available beyond the switch radius")
        return self.tail.sol(np.log(r))[0]

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        if np.any(r < 0) or np.any(r > self.r_max * (1 + 1e-12)):
            raise ValueError(f"r outside [0, {self.r_max}]")
        n, p, a = self.params.n, self.params.p, self.alpha
        val = np.empty_like(r)
        der = np.empty_like(r)
        inner = r < self.r0
        val[inner] = a - a**p * r[inner] ** 2 / (2 * n)
        der[inner] = -(a**p) * r[inner] / n
        mid = (~inner) & (r <= self.r1)
        if np.any(mid):
            s = np.log(r[mid])
            phi, psi = self.core.sol(s)
            val[mid] = phi
            der[mid] = psi / r[mid]
        far = r > self.r1
        if np.any(far):
            nu, L = self.exps.nu, self.exps.L
            s = np.log(np.minimum(r[far], self.r_max))
            z, dz = self.tail.sol(s)
            w = np.exp(-nu * s)
            val[far] = w * (L + z)
            der[far] = w * (dz - nu * (L + z)) / r[far]
        if scalar:
            return val[0], der[0]
        return val, der

    def tail_deviation(self, r) -> np.ndarray:
        """``r^nu phi(r) - L`` on any ``r > 0``; exact far field beyond ``r1``."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        far = r > self.r1
        if np.any(far):
            out[far] = self.tail.sol(np.log(np.minimum(r[far], self.r_max)))[0]
        if np.any(~far):
            out[~far] = r[~far] ** self.exps.nu * self(r[~far])[0] - self.exps.L
        return out

    def gap_to_singular(self, r, eps: float = 0.0) -> np.ndarray:
        """``L (r+eps)^-nu - phi(r)``, free of cancellation in the far field."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        nu, L = self.exps.nu, self.exps.L
        out = np.empty_like(r)
        far = r > self.r1
        if np.any(far):
            rf = r[far]
            z = self.tail.sol(np.log(np.minimum(rf, self.r_max)))[0]
            out[far] = rf ** (-nu) * (L * np.expm1(-nu * np.log1p(eps / rf)) - z)
        near = ~far
        if np.any(near):
            with np.errstate(divide="ignore"):
                out[near] = L * (r[near] + eps) ** (-nu) - self(r[near])[0]
        return out

    def second(self, r) -> np.ndarray:
        """``phi_rr`` recovered from the ODE itself (no differencing)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        val, der = self(r)
        n, p = self.params.n, self.params.p
        out = np.empty_like(r)
        nz = r > 0
        out[nz] = -(n - 1) * der[nz] / r[nz] - np.abs(val[nz]) ** (p - 1) * val[nz]
        out[~nz] = -(self.alpha**p) / n
        return out


def default_grid(r_max: float, points_per_decade: int = 400, scale: float = 1.0) -> np.ndarray:
    return sinh_grid(r_max, spacing=math.log(10.0) / points_per_decade, scale=scale)


def ode_residual(params: Params, profile: RadialProfile) -> np.ndarray:
    """Nodal residual ``phi_rr + (n-1)/r phi_r + phi^p`` of a profile.

    ``phi_r`` is the stored derivative column; ``phi_rr`` comes from the
    profile (exact if stored, else a five-point difference of ``phi_r``).
    """
    d1 = profile.first_derivative()
    d2 = profile.second_derivative()
    v = profile.values
    return radial_laplacian(params.n, profile.grid, d1, d2) + np.abs(v) ** (params.p - 1) * v


def solve_phi(params: Params, alpha: float, r_max: float, tol: float = 1e-8,
              grid: np.ndarray | None = None, points_per_decade: int = 100,
              rtol: float = RTOL, atol: float = ATOL) -> RadialProfile:
    """Regular steady state with ``phi(0) = alpha``, ``phi'(0) = 0`` on ``[0, r_max]``.

    ``tol`` bounds the nodal ODE residual, relative to ``alpha^p``, at
    interior nodes away from the grid ends.
    """
    if r_max <= 1:
        raise ValueError(f"r_max must exceed 1, got {r_max}")
    if not 1e-12 <= tol <= 1e-6:
        raise ValueError(f"tol must lie in [1e-12, 1e-6], got {tol}")
    # the residual evaluator needs the dense output well below tol
    rtol = min(rtol, max(1e-13, tol * 1e-2))
    atol = min(atol, rtol * 1e-2)
    sol = PhiSolution(params, alpha, r_max, rtol=rtol, atol=atol)
    exps = sol.exps
    scale = alpha ** (-1.0 / exps.nu)
    meta = {"n": params.n, "p": params.p, "alpha": float(alpha), "r_max": float(r_max)}

    def build(nodes):
        values, derivs = sol(nodes)
        if np.any(values <= 0):
            raise PositivityLost("phi_alpha is not positive on the grid")
        prof = RadialProfile(nodes, values, derivs, kind="steady_state", meta=dict(meta), dense=sol)
        res = ode_residual(params, prof)[2:-2] / alpha**params.p
        return prof, float(np.max(np.abs(res))) if res.size else 0.0

    if grid is not None:
        profile, max_res = build(np.asarray(grid, dtype=float))
    else:
        # the five-point residual is fourth order in the grid spacing; refine
        # until it meets tol or stops improving (dense-output noise floor)
        ppd = points_per_decade
        profile, max_res = build(default_grid(r_max, ppd, scale))
        best = ppd
        while max_res > tol and ppd < MAX_POINTS_PER_DECADE:
            ppd *= 2
            cand, cand_res = build(default_grid(r_max, ppd, scale))
            if cand_res >= max_res:
                break
            profile, max_res, best = cand, cand_res, ppd
        profile.meta["points_per_decade"] = best
    grid = profile.grid
    values = profile.values
    profile.meta["max_rel_residual"] = max_res
    profile.meta["residual_ok"] = max_res <= tol
    if max_res > tol:
        log.warning("phi_alpha residual %.3g exceeds tol %.3g", max_res, tol)
    if np.isfinite(exps.L) and grid[-1] > 0:
        pos = grid > 0
        bound = exps.L * grid[pos] ** (-exps.nu)
        profile.meta["below_singular"] = bool(np.all(values[pos] <= bound))
    return profile


def phi_singular(params: Params, r) -> np.ndarray:
    """The explicit singular solution ``L r^-nu``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("phi_singular is defined for r > 0 only")
    exps = compute_exponents(params)
    return exps.L * r ** (-exps.nu)


def singular_profile(params: Params, grid: np.ndarray) -> RadialProfile:
    """``L r^-nu`` with exact first and second derivatives."""
    grid = np.asarray(grid, dtype=float)
    exps = compute_exponents(params)
    nu = exps.nu
    v = phi_singular(params, grid)
    return RadialProfile(grid, v, -nu * v / grid, nu * (nu + 1) * v / grid**2,
                         kind="analytic", meta={"n": params.n, "p": params.p, "alpha": math.inf})


def fit_tail(profile: RadialProfile, model: str = "single_power",
             window: tuple[float, float] = (1e2, 1e3), exps: ExponentSet | None = None,
             fix_leading: bool = True) -> TailFit:
    """Power-law fit of a profile's tail over ``window``.

    ``single_power``: slope of ``log value`` against ``log r``.
    ``two_term``: ``value ~ L r^-nu - a r^(-nu-lambda1)``; with
    ``fix_leading`` the leading coefficient is the exact ``L`` and only ``a``
    is fitted from the gap ``L r^-nu - value``, otherwise both are fitted.
    """
    r_lo, r_hi = window
    if not r_lo < r_hi:
        raise ValueError("window must satisfy r_lo < r_hi")
    if math.log10(r_hi / r_lo) < 0.5:
        raise ValueError("tail window must span at least half a decade")
    if r_lo < profile.r_min or r_hi > profile.r_max * (1 + 1e-12):
        raise ValueError("tail window must lie inside the profile grid")
    mask = profile.window_mask(r_lo, r_hi)
    r = profile.grid[mask]
    v = profile.values[mask]
    if r.size < 5:
        raise ValueError("too few nodes inside the tail window")

    if model == "single_power":
        if np.any(v <= 0):
            raise ValueError("single-power fit needs positive values")
        slope, intercept = np.polyfit(np.log(r), np.log(v), 1)
        fitted = np.exp(intercept) * r**slope
        rel = np.abs(fitted / v - 1.0)
        return TailFit(float(-slope), float(math.exp(intercept)), (r_lo, r_hi),
                       float(rel.max()), model, None, int(r.size))

    if model != "two_term":
        raise ValueError(f"unknown tail model {model!r}")
    if exps is None:
        exps = compute_exponents(Params(profile.meta["n"], profile.meta["p"]))
    exps.require_rates()
    nu, lam, L = exps.nu, exps.lambda1, exps.L
    lead = r ** (-nu)
    sub = r ** (-nu - lam)
    if fix_leading:
        gap = L * lead - v
        if np.any(gap <= 0):
            raise ValueError("nonpositive gap L r^-nu - phi inside window: move the window")
        ratio = gap / sub
        a = float(np.mean(ratio))
        fitted = L * lead - a * sub
        leading = L
    else:
        # weight each equation by 1/r^-nu so both ends count equally
        A = np.column_stack([np.ones_like(r), -r ** (-lam)])
        coef, *_ = np.linalg.lstsq(A, v / lead, rcond=None)
        leading, a = float(coef[0]), float(coef[1])
        fitted = leading * lead - a * sub
    rel = np.abs(fitted / v - 1.0)
    return TailFit(nu + lam, a, (r_lo, r_hi), float(rel.max()), model, float(leading), int(r.size))


def count_intersections(a: RadialProfile, b: RadialProfile, rel_zero: float = 1e-12) -> int:
    """Sign changes of ``a - b`` on the overlap of the two grids.

    Differences below ``rel_zero`` relative to the profile magnitudes are
    treated as zero and merged into their neighbours.
    """
    lo = max(a.r_min, b.r_min)
    hi = min(a.r_max, b.r_max)
    if lo >= hi:
        log.warning("profiles have disjoint grids; no intersections counted")
        return 0
    grid = a.grid[(a.grid >= lo) & (a.grid <= hi)]
    va = a.values[(a.grid >= lo) & (a.grid <= hi)]
    vb = b(grid)
    diff = va - vb
    scale = np.maximum(np.abs(va), np.abs(vb))
    sign = np.sign(diff)
    sign[np.abs(diff) <= rel_zero * scale] = 0
    sign = sign[sign != 0]
    if sign.size < 2:
        return 0
    return int(np.count_nonzero(sign[1:] != sign[:-1]))
