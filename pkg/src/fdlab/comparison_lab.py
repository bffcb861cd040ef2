"""Comparison functions for the rescaled flow and numerical certification of
the sign conditions they must satisfy.

Every spatial second derivative used here comes from an ODE right-hand side
(``phi''`` from the steady-state equation, ``f''`` from the linearized one),
so the certified quantities carry no differencing noise. Differences of
nearby powers are formed through ``expm1``/``log1p`` of far-field deviations
so that signs survive far below the rounding level of ``phi`` itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .exponents import Params, compute_exponents, gamma_of_kappa
from .linearized_profiles import FSolution
from .profiles import RadialProfile, sinh_grid
from .radial_pde import EvolutionTrace, SolverConfig, evolve
from .steady_states import PhiSolution

SIGN_TOL = 1e-10
JUMP_TOL = 1e-10
CORNER_EPS_TABLE = (0.5, 0.25, 0.1)
CORNER_EPS_LADDER = (0.5, 0.25, 0.1, 0.05, 0.02, 0.01, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4)
ANSATZ_KINDS = ("super_min", "sub_plus", "super_minus", "sub_max")


class ComparisonError(ValueError):
    """Construction failure carrying a machine-readable ``code``."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


# ---------------------------------------------------------------- helpers

def powm1(x, q: float) -> np.ndarray:
    """``(1+x)^q - 1`` for ``x > -1``."""
    return np.expm1(q * np.log1p(np.asarray(x, dtype=float)))


def h2(z, p: float) -> np.ndarray:
    """``((1+z)^p - 1 - p z) / z^2``, the exact quadratic remainder factor."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-4
    zs = z[small]
    c2 = p * (p - 1) / 2
    c3 = c2 * (p - 2) / 3
    c4 = c3 * (p - 3) / 4
    out[small] = c2 + zs * (c3 + zs * c4)
    zb = z[~small]
    out[~small] = (powm1(zb, p) - p * zb) / zb**2
    return out


def max_h2(p: float, z_hi: float, z_lo: float = 0.0, samples: int = 4001) -> float:
    """Smallest ``c`` with ``(1+z)^p <= 1 + p z + c z^2`` on ``[z_lo, z_hi]``
    (sampled; ``h2`` is monotone for ``p >= 2`` so the sample max is exact)."""
    z = np.linspace(z_lo, z_hi, samples)
    return float(np.max(h2(z, p)))


def pow_gap(exps, r, u_hi, u_lo) -> np.ndarray:
    """``w_hi^(p-1) - w_lo^(p-1)`` for ``w = r^-nu (L + u)``.

    Since ``nu (p-1) = 2`` this is ``r^-2 L^(p-1) [(1+u_hi/L)^(p-1) - (1+u_lo/L)^(p-1)]``,
    evaluated without forming either power.
    """
    p, L = exps.p, exps.L
    Lq = exps.p_L_pm1 / p
    q = p - 1
    inner = powm1(np.asarray(u_hi) / L, q) - powm1(np.asarray(u_lo) / L, q)
    with np.errstate(divide="ignore", invalid="ignore"):
        return Lq * inner / np.asarray(r, dtype=float) ** 2


def _scaled(exps, r, values) -> np.ndarray:
    """``r^nu * values``."""
    return np.asarray(r, dtype=float) ** exps.nu * np.asarray(values, dtype=float)


# ---------------------------------------------------------------- corner

def corner_gap(phi: PhiSolution, f: FSolution, A: float, eps: float, r) -> np.ndarray:
    """``phi + A f - L (r+eps)^-nu``; positive inside the corner radius."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    return A * f(r)[0] - phi.gap_to_singular(r, eps)


def admissible_window(phi: PhiSolution, f: FSolution, eps: float, grid=None) -> dict:
    """Range of ``A`` for which the matching set is nonempty and bounded.

    With ``q(r) = (L (r+eps)^-nu - phi) / f`` the glued datum has a corner
    iff ``q(0) < A < sup_{r>0} q``: below ``q(0)`` the set is empty, above
    the supremum the two pieces never meet again.
    """
    if grid is None:
        grid = sinh_grid(f.r_max, 0.002, eps)
    q = phi.gap_to_singular(grid, eps) / f(grid)[0]
    k = int(np.argmax(q))
    return {"eps": float(eps), "A_min": float(q[0]), "A_sup": float(q[k]),
            "r_at_sup": float(grid[k]), "exists": bool(q[k] > q[0] * (1 + 1e-9) and k > 0)}


def inner_operator(params: Params, eps: float, r) -> np.ndarray:
    """Closed form of ``w_rr + (n-1)/r w_r + w^p`` for ``w = L (r+eps)^-nu``."""
    exps = compute_exponents(params)
    r = np.asarray(r, dtype=float)
    nu, L = exps.nu, exps.L
    return -nu * (params.n - 1) * L * (r + eps) ** (-nu - 1) * (eps / (r * (r + eps)))


@dataclass(frozen=True, eq=False)
class CornerConstruction:
    """Glued datum: ``L (r+eps)^-nu`` inside ``r_corner``, ``phi + A f`` outside."""

    params: Params
    alpha: float
    kappa: float
    A: float
    eps: float
    r_corner: float
    profile: RadialProfile
    jump: float
    left_slope: float
    right_slope: float
    phi: PhiSolution = field(repr=False)
    f: FSolution = field(repr=False)

    def __post_init__(self):
        if self.r_corner < 1.0:
            raise ComparisonError("CORNER_INSIDE_UNIT_BALL",
                                  f"matching radius {self.r_corner:.6g} < 1")
        if self.jump < -JUMP_TOL:
            raise ComparisonError("CONVEX_CORNER", f"derivative jump {self.jump:.3g} < 0")

    def sample(self, grid) -> RadialProfile:
        """The glued datum on ``grid`` with exact first and second derivatives."""
        r = np.asarray(grid, dtype=float)
        exps = compute_exponents(self.params)
        nu, L, eps, A = exps.nu, exps.L, self.eps, self.A
        inner = r < self.r_corner
        ri, ro = r[inner], r[~inner]
        val = np.empty_like(r)
        der = np.empty_like(r)
        sec = np.empty_like(r)
        dev = np.empty_like(r)
        val[inner] = L * (ri + eps) ** (-nu)
        der[inner] = -nu * L * (ri + eps) ** (-nu - 1)
        sec[inner] = nu * (nu + 1) * L * (ri + eps) ** (-nu - 2)
        dev[inner] = self.phi.gap_to_singular(ri, eps)
        ph, dph = self.phi(ro)
        f, df = self.f(ro)
        val[~inner] = ph + A * f
        der[~inner] = dph + A * df
        sec[~inner] = self.phi.second(ro) + A * self.f.second(ro)
        dev[~inner] = A * f
        dev.flags.writeable = False
        meta = {"n": self.params.n, "p": self.params.p, "alpha": self.alpha,
                "kappa": self.kappa, "A": self.A, "eps": self.eps,
                "r_corner": self.r_corner, "deviation": dev}
        return RadialProfile(r, val, der, sec, kind="construction", meta=meta)

    def elliptic(self, r) -> np.ndarray:
        """``v_rr + (n-1)/r v_r + v^p`` on either side of the corner.

        Inside: the closed form. Outside: ``phi^p [(1+z)^p - 1 - (kappa+1) p z]``
        with ``z = A f / phi``, i.e. the operator after substituting both ODEs.
        """
        r = np.atleast_1d(np.asarray(r, dtype=float))
        p = self.params.p
        out = np.empty_like(r)
        inner = r < self.r_corner
        out[inner] = inner_operator(self.params, self.eps, r[inner])
        ro = r[~inner]
        ph = self.phi(ro)[0]
        z = self.A * self.f(ro)[0] / ph
        out[~inner] = ph**p * (z * z * h2(z, p) - self.kappa * p * z)
        return out


def build_corner(params: Params, alpha: float, kappa: float, A: float, eps: float,
                 r_max: float = 1e4, phi: PhiSolution | None = None,
                 f: FSolution | None = None, spacing: float = 0.005) -> CornerConstruction:
    """Locate the matching radius and glue the two pieces.

    The matching radius is the first zero of ``phi + A f - L (r+eps)^-nu``,
    bracketed on a grid fine near the origin and refined with ``brentq``.
    """
    if not 0 < eps < 1:
        raise ComparisonError("EPS_OUT_OF_RANGE", f"eps must lie in (0, 1), got {eps}")
    if not A > 0:
        raise ComparisonError("A_NONPOSITIVE", f"A must be positive, got {A}")
    if phi is None:
        phi = PhiSolution(params, alpha, r_max)
    if f is None:
        f = FSolution(phi, kappa, r_max)
    r_max = min(r_max, f.r_max)
    grid = sinh_grid(r_max, spacing, eps)
    D = corner_gap(phi, f, A, eps, grid)
    if D[0] <= 0:
        raise ComparisonError(
            "ADVISE_INCREASE_A",
            f"matching set empty: A={A:.6g} <= L eps^-nu - alpha = {float(-D[0] + A):.6g}")
    bad = np.flatnonzero(D <= 0)
    if bad.size == 0:
        raise ComparisonError(
            "ADVISE_DECREASE_EPS",
            f"phi + A f stays above L(r+eps)^-nu on [0, {r_max:.3g}]; the matching set is "
            f"unbounded for (A, eps)=({A:.6g}, {eps:.3g})")
    i = int(bad[0])

    def gap(x):
        return float(corner_gap(phi, f, A, eps, x)[0])

    r_c = grid[i] if D[i] == 0 else brentq(gap, grid[i - 1], grid[i], xtol=1e-14, rtol=1e-14)
    exps = compute_exponents(params)
    left = -exps.nu * exps.L * (r_c + eps) ** (-exps.nu - 1)
    ph_r = phi(r_c)[1]
    f_r = f(r_c)[1]
    right = float(ph_r + A * f_r)
    c = CornerConstruction(params, float(alpha), float(kappa), float(A), float(eps), float(r_c),
                           profile=None, jump=float(left - right), left_slope=float(left),
                           right_slope=right, phi=phi, f=f)
    object.__setattr__(c, "profile", c.sample(grid))
    return c


@dataclass(frozen=True)
class EllipticReport:
    max_value: float
    argmax_r: float
    inner_max: float
    inner_negative: bool
    outer_max: float
    jump: float
    jump_ok: bool
    r_corner: float
    closed_form_mismatch: float
    eps_table: dict
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def certify_elliptic(c: CornerConstruction, exclude: int = 2,
                     eps_table=CORNER_EPS_TABLE) -> EllipticReport:
    """Certify ``v_rr + (n-1)/r v_r + v^p <= 0`` away from the corner.

    Nodes at ``r = 0`` and ``exclude`` nodes on each side of the corner are
    skipped. ``closed_form_mismatch`` compares the substituted form with the
    operator assembled from the profile's value/derivative columns, relative
    to the size of the individual terms.
    """
    r = c.profile.grid
    k = int(np.searchsorted(r, c.r_corner))
    keep = np.ones(r.size, dtype=bool)
    keep[0] = False
    keep[max(k - exclude, 0):k + exclude] = False
    rr = r[keep]
    E = c.elliptic(rr)
    inner = rr < c.r_corner
    j = int(np.argmax(E))

    v = c.profile.values[keep]
    d1 = c.profile.derivs[keep]
    d2 = c.profile.second[keep]
    n, p = c.params.n, c.params.p
    terms = np.abs(d2) + (n - 1) * np.abs(d1) / rr + v**p
    assembled = d2 + (n - 1) * d1 / rr + v**p
    mismatch = float(np.max(np.abs(assembled - E) / terms))

    table = {}
    for e in eps_table:
        try:
            table[float(e)] = build_corner(c.params, c.alpha, c.kappa, c.A, e,
                                           r_max=c.f.r_max, phi=c.phi, f=c.f).r_corner
        except ComparisonError as exc:
            table[float(e)] = exc.code
    inner_max = float(np.max(E[inner])) if np.any(inner) else -math.inf
    outer_max = float(np.max(E[~inner])) if np.any(~inner) else -math.inf
    jump_ok = c.jump >= -JUMP_TOL
    return EllipticReport(
        max_value=float(E[j]), argmax_r=float(rr[j]), inner_max=inner_max,
        inner_negative=bool(inner_max < 0), outer_max=outer_max, jump=c.jump,
        jump_ok=bool(jump_ok), r_corner=c.r_corner, closed_form_mismatch=mismatch,
        eps_table=table, passed=bool(E[j] <= SIGN_TOL and jump_ok and inner_max < 0),
    )


def search_corner(params: Params, alpha: float, kappa: float, eps_ladder=CORNER_EPS_LADDER,
                  r_max: float = 1e4, phi: PhiSolution | None = None):
    """Walk down ``eps_ladder`` until an admissible ``A`` window opens and the
    glued datum certifies. Returns ``(construction, report, attempts)``;
    ``construction`` is ``None`` if every rung fails.
    """
    if phi is None:
        phi = PhiSolution(params, alpha, r_max)
    f = FSolution(phi, kappa, r_max)
    attempts = []
    for eps in eps_ladder:
        win = admissible_window(phi, f, eps)
        if not win["exists"]:
            attempts.append({**win, "outcome": "NO_WINDOW"})
            continue
        A = math.sqrt(win["A_min"] * win["A_sup"])
        try:
            c = build_corner(params, alpha, kappa, A, eps, r_max, phi=phi, f=f)
        except ComparisonError as exc:
            attempts.append({**win, "A": A, "outcome": exc.code})
            continue
        rep = certify_elliptic(c)
        attempts.append({**win, "A": A, "r_corner": c.r_corner,
                         "outcome": "CERTIFIED" if rep.passed else "FAILED"})
        if rep.passed:
            return c, rep, attempts
    return None, None, attempts


@dataclass(frozen=True)
class MonotoneEvolutionReport:
    t_end: float
    max_increase: float
    tolerance: float
    status: str
    nonincreasing: bool


def corner_solver_config(c: CornerConstruction, spacing: float = 0.01) -> SolverConfig:
    """Grid concentrated on the ``eps``-scale spike, pinned far boundary."""
    return SolverConfig(R=c.f.r_max, spacing=spacing, scale=c.eps, boundary="pin_to_initial",
                        dt_init=1e-4, dt_max=0.05)


def evolve_supersolution(c: CornerConstruction, t_end: float = 10.0,
                         config: SolverConfig | None = None,
                         rel_tol: float = 1e-12) -> tuple[MonotoneEvolutionReport, EvolutionTrace]:
    """Evolve the glued datum and check that ``v`` is nodewise nonincreasing.

    Increases up to ``rel_tol * max v0`` are attributed to the Newton
    tolerance and rounding.
    """
    cfg = config or corner_solver_config(c)
    v0 = c.sample(cfg.grid())
    trace = evolve(cfg, c.params, v0, t_end, alpha=c.alpha, phi=c.phi)
    tol = rel_tol * float(np.max(v0.values))
    inc = float(np.max(trace.max_increase))
    rep = MonotoneEvolutionReport(float(t_end), inc, tol, trace.status.value,
                                  bool(inc <= tol and trace.status.value == "OK"))
    return rep, trace


# ---------------------------------------------------------------- separated ansatz

@dataclass(frozen=True, eq=False)
class SeparatedAnsatz:
    """``phi_alpha +- f_beta g(t)`` with ``g(t) = A exp(-kappa (t - t0))``.

    ``super_min`` and ``sub_plus`` take the ``+`` branch (``super_min`` is
    additionally capped by ``phi_alpha'``); ``super_minus`` and ``sub_max``
    take the ``-`` branch (``sub_max`` is floored at 0). ``beta`` is the
    steady state that defines ``f``; it equals ``alpha`` for the two
    subsolutions.
    """

    kind: str
    params: Params
    alpha: float
    kappa: float
    A: float
    beta: float
    t0: float = 0.0
    alpha_prime: float | None = None
    phi_alpha: PhiSolution = field(default=None, repr=False)
    phi_beta: PhiSolution = field(default=None, repr=False)
    phi_alpha_prime: PhiSolution | None = field(default=None, repr=False)
    f: FSolution = field(default=None, repr=False)
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ANSATZ_KINDS:
            raise ValueError(f"kind must be one of {ANSATZ_KINDS}, got {self.kind!r}")
        if not self.A > 0:
            raise ValueError(f"A must be positive, got {self.A}")
        if self.kind in ("sub_plus", "sub_max") and self.beta != self.alpha:
            raise ValueError(f"{self.kind} uses f_(alpha,kappa): beta must equal alpha")
        if self.kind == "super_minus" and not self.beta < self.alpha:
            raise ValueError("super_minus needs beta < alpha")
        if self.kind == "super_min":
            if not self.beta > self.alpha + 1:
                raise ValueError("super_min needs beta > alpha + 1")
            if self.alpha_prime is None or not self.alpha < self.alpha_prime < self.beta - 1:
                raise ValueError("super_min needs alpha < alpha_prime < beta - 1")

    @property
    def sign(self) -> int:
        return 1 if self.kind in ("super_min", "sub_plus") else -1

    @property
    def is_super(self) -> bool:
        return self.kind.startswith("super")

    def g(self, t) -> np.ndarray:
        return self.A * np.exp(-self.kappa * (np.asarray(t, dtype=float) - self.t0))

    def g_prime(self, t) -> np.ndarray:
        return -self.kappa * self.g(t)

    def values(self, r, t) -> np.ndarray:
        """The ansatz on the ``(r, t)`` product grid, shape ``(len(t), len(r))``."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        branch = self.phi_alpha(r)[0][None, :] + self.sign * self.f(r)[0][None, :] * self.g(t)[:, None]
        if self.kind == "super_min":
            return np.minimum(branch, self.phi_alpha_prime(r)[0][None, :])
        if self.kind == "sub_max":
            return np.maximum(branch, 0.0)
        return branch


def make_ansatz(params: Params, kind: str, alpha: float, kappa: float, A: float,
                beta: float | None = None, alpha_prime: float | None = None,
                t0: float = 0.0, r_max: float = 1e4, constants: dict | None = None,
                phis: dict | None = None) -> SeparatedAnsatz:
    """Build the ansatz together with the steady states and ``f`` it uses.

    ``phis`` may map center values to already-solved ``PhiSolution``s.
    """
    phis = dict(phis or {})
    if beta is None:
        beta = alpha

    def get(a):
        if a not in phis:
            phis[a] = PhiSolution(params, a, r_max)
        return phis[a]

    pa = get(alpha)
    pb = get(beta)
    pap = get(alpha_prime) if alpha_prime is not None else None
    f = FSolution(pb, kappa, r_max)
    return SeparatedAnsatz(kind, params, float(alpha), float(kappa), float(A), float(beta),
                           float(t0), None if alpha_prime is None else float(alpha_prime),
                           phi_alpha=pa, phi_beta=pb, phi_alpha_prime=pap, f=f,
                           constants=dict(constants or {}))


def _rho(ans: SeparatedAnsatz, r) -> np.ndarray:
    """``(phi_beta / phi_alpha)^(p-1) - 1`` from the far-field deviations."""
    exps = ans.phi_alpha.exps
    if ans.beta == ans.alpha:
        return np.zeros_like(np.asarray(r, dtype=float))
    zb = ans.phi_beta.tail_deviation(r)
    za = ans.phi_alpha.tail_deviation(r)
    out = np.empty_like(np.asarray(r, dtype=float))
    pos = r > 0
    out[pos] = powm1((zb[pos] - za[pos]) / (exps.L + za[pos]), exps.p - 1)
    zero = ~pos
    if np.any(zero):
        out[zero] = (ans.beta / ans.alpha) ** (exps.p - 1) - 1
    return out


def reduced_bracket(ans: SeparatedAnsatz, r, t) -> tuple[np.ndarray, np.ndarray]:
    """``(B, z)`` with ``P v = g f phi_alpha^(p-1) B`` on the smooth branch.

    ``B = s [(kappa+1) p rho - kappa p ((1+s z)^(p-1) - 1)] - z h2(s z)`` where
    ``s`` is the branch sign, ``z = f g / phi_alpha`` and ``rho`` as in ``_rho``.
    This is the operator after substituting the steady-state and linearized
    equations, so it carries no cancellation.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    p, s, k = ans.params.p, ans.sign, ans.kappa
    z = (ans.f(r)[0] / ans.phi_alpha(r)[0])[None, :] * ans.g(t)[:, None]
    rho = _rho(ans, r)[None, :]
    B = s * ((k + 1) * p * rho - k * p * powm1(s * z, p - 1)) - z * h2(s * z, p)
    return B, z


def operator_reduced(ans: SeparatedAnsatz, r, t) -> np.ndarray:
    """``P v`` on the smooth branch, from ``reduced_bracket``."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    B, _ = reduced_bracket(ans, r, t)
    pref = (ans.f(r)[0] * ans.phi_alpha(r)[0] ** (ans.params.p - 1))[None, :]
    return ans.g(t)[:, None] * pref * B


def operator_direct(ans: SeparatedAnsatz, r, t, time_term: bool = True) -> np.ndarray:
    """``P v = p v^(p-1) v_t - v_rr - (n-1)/r v_r - v^p`` on the smooth branch,
    assembled term by term with ODE-derived second derivatives."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n, p, s = ans.params.n, ans.params.p, ans.sign
    ph, dph = ans.phi_alpha(r)
    f, df = ans.f(r)
    d2ph = ans.phi_alpha.second(r)
    d2f = ans.f.second(r)
    g = ans.g(t)[:, None]
    v = ph[None, :] + s * f[None, :] * g
    vr = dph[None, :] + s * df[None, :] * g
    vrr = d2ph[None, :] + s * d2f[None, :] * g
    vt = s * f[None, :] * ans.g_prime(t)[:, None]
    out = -vrr - (n - 1) * vr / r[None, :] - v**p
    if time_term:
        out = out + p * v ** (p - 1) * vt
    return out


def operator_4200(ans: SeparatedAnsatz, r, t) -> np.ndarray:
    """``P v`` for the ``+`` branch in the displayed reduced form
    ``g [(kappa+1) p phi_beta^(p-1) f - kappa p (phi_alpha + f g)^(p-1) f]
    - phi_alpha^p [(1 + f g / phi_alpha)^p - 1]``."""
    if ans.sign != 1:
        raise ValueError("this reduced form is written for the + branch")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    p, k = ans.params.p, ans.kappa
    ph = ans.phi_alpha(r)[0][None, :]
    pb = ans.phi_beta(r)[0][None, :]
    f = ans.f(r)[0][None, :]
    g = ans.g(t)[:, None]
    return (g * ((k + 1) * p * pb ** (p - 1) * f - k * p * (ph + f * g) ** (p - 1) * f)
            - ph**p * ((1 + f * g / ph) ** p - 1))


def bookkeeping_check(ans: SeparatedAnsatz, n_points: int = 10, seed: int = 0,
                      r_range=(1e-2, 1e2), t_range=None) -> float:
    """Largest relative gap between ``operator_direct`` and ``operator_4200``
    at random ``(r, t)`` points, relative to the size of the largest term."""
    rng = np.random.default_rng(seed)
    if t_range is None:
        t_range = (ans.t0, ans.t0 + 10.0)
    r = np.exp(rng.uniform(math.log(r_range[0]), math.log(r_range[1]), n_points))
    t = rng.uniform(*t_range, n_points)
    worst = 0.0
    n, p = ans.params.n, ans.params.p
    for ri, ti in zip(r, t):
        a = float(operator_direct(ans, [ri], [ti])[0, 0])
        b = float(operator_4200(ans, [ri], [ti])[0, 0])
        ph, dph = ans.phi_alpha(ri)
        scale = abs(float(ans.phi_alpha.second([ri])[0])) + (n - 1) * abs(dph) / ri + ph**p
        worst = max(worst, abs(a - b) / scale)
    return worst


def sub_plus_majorant(ans: SeparatedAnsatz, r, t) -> np.ndarray:
    """Upper bound for ``P v`` of the ``+`` branch after the two convexity
    estimates: ``g [-(kappa+1) p phi^(p-1) f - f_rr - (n-1)/r f_r]``, which
    vanishes identically when ``f`` solves the linearized equation."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n, p, k = ans.params.n, ans.params.p, ans.kappa
    f, df = ans.f(r)
    ph = ans.phi_alpha(r)[0]
    inner = -(k + 1) * p * ph ** (p - 1) * f - ans.f.second(r) - (n - 1) * df / r
    return ans.g(t)[:, None] * inner[None, :]


def amplitude_from_bump(f: FSolution, b: float, gamma: float, grid, side: str) -> float:
    """``A`` with ``A f`` and ``b (r+1)^-gamma`` ordered on ``grid``.

    ``side='below'``: the largest ``A`` with ``A f <= b (r+1)^-gamma``
    (the subsolution sits under data at least ``b (r+1)^-gamma`` above phi).
    ``side='above'``: ``A = b / min (r+1)^gamma f``, so that
    ``A f >= b (r+1)^-gamma`` (the lower barrier for data below phi).
    """
    r = np.asarray(grid, dtype=float)
    w = f(r)[0] * (r + 1) ** gamma
    if side == "below":
        return float(b / np.max(w))
    if side == "above":
        return float(b / np.min(w))
    raise ValueError("side must be 'above' or 'below'")


@dataclass(frozen=True)
class ParabolicReport:
    kind: str
    extremal: float
    location: tuple
    passed: bool
    hypotheses_met: bool
    flags: tuple
    active_fraction: float
    constants: dict

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["location"] = list(self.location)
        d["flags"] = list(self.flags)
        return d


def ansatz_hypotheses(ans: SeparatedAnsatz) -> tuple[bool, list]:
    """Check the smallness/ordering constraints recorded for each kind."""
    flags = []
    if ans.kind == "super_minus":
        caps = ans.constants.get("caps")
        if caps is None:
            flags.append("CAPS_NOT_COMPUTED")
        elif ans.A > min(caps.values()) * (1 + 1e-12):
            flags.append("HYPOTHESES_UNMET")
        if ans.constants.get("c7", 1.0) <= 0:
            flags.append("HYPOTHESES_UNMET")
    if ans.kind == "super_min":
        for key in ("delta", "r2", "t0_found"):
            if key not in ans.constants:
                flags.append(f"MISSING_{key.upper()}")
        if ans.constants.get("t0_found") is False:
            flags.append("HYPOTHESES_UNMET")
    return (not flags), flags


def certify_parabolic(params: Params, ans: SeparatedAnsatz, t_grid, r_grid,
                      tol: float = SIGN_TOL) -> ParabolicReport:
    """Sign of ``P v`` over the product grid, restricted to the active region.

    Supersolutions need ``min P >= -tol``, subsolutions ``max P <= tol``.
    The active region is ``Q = {phi_alpha + f g < phi_alpha'}`` for
    ``super_min`` and ``{phi_alpha - f g > 0}`` for ``sub_max``; elsewhere
    the smooth branch is the whole ansatz. ``r = 0`` is excluded.
    """
    if params != ans.params:
        raise ValueError("params do not match the ansatz")
    r = np.asarray(r_grid, dtype=float)
    r = r[r > 0]
    t = np.asarray(t_grid, dtype=float)
    P = operator_reduced(ans, r, t)
    _, z = reduced_bracket(ans, r, t)
    active = np.ones_like(P, dtype=bool)
    if ans.kind == "super_min":
        exps = ans.phi_alpha.exps
        za = ans.phi_alpha.tail_deviation(r)
        zap = ans.phi_alpha_prime.tail_deviation(r)
        room = (zap - za) / (exps.L + za)  # phi_alpha'/phi_alpha - 1
        active = z < room[None, :]
    elif ans.kind == "sub_max":
        active = z < 1.0
    flags = []
    ok_hyp, hyp_flags = ansatz_hypotheses(ans)
    flags.extend(hyp_flags)
    if not np.any(active):
        return ParabolicReport(ans.kind, math.nan, (math.nan, math.nan), False, ok_hyp,
                               tuple(flags + ["EMPTY_ACTIVE_REGION"]), 0.0, dict(ans.constants))
    constants = dict(ans.constants)
    if ans.kind == "sub_plus":
        constants["majorant_max_abs"] = float(np.max(np.abs(sub_plus_majorant(ans, r, t))))
    masked = np.where(active, P, np.inf if ans.is_super else -np.inf)
    idx = np.argmin(masked) if ans.is_super else np.argmax(masked)
    it, ir = np.unravel_index(idx, P.shape)
    ext = float(P[it, ir])
    passed = ext >= -tol if ans.is_super else ext <= tol
    return ParabolicReport(ans.kind, ext, (float(r[ir]), float(t[it])), bool(passed), ok_hyp,
                           tuple(flags), float(np.mean(active)), constants)


# ---------------------------------------------------------------- asymptotic inequality checks

@dataclass(frozen=True)
class Lemma7Result:
    r0: float
    c_fit: float
    status: str
    sign_profile: tuple

    def __iter__(self):
        return iter((self.r0, self.c_fit))


def _sign_profile(r, D) -> tuple:
    s = np.sign(D)
    segs = []
    start = 0
    for i in range(1, s.size + 1):
        if i == s.size or s[i] != s[start]:
            segs.append((float(r[start]), float(r[i - 1]), int(s[start])))
            start = i
    return tuple(segs)


def lemma7_profile(params: Params, alpha: float, beta: float, mu: float, kappa: float,
                   A: float, B: float, grid, phis: dict | None = None):
    """``D(r) r^(2+lambda1)`` with ``D = (phi_beta - B f)^(p-1) - (phi_alpha + A f)^(p-1)``,
    ``f = f_(mu,kappa)``, evaluated on ``grid`` (``r > 0``)."""
    exps = compute_exponents(params)
    r_max = float(np.max(grid))
    phis = dict(phis or {})
    for a in (alpha, beta, mu):
        if a not in phis:
            phis[a] = PhiSolution(params, a, r_max)
    f = FSolution(phis[mu], kappa, r_max)
    r = np.asarray(grid, dtype=float)
    fr = f(r)[0]
    u_hi = phis[beta].tail_deviation(r) - B * _scaled(exps, r, fr)
    u_lo = phis[alpha].tail_deviation(r) + A * _scaled(exps, r, fr)
    lam = exps.lambda1
    return exps.p_L_pm1 / exps.p * (powm1(u_hi / exps.L, exps.p - 1)
                                    - powm1(u_lo / exps.L, exps.p - 1)) * r**lam


def check_lemma7(params: Params, alpha: float, beta: float, mu: float, kappa: float,
                 A: float, B: float, r_max: float = 1e6, spacing: float = 0.01,
                 phis: dict | None = None) -> Lemma7Result:
    """Find ``r0 >= 1`` beyond which ``D(r) r^(2+lambda1)`` stays positive and
    return its infimum there."""
    exps = compute_exponents(params)
    exps.require_rates()
    if beta < alpha:
        raise ValueError("need beta >= alpha")
    if mu <= 0 or A < 0 or B < 0:
        raise ValueError("need mu > 0 and A, B >= 0")
    if not 0 < kappa < exps.kappa0:
        raise ValueError(f"kappa must lie in (0, {exps.kappa0:.10g})")
    r = sinh_grid(r_max, spacing)[1:]
    Dn = lemma7_profile(params, alpha, beta, mu, kappa, A, B, r, phis)
    prof = _sign_profile(r, Dn)
    if beta == alpha and A == 0 and B == 0 and np.all(Dn == 0):
        return Lemma7Result(math.nan, 0.0, "DEGENERATE_ZERO", prof)
    nonpos = np.flatnonzero(Dn <= 0)
    start = 0 if nonpos.size == 0 else int(nonpos[-1]) + 1
    start = max(start, int(np.searchsorted(r, 1.0)))
    if start >= r.size:
        return Lemma7Result(math.nan, math.nan, "NO_R0", prof)
    return Lemma7Result(float(r[start]), float(np.min(Dn[start:])), "OK", prof)


@dataclass(frozen=True)
class Lemma9Result:
    C_fit: float
    r_argsup: float
    C_extended: float
    r_argsup_extended: float
    interior: bool


def lemma9_profile(params: Params, alpha: float, mu: float, kappa: float, r,
                   phi_alpha: PhiSolution, f: FSolution) -> np.ndarray:
    exps = compute_exponents(params)
    g = gamma_of_kappa(exps, kappa)
    r = np.asarray(r, dtype=float)
    return phi_alpha(r)[0] ** (params.p - 2) * f(r)[0] * (r + 1) ** (g + 2 - exps.nu)


def check_lemma9(params: Params, alpha: float, mu: float, kappa: float,
                 r_max: float = 1e4, spacing: float = 0.01) -> Lemma9Result:
    """``sup phi_alpha^(p-2) f_(mu,kappa) (r+1)^(gamma+2-nu)`` on ``[0, r_max]``.

    The same nodes are then extended to ``2 r_max``; the sup is interior
    when both grids agree on its value and location and it does not sit
    on the last node.
    """
    compute_exponents(params).require_rates()
    R2 = 2 * r_max
    pa = PhiSolution(params, alpha, R2)
    pm = pa if mu == alpha else PhiSolution(params, mu, R2)
    f = FSolution(pm, kappa, R2)
    h = spacing
    r = np.sinh(np.arange(int(math.asinh(R2) / h) + 1) * h)
    vals = lemma9_profile(params, alpha, mu, kappa, r, pa, f)
    m = int(np.searchsorted(r, r_max, side="right"))
    k1 = int(np.argmax(vals[:m]))
    k2 = int(np.argmax(vals))
    interior = k1 == k2 and k1 < m - 1
    return Lemma9Result(float(vals[k1]), float(r[k1]), float(vals[k2]), float(r[k2]),
                        bool(interior))


# ---------------------------------------------------------------- parameter searches

def lemma8_constants(params: Params, alpha: float, beta: float, kappa: float, b: float,
                     r_max: float = 1e4, spacing: float = 0.01, max_iter: int = 50) -> dict:
    """Bookkeeping constants for the ``super_minus`` ansatz and the resulting cap on ``A``.

    ``c1, r1`` from ``check_lemma7`` with roles swapped, ``c2`` from
    ``check_lemma9`` with ``mu = beta``, ``c4 = sup f/phi_alpha``,
    ``c5 = sup (r+1)^gamma f``, ``c6`` the quadratic remainder constant on
    ``[0, 1/2]``, and ``c7(A)`` the inner-region margin; ``A`` is the largest
    value compatible with all caps, found by fixed-point iteration since
    ``c7`` depends on ``A``.
    """
    exps = compute_exponents(params)
    if not 0 < beta < alpha:
        raise ValueError("need 0 < beta < alpha")
    gam = gamma_of_kappa(exps, kappa)
    p, lam, nu = params.p, exps.lambda1, exps.nu
    pa = PhiSolution(params, alpha, max(r_max, 1e6))
    pb = PhiSolution(params, beta, max(r_max, 1e6))
    phis = {alpha: pa, beta: pb}
    l7 = check_lemma7(params, beta, alpha, beta, kappa, 0.0, 1.0, phis=phis)
    if l7.status != "OK":
        raise ComparisonError("LEMMA7_FAILED", f"no r1 found: {l7.status}")
    c1, r1 = l7.c_fit, l7.r0
    c2 = check_lemma9(params, alpha, beta, kappa, r_max=r_max, spacing=spacing).C_fit
    f = FSolution(pb, kappa, r_max)
    r = sinh_grid(r_max, spacing)
    fr = f(r)[0]
    c4 = float(np.max(fr / pa(r)[0]))
    c5 = float(np.max((r + 1) ** gam * fr))
    zc = np.linspace(0, 0.5, 4001)[1:]
    c6 = float(np.max((powm1(-zc, p) + p * zc) / zc**2))
    inner = (r > 0) & (r < r1)
    ri = r[inner]
    za = pa.tail_deviation(ri)
    zb = pb.tail_deviation(ri)

    def c7_of(A):
        return float(np.min(pow_gap(exps, ri, za - A * _scaled(exps, ri, fr[inner]), zb)))

    base = {"one": 1.0, "half_over_c4": 1 / (2 * c4), "b_over_c5": b / c5,
            "lemma7_tail": kappa * p * c1 / (c2 * c6) * r1 ** (gam - nu - lam)}
    A = min(base.values())
    c7 = c7_of(A)
    for _ in range(max_iter):
        if c7 <= 0:
            A *= 0.5
            c7 = c7_of(A)
            continue
        A_new = min(A, kappa * p * c7 / (c2 * c6))
        if A_new >= A * (1 - 1e-12):
            break
        A = A_new
        c7 = c7_of(A)
    caps = {**base, "inner_margin": kappa * p * c7 / (c2 * c6) if c7 > 0 else 0.0}
    return {"c1": c1, "r1": r1, "c2": c2, "c4": c4, "c5": c5, "c6": c6, "c7": c7,
            "caps": caps, "A": A, "gamma": gam}


def envelope_A(trace: EvolutionTrace, f: FSolution, safety: float = 1.05) -> float:
    """Smallest ``A`` (times ``safety``) with ``v <= phi_alpha + A f`` on every snapshot."""
    best = 0.0
    for snap in trace.snapshots:
        dev = snap.meta.get("deviation")
        if dev is None:
            raise ValueError("snapshots must carry their deviation")
        best = max(best, float(np.max(np.asarray(dev) / f(snap.grid)[0])))
    return safety * best


def lemma4_search(params: Params, alpha: float, kappa: float, trace: EvolutionTrace,
                  beta: float | None = None, r_max: float | None = None,
                  delta_safety: float = 0.9) -> SeparatedAnsatz:
    """Follow the constructive recipe for the ``super_min`` ansatz.

    ``beta = alpha + 1.1``; ``A`` from the envelope of a prior evolution;
    ``r2`` the last radius where the tail margin fails; ``z2, c7, c8, c9``
    on ``[0, r2]``; ``delta = delta_safety * c9 / c8``; ``alpha'`` the
    largest value with ``phi_alpha' - phi_alpha <= delta`` on ``[0, r2]``
    (bisection); ``t0`` the first snapshot time from which on ``v <= phi_alpha'``
    on ``[0, r2]``.
    """
    exps = compute_exponents(params)
    p = params.p
    if beta is None:
        beta = alpha + 1.1
    R = float(trace.snapshots[0].grid[-1]) if r_max is None else r_max
    pa = PhiSolution(params, alpha, R)
    pb = PhiSolution(params, beta, R)
    pbm = PhiSolution(params, beta - 1, R)
    f = FSolution(pb, kappa, R)
    A = envelope_A(trace, f)
    r = trace.snapshots[0].grid
    rp = r[r > 0]
    fr = f(rp)[0]
    ph = pa(rp)[0]
    za = pa.tail_deviation(rp)
    zb = pb.tail_deviation(rp)
    u = za + A * _scaled(exps, rp, fr)

    # (4.121): c6 on [0, z1] with z1 = sup_{r>1} A f / phi_alpha
    z1 = float(np.max(A * fr[rp > 1] / ph[rp > 1]))
    c6 = max_h2(p, z1)
    lhs = kappa * p * pow_gap(exps, rp, zb, u) * fr
    rhs = c6 * A * ph ** (p - 2) * fr**2
    fail = np.flatnonzero(lhs < rhs)
    r2 = float(rp[fail[-1]]) if fail.size else float(rp[0])
    r2 = max(r2, 1.0)
    if r2 >= rp[-1]:
        raise ComparisonError("NO_R2", "tail margin fails up to the grid end")

    rin = np.concatenate([[0.0], rp[rp <= r2]])
    pa_in = pa(rin)[0]
    z2 = float(np.max(pb(rin)[0] / pa_in))
    c7 = max_h2(p, z2)
    f_in = f(rin)[0]
    c8 = float(np.max(c7 * pa_in ** (p - 2) * f_in))
    c9 = float(np.min(p * (pb(rin)[0] ** (p - 1) - pbm(rin)[0] ** (p - 1)) * f_in))
    delta = min(delta_safety * c9 / c8, 0.5)

    def excess(ap):
        return float(np.max(PhiSolution(params, ap, max(r2, 2.0))(rin)[0] - pa_in)) - delta

    hi = min(beta - 1, alpha + 2 * delta)
    if excess(hi) <= 0:
        ap = hi * (1 - 1e-9) if hi >= beta - 1 else hi
    else:
        ap = brentq(excess, alpha, hi, xtol=1e-12 * alpha)
    pap = PhiSolution(params, ap, R)
    cap_in = pap(rin)[0]

    t0 = math.nan
    ok_after = []
    for snap in trace.snapshots:
        v = np.interp(rin, snap.grid, snap.values)
        ok_after.append(bool(np.all(v <= cap_in)))
    for k in range(len(ok_after)):
        if all(ok_after[k:]):
            t0 = float(trace.snapshots[k].meta["t"])
            break
    found = not math.isnan(t0)
    constants = {"beta": beta, "A": A, "z1": z1, "c6": c6, "r2": r2, "z2": z2, "c7": c7,
                 "c8": c8, "c9": c9, "delta": delta, "alpha_prime": ap,
                 "t0": t0 if found else None, "t0_found": found}
    return make_ansatz(params, "super_min", alpha, kappa, A, beta=beta, alpha_prime=ap,
                       t0=t0 if found else 0.0, r_max=R, constants=constants,
                       phis={alpha: pa, beta: pb, ap: pap})


# ---------------------------------------------------------------- dispatcher

def run_certification(params: Params, lemma: int, alpha: float = 1.0, gamma: float = 6.0,
                      beta: float | None = None, mu: float | None = None,
                      A: float | None = None, B: float | None = None, b: float = 0.1,
                      eps: float | None = None, r_max: float = 1e4, t_end: float = 40.0,
                      seed: int = 0, t_span: float = 20.0) -> dict:
    """Run one lemma's construction and certification with default searches.

    Returns ``{lemma, passed, hypotheses_met, extremal_residual, location,
    constants_found}``.
    """
    from .exponents import kappa_of_gamma
    from .radial_pde import make_initial_data

    exps = compute_exponents(params)
    exps.require_rates()
    kappa = kappa_of_gamma(exps, gamma)
    r_grid = sinh_grid(r_max, 0.01)
    t_grid = np.linspace(0.0, t_span, 81)

    def out(passed, hyp, ext, loc, consts):
        return {"lemma": lemma, "passed": bool(passed), "hypotheses_met": bool(hyp),
                "extremal_residual": ext, "location": list(loc), "constants_found": consts}

    if lemma == 2:
        phi = PhiSolution(params, alpha, r_max)
        attempts = []
        if A is not None and eps is not None:
            try:
                c = build_corner(params, alpha, kappa, A, eps, r_max, phi=phi)
            except ComparisonError as exc:
                return out(False, False, math.nan, [], {"error": exc.code, "A": A, "eps": eps})
            rep = certify_elliptic(c)
        else:
            c, rep, attempts = search_corner(params, alpha, kappa, r_max=r_max, phi=phi)
            if c is None:
                return out(False, False, math.nan, [], {"attempts": attempts})
        mono, _ = evolve_supersolution(c)
        consts = {"A": c.A, "eps": c.eps, "r_corner": c.r_corner, "jump": c.jump,
                  "inner_max": rep.inner_max, "eps_table": rep.eps_table,
                  "max_increase": mono.max_increase, "nonincreasing": mono.nonincreasing,
                  "attempts": attempts}
        return out(rep.passed and mono.nonincreasing, True, rep.max_value, [rep.argmax_r], consts)

    if lemma in (7, 9):
        if lemma == 7:
            res = check_lemma7(params, alpha, 2 * alpha if beta is None else beta,
                               alpha if mu is None else mu, kappa,
                               1.0 if A is None else A, 1.0 if B is None else B)
            ok = res.status == "OK" and res.c_fit > 0
            return out(ok, True, res.c_fit, [res.r0], {"r0": res.r0, "c_fit": res.c_fit,
                                                        "status": res.status})
        res = check_lemma9(params, alpha, alpha if mu is None else mu, kappa, r_max=r_max)
        ok = math.isfinite(res.C_fit) and res.interior
        return out(ok, True, res.C_fit, [res.r_argsup], dict(res.__dict__))

    if lemma == 4:
        cfg = SolverConfig(R=r_max, snapshot_every=0.5)
        v0 = make_initial_data(params, alpha, "capped_above", cfg.grid(), b=b, gamma=gamma)
        trace = evolve(cfg, params, v0, t_end)
        ans = lemma4_search(params, alpha, kappa, trace, beta=beta)
        rep = certify_parabolic(params, ans, ans.t0 + t_grid, cfg.grid())
        book = bookkeeping_check(ans, seed=seed)
        consts = {**rep.constants, "bookkeeping_max_rel": book}
        return out(rep.passed and book <= 1e-9, rep.hypotheses_met, rep.extremal,
                   rep.location, consts)

    if lemma in (6, 10):
        kind = "sub_plus" if lemma == 6 else "sub_max"
        if A is None:
            f = FSolution(PhiSolution(params, alpha, r_max), kappa, r_max)
            A = amplitude_from_bump(f, b, gamma, r_grid, "below" if lemma == 6 else "above")
        ans = make_ansatz(params, kind, alpha, kappa, A, r_max=r_max)
        rep = certify_parabolic(params, ans, t_grid, r_grid)
        ok = rep.passed
        if lemma == 6:
            ok = ok and rep.constants["majorant_max_abs"] <= SIGN_TOL
        return out(ok, rep.hypotheses_met, rep.extremal, rep.location, {**rep.constants, "A": A})

    if lemma == 8:
        beta = 0.5 * alpha if beta is None else beta
        consts = lemma8_constants(params, alpha, beta, kappa, b, r_max=r_max)
        ans = make_ansatz(params, "super_minus", alpha, kappa, consts["A"] if A is None else A,
                          beta=beta, r_max=r_max, constants=consts)
        rep = certify_parabolic(params, ans, t_grid, r_grid)
        return out(rep.passed and rep.hypotheses_met, rep.hypotheses_met, rep.extremal,
                   rep.location, {**rep.constants, "A": ans.A, "flags": list(rep.flags)})

    raise ValueError(f"no certification for lemma {lemma}")
