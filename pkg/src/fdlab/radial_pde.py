"""Implicit solver for the rescaled radial flow ``(v^p)_t = v_rr + (n-1)/r v_r + v^p``.

The unknown is the deviation ``d = v - phi`` from a reference steady state
``phi`` sampled on the grid. With ``G(d) = (phi + d)^p - phi^p`` each
implicit Euler step solves

    G(d_new) - G(d_old) = dt * (Lap_h d_new + G(d_new)),

which is the scheme for ``v`` with the discrete residual of ``phi``
subtracted. ``phi`` is therefore an exact discrete equilibrium, and
``G`` is formed with ``expm1``/``log1p`` so tiny far-field deviations do
not cancel against ``phi^p``.

``Lap_h`` is a vertex-centred finite-volume Laplacian in the ``r^(n-1) dr``
measure; its matrix is an M-matrix on any increasing grid.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .exponents import Params, compute_exponents
from .profiles import RadialProfile, radial_laplacian, sinh_grid
from .steady_states import PhiSolution

log = logging.getLogger(__name__)

BOUNDARIES = ("pin_to_phi_alpha", "pin_to_initial")
INITIAL_KINDS = ("above", "capped_above", "below", "exact")


class Status(str, enum.Enum):
    OK = "OK"
    BLOWUP = "BLOWUP"
    NEWTON_FAILURE = "NEWTON_FAILURE"


@dataclass(frozen=True)
class SolverConfig:
    R: float = 1e5
    spacing: float = 0.01
    scale: float = 1.0
    dt_init: float = 1e-3
    dt_max: float = 0.02
    dt_min: float = 1e-10
    newton_tol: float = 1e-10
    newton_max_iter: int = 12
    boundary: str = "pin_to_phi_alpha"
    v_floor: float = 1e-14
    blowup_factor: float = 1e6
    snapshot_every: float | None = None
    max_steps: int = 2_000_000
    stop_on_extinction: bool = False

    def __post_init__(self):
        if not self.R > 10:
            raise ValueError(f"R must exceed 10, got {self.R}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if not 0 < self.dt_min <= self.dt_init <= self.dt_max <= 0.5:
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max <= 0.5")
        if not 0 < self.newton_tol <= 1e-10:
            raise ValueError(f"newton_tol must lie in (0, 1e-10], got {self.newton_tol}")
        if self.newton_max_iter < 2:
            raise ValueError("newton_max_iter must be at least 2")
        if self.spacing <= 0 or self.scale <= 0:
            raise ValueError("grid spacing and scale must be positive")
        if self.nodes_in_unit_ball() < 20:
            raise ValueError("grid must place at least 20 nodes in [0, 1]")

    def nodes_in_unit_ball(self) -> int:
        return int(math.asinh(1.0 / self.scale) / self.spacing) + 1

    def grid(self) -> np.ndarray:
        return sinh_grid(self.R, self.spacing, self.scale)

    def as_dict(self) -> dict:
        return asdict(self)

    def with_(self, **changes) -> "SolverConfig":
        return SolverConfig(**{**asdict(self), **changes})


@dataclass(eq=False)
class EvolutionTrace:
    times: np.ndarray
    center_values: np.ndarray
    center_deviation: np.ndarray
    sup_deviation: np.ndarray
    sup_norm: np.ndarray
    max_increase: np.ndarray
    snapshots: list = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)
    status: Status = Status.OK
    flags: set = field(default_factory=set)
    alpha: float = math.nan
    final: RadialProfile | None = None
    max_newton_residual: float = 0.0

    def __post_init__(self):
        arrays = [self.times, self.center_values, self.center_deviation,
                  self.sup_deviation, self.sup_norm, self.max_increase]
        arrays = [np.asarray(a, dtype=float) for a in arrays]
        if len({a.size for a in arrays}) != 1:
            raise ValueError("trace arrays must be aligned")
        (self.times, self.center_values, self.center_deviation,
         self.sup_deviation, self.sup_norm, self.max_increase) = arrays
        t = self.times
        if t.size and (t[0] != 0.0 or np.any(np.diff(t) <= 0)):
            raise ValueError("trace times must start at 0 and increase strictly")

    def __len__(self) -> int:
        return self.times.size

    def snapshot_at(self, t: float, tol: float = 1e-9) -> RadialProfile:
        for snap in self.snapshots:
            if abs(snap.meta["t"] - t) <= tol:
                return snap
        raise KeyError(f"no snapshot at t={t}")


class FVLaplacian:
    """Radial finite-volume Laplacian on a nonuniform grid.

    Node ``i`` owns ``[r_(i-1/2), r_(i+1/2)]`` (``[0, r_(1/2)]`` at the centre);
    ``lower`` and ``upper`` are the couplings to ``i-1`` and ``i+1``.
    """

    def __init__(self, n: int, r: np.ndarray):
        r = np.asarray(r, dtype=float)
        if r[0] != 0.0:
            raise ValueError("the PDE grid must start at r = 0")
        N = r.size
        dr = np.diff(r)
        face = 0.5 * (r[:-1] + r[1:])
        lo_face = np.concatenate([[0.0], face])[: N - 1]
        hi_face = face
        # |ball(hi)| - |ball(lo)| relative to hi^n, written to avoid overflow
        q = lo_face / hi_face
        vol_ratio = 1.0 - q**n
        # hi^(n-1) / V_i, with V_i = (hi^n - lo^n)/n
        coef = n / (hi_face * vol_ratio)
        self.upper = np.zeros(N)
        self.lower = np.zeros(N)
        self.upper[: N - 1] = coef / dr
        # lo^(n-1)/V_i = q^(n-1) hi^(n-1)/V_i
        self.lower[1 : N - 1] = coef[1:] * q[1:] ** (n - 1) / dr[: N - 2]
        self.n, self.r = n, r

    def apply(self, d: np.ndarray) -> np.ndarray:
        out = np.zeros_like(d)
        out[:-1] = self.upper[:-1] * (d[1:] - d[:-1])
        out[1:-1] += self.lower[1:-1] * (d[:-2] - d[1:-1])
        return out


def make_initial_data(params: Params, alpha: float, kind: str, grid: np.ndarray,
                      b: float = 0.0, gamma: float | None = None, eps: float = 0.0,
                      phi: PhiSolution | None = None) -> RadialProfile:
    """Initial data built around ``phi_alpha``.

    ``above``: ``phi + b (r+1)^-gamma``. ``capped_above``: the same, capped
    by ``L (r+eps)^-nu`` so that it stays below the singular steady state.
    ``below``: ``max(0, phi - b (r+1)^-gamma)``. ``exact``: ``phi`` itself.
    """
    if kind not in INITIAL_KINDS:
        raise ValueError(f"kind must be one of {INITIAL_KINDS}, got {kind!r}")
    grid = np.asarray(grid, dtype=float)
    exps = compute_exponents(params)
    if phi is None:
        phi = PhiSolution(params, alpha, grid[-1])
    base = phi(grid)[0]
    meta = {"n": params.n, "p": params.p, "alpha": float(alpha), "kind": kind}
    if kind == "exact":
        return RadialProfile(grid, base, kind="initial_data", meta=meta)
    if b <= 0:
        raise ValueError(f"b must be positive, got {b}")
    if gamma is None:
        raise ValueError("gamma is required for perturbed initial data")
    if exps.rates_available:
        lo, hi = exps.gamma_window
        if not lo < gamma < hi:
            raise ValueError(f"gamma={gamma} outside the admissible window ({lo:.10g}, {hi:.10g})")
    meta.update(b=float(b), gamma=float(gamma))
    bump = b * (grid + 1.0) ** (-gamma)
    if kind == "below":
        dev = np.maximum(-base, -bump)
    else:
        dev = bump
        if kind == "capped_above":
            if not 0 <= eps < 1:
                raise ValueError(f"eps must lie in [0, 1), got {eps}")
            meta["eps"] = float(eps)
            dev = np.minimum(bump, phi.gap_to_singular(grid, eps))
            short = dev < 0.5 * bump
            if np.any(short):
                r_bad = grid[np.argmax(short)]
                raise ValueError(
                    f"cap L(r+eps)^-nu removes more than half the bump from r={r_bad:.4g} on; "
                    f"decrease eps (currently {eps})")
    pos = grid > 0
    meta["below_singular"] = bool(np.all(dev[pos] <= phi.gap_to_singular(grid[pos])))
    return _with_deviation(grid, base, dev, "initial_data", meta)


def _with_deviation(grid, base, dev, kind, meta) -> RadialProfile:
    """Profile ``base + dev`` that also carries ``dev`` exactly in its meta,
    since far out ``dev`` can be far below the rounding level of ``base``."""
    dev = np.array(dev, dtype=float)
    dev.flags.writeable = False
    return RadialProfile(grid, np.maximum(base + dev, 0.0), kind=kind,
                         meta={**meta, "deviation": dev})


def operator_residual(params: Params, profile: RadialProfile, time_term=None) -> RadialProfile:
    """Pointwise ``P v = (v^p)_t - v_rr - (n-1)/r v_r - v^p``.

    Spatial derivatives are the profile's own (stored or differenced);
    ``time_term`` is ``(v^p)_t`` on the same grid (a profile or an array),
    zero when omitted.
    """
    if time_term is None:
        tt = np.zeros_like(profile.values)
    elif isinstance(time_term, RadialProfile):
        if time_term.grid.shape != profile.grid.shape or not np.array_equal(time_term.grid, profile.grid):
            raise ValueError("time term and profile live on different grids")
        tt = time_term.values
    else:
        tt = np.asarray(time_term, dtype=float)
        if tt.shape != profile.grid.shape:
            raise ValueError("time term and profile live on different grids")
    v = profile.values
    lap = radial_laplacian(params.n, profile.grid, profile.first_derivative(),
                           profile.second_derivative())
    out = tt - lap - np.abs(v) ** (params.p - 1) * v
    return RadialProfile(profile.grid, out, kind="construction",
                         meta={**profile.meta, "operator": "P"})


class _Stepper:
    """Newton solver for one implicit Euler step in deviation form."""

    def __init__(self, params: Params, r: np.ndarray, phi: np.ndarray, cfg: SolverConfig):
        self.p = params.p
        self.lap = FVLaplacian(params.n, r)
        self.phi = phi
        self.phi_p = phi**self.p
        self.cfg = cfg

    def G(self, d):
        # v^p - phi^p, exact to rounding even when |d| << phi
        with np.errstate(divide="ignore"):
            return self.phi_p * np.expm1(self.p * np.log1p(np.maximum(d, -self.phi) / self.phi))

    def dG(self, d):
        v = np.maximum(self.phi + d, 0.0)
        return self.p * np.maximum(v, self.cfg.v_floor) ** (self.p - 1)

    def residual(self, d, G_old, dt):
        F = (1.0 - dt) * self.G(d) - G_old - dt * self.lap.apply(d)
        F[-1] = 0.0
        return F

    def solve(self, d_old, d_bc, dt):
        """Return ``(d_new, iterations, residual)`` or ``(None, iterations, residual)``."""
        cfg = self.cfg
        G_old = self.G(d_old)
        d = d_old.copy()
        d[-1] = d_bc
        N = d.size
        up, lo = self.lap.upper, self.lap.lower
        ab = np.zeros((3, N))
        scale = max(float(np.max(np.abs(G_old))), float(np.max(np.abs(d_old))), 1e-300)
        res = math.inf
        for it in range(1, cfg.newton_max_iter + 1):
            F = self.residual(d, G_old, dt)
            ab[1] = (1.0 - dt) * self.dG(d) + dt * (up + lo)
            ab[0, 1:] = -dt * up[:-1]
            ab[2, :-1] = -dt * lo[1:]
            ab[1, -1] = 1.0
            ab[2, -2] = 0.0
            try:
                delta = solve_banded((1, 1), ab, F, check_finite=False)
            except (np.linalg.LinAlgError, ValueError):
                return None, it, math.inf
            d = d - delta
            # keep v = phi + d nonnegative
            d = np.maximum(d, -self.phi)
            if not np.all(np.isfinite(d)):
                return None, it, math.inf
            res = float(np.max(np.abs(self.residual(d, G_old, dt)))) / scale
            step = float(np.max(np.abs(delta)))
            if res <= cfg.newton_tol or step <= 1e-15 * max(float(np.max(np.abs(d))), 1e-300):
                return d, it, res
        return None, cfg.newton_max_iter, res


def evolve(config: SolverConfig, params: Params, v0: RadialProfile, t_end: float,
           alpha: float | None = None, phi: PhiSolution | None = None) -> EvolutionTrace:
    """Evolve ``v0`` on ``[0, t_end]`` with the reference steady state ``phi_alpha``.

    ``alpha`` defaults to ``v0.meta['alpha']``. If ``v0`` lives on another
    grid it is resampled onto ``config.grid()``.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if alpha is None:
        alpha = v0.meta.get("alpha")
        if alpha is None:
            raise ValueError("alpha is required when v0 carries no alpha in its meta")
    cfg = config
    r = cfg.grid()
    same_grid = v0.grid.shape == r.shape and np.allclose(v0.grid, r, rtol=1e-14, atol=0)
    if not same_grid:
        if v0.r_max < r[-1] * (1 - 1e-12):
            raise ValueError("initial data does not cover the truncation radius")
        v0 = v0.resample(r, kind=v0.kind)
    if np.any(v0.values < 0):
        raise ValueError("initial data must be nonnegative")
    if phi is None:
        phi = PhiSolution(params, alpha, r[-1])
    phi_r = phi(r)[0]
    stepper = _Stepper(params, r, phi_r, cfg)

    dev = v0.meta.get("deviation")
    if same_grid and dev is not None and v0.meta.get("alpha") == alpha:
        d = np.array(dev, dtype=float)
    else:
        d = v0.values - phi_r
    d_bc = 0.0 if cfg.boundary == "pin_to_phi_alpha" else float(d[-1])
    d[-1] = d_bc
    sup0 = float(np.max(phi_r + d))

    times, center, cdev, sdev, snorm, incr = [0.0], [], [], [], [], [0.0]

    def record(dd):
        v = phi_r + dd
        center.append(v[0])
        cdev.append(dd[0])
        sdev.append(float(np.max(np.abs(dd))))
        snorm.append(float(np.max(v)))

    record(d)
    snapshots = [_snapshot(r, phi_r, d, 0.0, params, alpha)]
    next_snap = cfg.snapshot_every if cfg.snapshot_every else math.inf
    status, flags = Status.OK, set()
    max_res = 0.0
    t, dt = 0.0, cfg.dt_init
    steps = 0
    while t < t_end * (1 - 1e-14) and steps < cfg.max_steps:
        target = min(t_end, next_snap)
        h = min(dt, target - t)
        d_new, iters, res = stepper.solve(d, d_bc, h)
        if d_new is None:
            dt = h / 2
            if dt < cfg.dt_min:
                status = Status.NEWTON_FAILURE
                log.warning("Newton failed at t=%.6g with dt=%.3g; returning partial trace", t, h)
                break
            continue
        steps += 1
        max_res = max(max_res, res)
        incr.append(float(np.max(d_new - d)))
        t = target if abs(t + h - target) <= 1e-12 * max(1.0, target) else t + h
        d = d_new
        times.append(t)
        record(d)
        if t >= next_snap * (1 - 1e-12):
            snapshots.append(_snapshot(r, phi_r, d, t, params, alpha))
            next_snap += cfg.snapshot_every
        # relative test: far out phi itself can sit below any absolute floor
        if np.any(phi_r[:-1] + d[:-1] <= cfg.v_floor * phi_r[:-1]):
            flags.add("EXTINCTION_REGION")
            if cfg.stop_on_extinction:
                break
        if snorm[-1] > cfg.blowup_factor * sup0:
            status = Status.BLOWUP
            break
        if iters <= 3:
            dt = min(cfg.dt_max, h * 1.3)
        elif iters > cfg.newton_max_iter // 2:
            dt = max(cfg.dt_min, h / 2)
        else:
            dt = h

    final = _snapshot(r, phi_r, d, t, params, alpha)
    if snapshots[-1].meta["t"] != t:
        snapshots.append(final)
    return EvolutionTrace(
        times=np.array(times), center_values=np.array(center), center_deviation=np.array(cdev),
        sup_deviation=np.array(sdev), sup_norm=np.array(snorm), max_increase=np.array(incr),
        snapshots=snapshots, config_echo={**cfg.as_dict(), "n": params.n, "p": params.p,
                                          "alpha": float(alpha), "t_end": float(t_end)},
        status=status, flags=flags, alpha=float(alpha), final=final,
        max_newton_residual=max_res,
    )


def _snapshot(r, phi_r, d, t, params, alpha) -> RadialProfile:
    return _with_deviation(r, phi_r, d, "snapshot",
                           {"t": float(t), "n": params.n, "p": params.p, "alpha": float(alpha)})
