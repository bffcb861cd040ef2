"""End-to-end rate experiments, the instability dichotomy and the change of
variables between the rescaled flow and the original fast-diffusion flow."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .exponents import Params, Regime, compute_exponents, kappa_of_gamma
from .profiles import RadialProfile
from .radial_pde import EvolutionTrace, SolverConfig, Status, evolve, make_initial_data
from .steady_states import PhiSolution

log = logging.getLogger(__name__)

R_SQUARED_MIN = 0.999
MIN_SAMPLES = 10


class Verdict(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class RateFit:
    rate: float
    intercept: float
    window: tuple
    r_squared: float
    n_points: int

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ValueError("fit window must satisfy t_lo < t_hi")
        if self.n_points < MIN_SAMPLES:
            raise ValueError(f"need at least {MIN_SAMPLES} samples, got {self.n_points}")
        if not 0.0 <= self.r_squared <= 1.0:
            raise ValueError(f"r_squared outside [0, 1]: {self.r_squared}")

    def as_dict(self) -> dict:
        return {"rate": self.rate, "intercept": self.intercept, "window": list(self.window),
                "r_squared": self.r_squared, "n_points": self.n_points}


@dataclass(frozen=True)
class ExperimentReport:
    theorem: int
    direction: str
    config_echo: dict
    predicted_rate: float
    fitted_rate_above: RateFit
    fitted_rate_center: RateFit
    verdict: Verdict
    tolerance: float
    notes: tuple = ()

    def as_dict(self) -> dict:
        return {"theorem": self.theorem, "direction": self.direction,
                "config_echo": dict(self.config_echo), "predicted_rate": self.predicted_rate,
                "fitted_rate_above": self.fitted_rate_above.as_dict(),
                "fitted_rate_center": self.fitted_rate_center.as_dict(),
                "verdict": self.verdict.value, "tolerance": self.tolerance,
                "notes": list(self.notes)}


def _channel(trace: EvolutionTrace, channel: str, direction: str | None) -> np.ndarray:
    if channel == "sup":
        return trace.sup_deviation
    if channel != "center":
        raise ValueError(f"channel must be 'center' or 'sup', got {channel!r}")
    d = trace.center_deviation
    if direction is None:
        direction = "below" if d[0] < 0 else "above"
    if direction not in ("above", "below"):
        raise ValueError(f"direction must be 'above' or 'below', got {direction!r}")
    return d if direction == "above" else -d


def fit_rate(trace: EvolutionTrace, channel: str = "center", window=None,
             direction: str | None = None) -> RateFit:
    """Least-squares slope of ``ln(deviation)`` against ``t`` on ``window``.

    ``center`` uses ``v(0,t) - phi(0)`` (sign-flipped for ``below``,
    inferred from ``t = 0`` when ``direction`` is omitted); ``sup`` uses
    ``max_r |v - phi|``. The default window is ``[t_end/3, 0.9 t_end]``.
    """
    t = trace.times
    if window is None:
        window = (max(t[-1] / 3, 2.0), 0.9 * t[-1])
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError(f"empty fit window ({lo}, {hi})")
    y = _channel(trace, channel, direction)
    sel = (t >= lo) & (t <= hi)
    if np.count_nonzero(sel) < MIN_SAMPLES:
        raise ValueError(f"only {np.count_nonzero(sel)} samples in window ({lo}, {hi}); "
                         f"need {MIN_SAMPLES}")
    ys = y[sel]
    if np.any(ys <= 0):
        bad = t[sel][np.argmax(ys <= 0)]
        raise ValueError(f"{channel} deviation is nonpositive at t={bad:.6g}: the channel "
                         "crossed zero (from-above/from-below assumption violated)")
    ts = t[sel]
    ly = np.log(ys)
    if np.ptp(ly) == 0.0:
        return RateFit(0.0, float(ly[0]), (lo, hi), 0.0, int(ts.size))
    res = stats.linregress(ts, ly)
    r2 = float(min(max(res.rvalue**2, 0.0), 1.0))
    return RateFit(float(-res.slope), float(res.intercept), (lo, hi), r2, int(ts.size))


def default_t_end(rate: float) -> float:
    return max(25.0, 8.0 / rate)


def suggest_radius(params: Params, gamma: float, t_end: float, safety: float = 2.0,
                   r_min: float = 1e4, r_max: float = 1e12) -> float:
    """Truncation radius whose boundary influence reaches ``r = 0`` only after
    ``safety * t_end``.

    In the far field the linearized flow for ``r^gamma (v - phi)`` drifts
    inwards in ``ln r`` at speed ``(n - 2 - 2 gamma) / (p L^(p-1))``.
    """
    exps = compute_exponents(params)
    speed = (params.n - 2 - 2 * gamma) / exps.p_L_pm1
    if speed <= 0:
        return r_max
    return float(min(max(math.exp(safety * t_end * speed), r_min), r_max))


def rate_config(params: Params, gamma: float, t_end: float, **overrides) -> SolverConfig:
    return SolverConfig(**{"R": suggest_radius(params, gamma, t_end), **overrides})


def _verdict(fits, predicted, tol, lower_only=False) -> Verdict:
    if any(f.r_squared < R_SQUARED_MIN for f in fits):
        return Verdict.INCONCLUSIVE
    if lower_only:
        ok = all(f.rate <= predicted * (1 + tol) for f in fits)
    else:
        ok = all(abs(f.rate - predicted) <= tol * predicted for f in fits)
    return Verdict.PASS if ok else Verdict.FAIL


def _run(theorem, params, alpha, b, gamma, direction, config, t_end, window, tolerance):
    exps = compute_exponents(params)
    exps.require_rates()
    if direction not in ("above", "below"):
        raise ValueError(f"direction must be 'above' or 'below', got {direction!r}")
    kappa = kappa_of_gamma(exps, gamma)
    if t_end is None:
        t_end = default_t_end(kappa)
    if config is None:
        config = rate_config(params, gamma, t_end)
    grid = config.grid()
    phi = PhiSolution(params, alpha, grid[-1])
    if direction == "below":
        kind = "below"
    else:
        kind = "capped_above" if theorem == 1 else "above"
    v0 = make_initial_data(params, alpha, kind, grid, b=b, gamma=gamma, phi=phi)
    trace = evolve(config, params, v0, t_end, alpha=alpha, phi=phi)
    notes = []
    if trace.status is not Status.OK:
        notes.append(f"solver status {trace.status.value}")
    if not v0.meta.get("below_singular", True):
        notes.append("initial data not below the singular steady state")
    fit_c = fit_rate(trace, "center", window, direction)
    fit_s = fit_rate(trace, "sup", window, direction)
    if theorem == 1:
        verdict = _verdict([fit_c, fit_s], kappa, tolerance)
    else:
        verdict = _verdict([fit_c], kappa, tolerance, lower_only=True)
    if trace.status is not Status.OK:
        verdict = Verdict.INCONCLUSIVE
    echo = {**trace.config_echo, "alpha": alpha, "b": b, "gamma": gamma,
            "direction": direction, "theorem": theorem}
    rep = ExperimentReport(theorem, direction, echo, kappa, fit_s, fit_c, verdict,
                           tolerance, tuple(notes))
    return rep, trace


def run_theorem1(params: Params, alpha: float, b: float, gamma: float, direction: str,
                 config: SolverConfig | None = None, t_end: float | None = None,
                 window=None, tolerance: float = 0.1):
    """Upper-bound experiment: both channels must decay at ``kappa(gamma)``.

    ``above`` starts from ``phi + b (r+1)^-gamma`` capped by ``L r^-nu``;
    ``below`` from ``max(0, phi - b (r+1)^-gamma)``. Returns ``(report, trace)``.
    """
    return _run(1, params, alpha, b, gamma, direction, config, t_end, window, tolerance)


def run_theorem2(params: Params, alpha: float, b: float, gamma: float, direction: str,
                 config: SolverConfig | None = None, t_end: float | None = None,
                 window=None, tolerance: float = 0.1):
    """Lower-bound experiment: the center deviation must not decay faster than
    ``kappa(gamma) (1 + tolerance)``. Initial data are the uncapped
    ``phi +- b (r+1)^-gamma`` (floored at 0 below)."""
    return _run(2, params, alpha, b, gamma, direction, config, t_end, window, tolerance)


# ---------------------------------------------------------------- instability

@dataclass(frozen=True)
class InstabilityReport:
    side: str
    eps: float
    t_end: float
    sup_norm_initial: float
    sup_norm_final: float
    ratio: float
    t_factor2: float | None
    monotone: bool
    status: str
    flags: tuple
    passed: bool
    config_echo: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["flags"] = list(self.flags)
        return d


def instability_data(params: Params, alpha: float, eps: float, side: str, grid,
                     phis: tuple | None = None) -> RadialProfile:
    """``max(phi_alpha, phi_(alpha+eps))`` (above) or ``min(phi_alpha, phi_(alpha-eps))`` (below)."""
    if side not in ("above", "below"):
        raise ValueError(f"side must be 'above' or 'below', got {side!r}")
    other = alpha + eps if side == "above" else alpha - eps
    if other <= 0:
        raise ValueError("alpha - eps must stay positive")
    grid = np.asarray(grid, dtype=float)
    pa, po = phis or (PhiSolution(params, alpha, grid[-1]), PhiSolution(params, other, grid[-1]))
    base = pa(grid)[0]
    diff = np.empty_like(grid)
    far = grid > max(pa.r1, po.r1)
    near = ~far
    diff[near] = po(grid[near])[0] - base[near]
    # far field: the difference of the two tail deviations, free of cancellation
    rf = grid[far]
    diff[far] = rf ** (-pa.exps.nu) * (po.tail_deviation(rf) - pa.tail_deviation(rf))
    dev = np.maximum(diff, 0.0) if side == "above" else np.minimum(diff, 0.0)
    dev.flags.writeable = False
    meta = {"n": params.n, "p": params.p, "alpha": float(alpha), "kind": f"instability_{side}",
            "eps": float(eps), "deviation": dev}
    return RadialProfile(grid, base + dev, kind="initial_data", meta=meta)


def instability_config(**overrides) -> SolverConfig:
    return SolverConfig(**{"R": 1e3, "boundary": "pin_to_initial", "dt_max": 0.05,
                           "stop_on_extinction": True, **overrides})


def run_instability(params: Params, alpha: float, eps: float, side: str,
                    config: SolverConfig | None = None, t_end: float = 50.0,
                    factor: float = 2.0) -> tuple[InstabilityReport, EvolutionTrace]:
    """Evolve the max/min of two intersecting steady states.

    ``above`` passes when the sup norm grows by ``factor`` (or the solver
    reports blow-up) with nondecreasing center value; ``below`` when the sup
    norm shrinks by ``factor`` (or an extinction region forms) with
    nonincreasing sup norm.
    """
    exps = compute_exponents(params)
    if exps.regime is not Regime.INTERSECTING:
        raise ValueError(f"instability experiment needs the INTERSECTING regime "
                         f"(p_S <= p < p_c); got {exps.regime.value} for n={params.n}, p={params.p}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    cfg = config or instability_config()
    grid = cfg.grid()
    v0 = instability_data(params, alpha, eps, side, grid)
    trace = evolve(cfg, params, v0, t_end, alpha=alpha)
    s = trace.sup_norm
    ratio = float(s[-1] / s[0])
    slack = 1e-12 * float(np.max(s))
    if side == "above":
        c = trace.center_values
        monotone = bool(np.all(np.diff(c) >= -slack))
        hit = np.flatnonzero(s >= factor * s[0])
        event = trace.status is Status.BLOWUP
    else:
        monotone = bool(np.all(np.diff(s) <= slack))
        hit = np.flatnonzero(s <= s[0] / factor)
        event = "EXTINCTION_REGION" in trace.flags
    t2 = float(trace.times[hit[0]]) if hit.size else None
    passed = monotone and (t2 is not None or event)
    rep = InstabilityReport(side, float(eps), float(t_end), float(s[0]), float(s[-1]), ratio,
                            t2, monotone, trace.status.value, tuple(sorted(trace.flags)),
                            bool(passed), {**trace.config_echo, "eps": eps, "side": side})
    return rep, trace


# ---------------------------------------------------------------- change of variables

def _check_m(m: float) -> None:
    if not 0 < m < 1:
        raise ValueError(f"m must lie in (0, 1), got {m}")


def tau_of_t(t, m: float, T: float) -> np.ndarray:
    """``tau = T (1 - exp(-(1-m) t))``."""
    _check_m(m)
    return -T * np.expm1(-(1 - m) * np.asarray(t, dtype=float))


def t_of_tau(tau, m: float, T: float) -> np.ndarray:
    """``t = -ln((T - tau)/T) / (1 - m)``."""
    _check_m(m)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau >= T) or np.any(tau < 0):
        raise ValueError("tau must lie in [0, T)")
    return -np.log1p(-tau / T) / (1 - m)


def _time_factor(t, m, T):
    """``(1-m)(T - tau)`` written through ``t`` without cancellation."""
    return (1 - m) * T * np.exp(-(1 - m) * np.asarray(t, dtype=float))


def u_of_v(v, t, m: float, T: float) -> np.ndarray:
    """``u = ((1-m)(T-tau))^(1/(1-m)) v^(1/m)``."""
    _check_m(m)
    return _time_factor(t, m, T) ** (1 / (1 - m)) * np.asarray(v, dtype=float) ** (1 / m)


def v_of_u(u, t, m: float, T: float) -> np.ndarray:
    """Inverse of ``u_of_v``: ``v = ((1-m)(T-tau))^(-m/(1-m)) u^m``."""
    _check_m(m)
    return _time_factor(t, m, T) ** (-m / (1 - m)) * np.asarray(u, dtype=float) ** m


def separable_solution(phi_values, tau, m: float, T: float) -> np.ndarray:
    """``((1-m)(T-tau))^(1/(1-m)) phi^(1/m)``."""
    _check_m(m)
    tau = np.asarray(tau, dtype=float)
    return ((1 - m) * (T - tau)) ** (1 / (1 - m)) * np.asarray(phi_values, dtype=float) ** (1 / m)


@dataclass(frozen=True, eq=False)
class OriginalTrace:
    """Center values of the original-variable solution ``u(0, tau)``."""

    t: np.ndarray
    tau: np.ndarray
    u_center: np.ndarray
    m: float
    T: float
    roundtrip_error: float

    def to_rescaled(self) -> tuple[np.ndarray, np.ndarray]:
        """``(t, v(0, t))`` recovered from ``(tau, u)``."""
        t = t_of_tau(self.tau, self.m, self.T)
        return t, v_of_u(self.u_center, t, self.m, self.T)


def to_original_variables(trace: EvolutionTrace, m: float, T: float,
                          roundtrip_tol: float = 1e-12) -> OriginalTrace:
    """Map the center channel of ``trace`` to ``(tau_k, u(0, tau_k))``."""
    _check_m(m)
    if T <= 0:
        raise ValueError("T must be positive")
    p = trace.config_echo.get("p")
    if p is not None and abs(m * p - 1) > 1e-12:
        raise ValueError(f"m={m} inconsistent with the trace's p={p}")
    t = trace.times
    tau = tau_of_t(t, m, T)
    if np.any(tau >= T):
        raise ValueError("times too large: tau reached T in floating point")
    # tau -> t -> tau is well conditioned; t -> tau -> t loses digits once tau nears T
    err = float(np.max(np.abs(tau_of_t(t_of_tau(tau, m, T), m, T) - tau)) / T)
    if err > roundtrip_tol:
        raise ArithmeticError(f"tau -> t -> tau round trip error {err:.3g} > {roundtrip_tol}")
    u = u_of_v(trace.center_values, t, m, T)
    return OriginalTrace(t.copy(), tau, u, float(m), float(T), err)


def profile_to_original(profile: RadialProfile, t: float, m: float, T: float) -> RadialProfile:
    """Snapshot ``v(., t)`` as ``u(., tau(t))``."""
    u = u_of_v(profile.values, t, m, T)
    meta = {k: v for k, v in profile.meta.items() if k != "deviation"}
    meta.update(t=float(t), tau=float(tau_of_t(t, m, T)), m=float(m), T=float(T))
    return RadialProfile(profile.grid, u, kind="snapshot", meta=meta)
