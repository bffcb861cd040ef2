"""The acceptance battery: ten criteria, each returning measured values and a
pass flag. Shared by ``tests/test_acceptance.py`` and the ``suite`` command."""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .comparison_lab import (check_lemma7, check_lemma9, evolve_supersolution, run_certification,
                             search_corner)
from .exponents import Params, compute_exponents, gamma_of_kappa, kappa_of_gamma
from .linearized_profiles import solve_f
from .profiles import sinh_grid
from .radial_pde import EvolutionTrace
from .rates import (default_t_end, profile_to_original, rate_config, run_instability,
                    run_theorem1, separable_solution, t_of_tau, tau_of_t, to_original_variables)
from .steady_states import fit_tail, ode_residual, singular_profile, solve_phi

# closed forms evaluated once in 50-digit arithmetic
LAMBDA1_20_3 = 2.5227744249483388
KAPPA0_20_3 = 0.58823529411764706
SQRT17 = 4.1231056256176605

NAMES = {
    1: "exponent identities",
    2: "steady-state fidelity",
    3: "linearized profiles",
    4: "corner construction",
    5: "sub/supersolution signs",
    6: "sharp rate reproduction",
    7: "rate monotonicity in gamma",
    8: "instability dichotomy",
    9: "inequality lemmas",
    10: "transform consistency",
}


@dataclass
class CriterionResult:
    number: int
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def name(self) -> str:
        return NAMES[self.number]

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} [{tag}] {self.name} ({self.seconds:.1f} s)"


def _timed(number):
    def deco(fn):
        @functools.wraps(fn)
        def run() -> CriterionResult:
            t = time.perf_counter()
            passed, measured = fn()
            return CriterionResult(number, bool(passed), measured, time.perf_counter() - t)
        return run
    return deco


def _rel(a, b):
    return abs(a - b) / abs(b)


P20_3 = Params(20, 3.0)


@_timed(1)
def criterion_1():
    e = compute_exponents(P20_3)
    k6 = kappa_of_gamma(e, 6.0)
    g = gamma_of_kappa(e, 7 / 17)
    errs = {"nu": _rel(e.nu, 1.0), "L": _rel(e.L, SQRT17), "lambda1": _rel(e.lambda1, LAMBDA1_20_3),
            "kappa0": _rel(e.kappa0, KAPPA0_20_3), "kappa(6)": _rel(k6, 7 / 17),
            "gamma(7/17)": _rel(g, 6.0)}
    lam11 = compute_exponents(Params(11, 7.0)).lambda1
    errs["lambda1(11,7)"] = abs(lam11 - 4.0) / 4.0
    ok = all(v <= 1e-10 for k, v in errs.items() if k != "lambda1(11,7)") \
        and errs["lambda1(11,7)"] <= 1e-12
    return ok, errs


@_timed(2)
def criterion_2():
    e = compute_exponents(P20_3)
    grid = sinh_grid(1e4, 0.01)[1:]
    sing = singular_profile(P20_3, grid)
    res = ode_residual(P20_3, sing) / sing.values**P20_3.p
    sing_res = float(np.max(np.abs(res)))

    r_max = 1e4
    base = solve_phi(P20_3, 1.0, r_max)
    r = np.geomspace(1e-2, 1e3, 400)
    scale_err = 0.0
    for a in (0.5, 2.0):
        pa = solve_phi(P20_3, a, r_max)
        lhs = pa(r)
        rhs = a * base(a ** ((P20_3.p - 1) / 2) * r)
        scale_err = max(scale_err, float(np.max(np.abs(lhs / rhs - 1))))

    alphas = (0.5, 1.0, 2.0, 4.0)
    coef, lead = [], []
    for a in alphas:
        prof = solve_phi(P20_3, a, 1e6)
        free = fit_tail(prof, "two_term", window=(1e2, 1e4), exps=e, fix_leading=False)
        lead.append(free.leading)
        coef.append(fit_tail(prof, "two_term", window=(1e2, 1e4), exps=e).coefficient)
    coef = np.array(coef)
    inv = coef * np.array(alphas) ** (e.lambda1 * (P20_3.p - 1) / 2)
    L_err = max(_rel(x, e.L) for x in lead)
    spread = float(np.ptp(inv) / np.mean(inv))
    decreasing = bool(np.all(np.diff(coef) < 0))
    ok = sing_res <= 1e-12 and scale_err <= 1e-6 and L_err <= 5e-3 and decreasing and spread <= 1e-2
    return ok, {"singular_residual": sing_res, "scaling_rel_err": scale_err,
                "L_rel_err": L_err, "a_alpha": coef.tolist(), "a_decreasing": decreasing,
                "invariant_spread": spread}


@_timed(3)
def criterion_3():
    e = compute_exponents(P20_3)
    out = {}
    ok = True
    for frac in (0.1, 0.3, 0.5):
        k = frac * e.kappa0
        lp = solve_f(P20_3, 1.0, k, 1e4)
        pos = bool(np.all(lp.base.values > 0))
        fit = fit_tail(lp.base, "single_power", window=(1e2, 1e4))
        err = _rel(fit.exponent, lp.gamma)
        out[f"{frac}k0"] = {"positive": pos, "gamma": lp.gamma, "fitted": fit.exponent,
                            "rel_err": err}
        ok = ok and pos and err <= 0.02
    return ok, out


@_timed(4)
def criterion_4():
    e = compute_exponents(P20_3)
    c, rep, attempts = search_corner(P20_3, 1.0, kappa_of_gamma(e, 6.0))
    if c is None:
        return False, {"attempts": attempts}
    mono, _ = evolve_supersolution(c, t_end=10.0)
    ok = rep.passed and rep.max_value <= 1e-10 and rep.jump_ok and mono.nonincreasing
    return ok, {"A": c.A, "eps": c.eps, "r_corner": c.r_corner, "max_residual": rep.max_value,
                "jump": c.jump, "eps_table": rep.eps_table, "max_increase": mono.max_increase,
                "increase_tol": mono.tolerance}


@_timed(5)
def criterion_5():
    out = {}
    for lemma in (6, 10, 8, 4):
        d = run_certification(P20_3, lemma, gamma=6.0)
        out[lemma] = {"passed": d["passed"], "hypotheses_met": d["hypotheses_met"],
                      "extremal": d["extremal_residual"]}
    return all(v["passed"] and v["hypotheses_met"] for v in out.values()), out


@functools.lru_cache(maxsize=None)
def rate_run(gamma: float, direction: str, R_factor: float = 1.0, dt_factor: float = 1.0,
             b: float = 0.1) -> tuple:
    """Cached upper-bound rate run at (n=20, p=3, alpha=1).

    Returns ``(center rate, center r^2, verdict, sup rate)``.
    """
    e = compute_exponents(P20_3)
    t_end = default_t_end(kappa_of_gamma(e, gamma))
    base = rate_config(P20_3, gamma, t_end)
    cfg = base.with_(R=base.R * R_factor, dt_max=base.dt_max * dt_factor,
                     dt_init=base.dt_init * dt_factor)
    rep, _ = run_theorem1(P20_3, 1.0, b, gamma, direction, config=cfg, t_end=t_end)
    return (rep.fitted_rate_center.rate, rep.fitted_rate_center.r_squared, rep.verdict.value,
            rep.fitted_rate_above.rate)


@_timed(6)
def criterion_6():
    e = compute_exponents(P20_3)
    out = {}
    ok = True
    for g in (4.5, 6.0):
        k = kappa_of_gamma(e, g)
        for d in ("above", "below"):
            rate, r2, verdict, _ = rate_run(g, d)
            dt_change = _rel(rate_run(g, d, dt_factor=0.5)[0], rate)
            R_change = _rel(rate_run(g, d, R_factor=2.0)[0], rate)
            err = _rel(rate, k)
            good = err <= 0.1 and r2 > 0.999 and dt_change < 0.01 and R_change < 0.02
            ok = ok and good
            out[f"gamma={g},{d}"] = {"predicted": k, "rate": rate, "rel_err": err, "r2": r2,
                                     "dt_halving": dt_change, "R_doubling": R_change,
                                     "verdict": verdict}
    return ok, out


@_timed(7)
def criterion_7():
    rates = [rate_run(g, "above")[0] for g in (4.0, 5.0, 6.0, 7.0)]
    return bool(np.all(np.diff(rates) > 0)), {"gammas": [4.0, 5.0, 6.0, 7.0], "rates": rates}


@_timed(8)
def criterion_8():
    P = Params(20, 1.4)
    out = {}
    for side in ("above", "below"):
        rep, _ = run_instability(P, 1.0, 0.05, side, t_end=50.0)
        out[side] = {"ratio": rep.ratio, "t_factor2": rep.t_factor2, "monotone": rep.monotone,
                     "status": rep.status, "flags": list(rep.flags), "passed": rep.passed}
    return out["above"]["passed"] and out["below"]["passed"], out


@_timed(9)
def criterion_9():
    k = 7 / 17
    l7 = check_lemma7(P20_3, 1.0, 2.0, 1.0, k, 1.0, 1.0)
    l9 = check_lemma9(P20_3, 1.0, 1.0, k)
    ok = l7.status == "OK" and l7.c_fit > 0 and math.isfinite(l7.r0) \
        and math.isfinite(l9.C_fit) and l9.interior
    return ok, {"r0": l7.r0, "c_fit": l7.c_fit, "C_fit": l9.C_fit, "r_argsup": l9.r_argsup,
                "interior": l9.interior}


@_timed(10)
def criterion_10():
    m, T = 1 / P20_3.p, 1.0
    phi = solve_phi(P20_3, 1.0, 1e3)
    # sample in tau so that T - tau is exact; uniform t samples would crowd tau against T
    t = t_of_tau(np.linspace(0.0, 0.999, 61), m, T)
    ones = np.ones_like(t)
    trace = EvolutionTrace(t, phi.values[0] * ones, 0 * t, 0 * t, phi.values.max() * ones, 0 * t,
                           config_echo={"n": P20_3.n, "p": P20_3.p})
    ot = to_original_variables(trace, m, T)
    sep_err = 0.0
    for tk in t:
        u = profile_to_original(phi, tk, m, T)
        exact = separable_solution(phi.values, tau_of_t(tk, m, T), m, T)
        sep_err = max(sep_err, float(np.max(np.abs(u.values / exact - 1))))
    center = separable_solution(phi.values[0], ot.tau, m, T)
    sep_err = max(sep_err, float(np.max(np.abs(ot.u_center / center - 1))))
    # t -> tau -> t on the range where tau is still well separated from T
    t_short = np.linspace(0.0, 10.0, 101)
    rt = float(np.max(np.abs(t_of_tau(tau_of_t(t_short, m, T), m, T) - t_short)))
    tau_grid = np.linspace(0.0, 0.999, 301)
    rt_tau = float(np.max(np.abs(tau_of_t(t_of_tau(tau_grid, m, T), m, T) - tau_grid)))
    _, v_back = ot.to_rescaled()
    v_err = float(np.max(np.abs(v_back / trace.center_values - 1)))
    ok = sep_err < 1e-10 and rt <= 1e-12 and rt_tau <= 1e-12 and v_err <= 1e-12 and ot.tau[0] == 0.0
    return ok, {"separable_rel_err": sep_err, "t_roundtrip": rt, "tau_roundtrip": rt_tau,
                "v_roundtrip": v_err}


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


def run_suite(numbers=None, echo=print) -> list[CriterionResult]:
    results = []
    for i in numbers or sorted(CRITERIA):
        res = CRITERIA[i]()
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
