"""Critical exponents of the steady-state problem and the tail/rate bijection.

Everything here is closed form. The steady states solve
``phi'' + (n-1)/r phi' + phi^p = 0`` and the time-rescaled flow is
``(v^p)_t = Delta v + v^p``; a perturbation with spatial tail ``r^-gamma``
decays at rate ``kappa(gamma) = gamma (n-2-gamma) / (p L^(p-1)) - 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class Regime(str, enum.Enum):
    NO_GROUND_STATES = "NO_GROUND_STATES"
    INTERSECTING = "INTERSECTING"
    ORDERED = "ORDERED"


@dataclass(frozen=True)
class Params:
    """Problem parameters: dimension ``n`` and exponent ``p = 1/m``."""

    n: int
    p: float

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n:
            raise ValueError(f"n must be an integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", float(self.p))
        if self.n < 3:
            raise ValueError(f"n must be >= 3, got {self.n}")
        if not math.isfinite(self.p) or self.p <= 1.0:
            raise ValueError(f"p must be a finite number > 1, got {self.p}")
        if abs(self.m * self.p - 1.0) > 4 * math.ulp(1.0):
            raise ValueError(f"m*p != 1 for p={self.p}")

    @property
    def m(self) -> float:
        return 1.0 / self.p

    @property
    def nu(self) -> float:
        return 2.0 / (self.p - 1.0)


@dataclass(frozen=True)
class ExponentSet:
    """Closed-form exponents for one ``Params``.

    ``p_c`` is ``None`` with ``p_c_infinite=True`` for ``n <= 10``.
    ``lambda1``, ``kappa0`` and ``gamma_window`` are ``None`` unless
    ``p > p_c`` (the regime where the rate theory applies).
    """

    params: Params
    p_S: float
    p_c: float | None
    p_c_infinite: bool
    nu: float
    L: float
    p_L_pm1: float
    discriminant: float
    lambda1: float | None
    kappa0: float | None
    gamma_window: tuple[float, float] | None
    regime: Regime

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def p(self) -> float:
        return self.params.p

    @property
    def rates_available(self) -> bool:
        return self.gamma_window is not None

    def require_rates(self) -> None:
        if not self.rates_available:
            raise ValueError(
                f"rate machinery needs p > p_c; got n={self.n}, p={self.p}, "
                f"p_c={'inf' if self.p_c_infinite else self.p_c}"
            )

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "m": self.params.m,
            "p_S": self.p_S,
            "p_c": self.p_c,
            "p_c_infinite": self.p_c_infinite,
            "nu": self.nu,
            "L": self.L,
            "pL^(p-1)": self.p_L_pm1,
            "lambda1": self.lambda1,
            "kappa0": self.kappa0,
            "gamma_lo": None if self.gamma_window is None else self.gamma_window[0],
            "gamma_hi": None if self.gamma_window is None else self.gamma_window[1],
            "regime": self.regime.value,
        }


def sobolev_exponent(n: int) -> float:
    return (n + 2) / (n - 2)


def joseph_lundgren_exponent(n: int) -> float | None:
    """``p_c`` for ``n > 10``; ``None`` stands for +infinity."""
    if n <= 10:
        return None
    return ((n - 2) ** 2 - 4 * n + 8 * math.sqrt(n - 1)) / ((n - 2) * (n - 10))


def _at_least_pc(p: float, p_c: float | None) -> bool:
    return p_c is not None and p >= p_c


def classify_regime(params: Params) -> Regime:
    if params.p < sobolev_exponent(params.n):
        return Regime.NO_GROUND_STATES
    if _at_least_pc(params.p, joseph_lundgren_exponent(params.n)):
        return Regime.ORDERED
    return Regime.INTERSECTING


def compute_exponents(params: Params) -> ExponentSet:
    n, p = params.n, params.p
    nu = params.nu
    lp = nu * (n - 2 - nu)
    L = lp ** (1.0 / (p - 1.0)) if lp > 0 else float("nan")
    # p * nu = nu + 2 identically, so this avoids forming L^(p-1) from L
    p_L_pm1 = (nu + 2.0) * (n - 2.0 - nu)
    p_c = joseph_lundgren_exponent(n)
    b = n - 2.0 - 2.0 * nu
    disc = b * b - 8.0 * (n - 2.0 - nu)

    lambda1 = kappa0 = window = None
    if p_c is not None and p > p_c and disc > 0:
        # smaller root of x^2 - b x + 2(n-2-nu), written without cancellation
        lambda1 = 4.0 * (n - 2.0 - nu) / (b + math.sqrt(disc))
        kappa0 = (n - 2.0) ** 2 / (4.0 * p_L_pm1) - 1.0
        if kappa0 > 0:
            window = (nu + lambda1, (n - 2.0) / 2.0)

    return ExponentSet(
        params=params,
        p_S=sobolev_exponent(n),
        p_c=p_c,
        p_c_infinite=p_c is None,
        nu=nu,
        L=L,
        p_L_pm1=p_L_pm1,
        discriminant=disc,
        lambda1=lambda1,
        kappa0=kappa0,
        gamma_window=window,
        regime=classify_regime(params),
    )


def kappa_of_gamma(exps: ExponentSet, gamma: float, diagnostic: bool = False) -> float:
    """Decay rate attached to a perturbation tail ``r^-gamma``."""
    exps.require_rates()
    lo, hi = exps.gamma_window
    inside = lo < gamma < hi
    on_hull = lo <= gamma <= hi
    if not (inside or (diagnostic and on_hull)):
        raise ValueError(
            f"gamma={gamma} outside the admissible window ({lo:.10g}, {hi:.10g})"
        )
    n = exps.n
    return gamma * (n - 2.0 - gamma) / exps.p_L_pm1 - 1.0


def gamma_of_kappa(exps: ExponentSet, kappa: float) -> float:
    """Inverse of ``kappa_of_gamma``: the smaller root of
    ``gamma (gamma + 2 - n) + (kappa + 1) p L^(p-1) = 0``."""
    exps.require_rates()
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    if kappa >= exps.kappa0:
        raise ValueError(f"kappa={kappa} >= kappa0={exps.kappa0}: no real tail exponent")
    half = (exps.n - 2.0) / 2.0
    c = (kappa + 1.0) * exps.p_L_pm1
    return c / (half + math.sqrt(half * half - c))
