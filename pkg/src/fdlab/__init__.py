"""Numerical laboratory for sharp convergence rates of radial fast diffusion."""

from .exponents import (
    ExponentSet,
    Params,
    Regime,
    classify_regime,
    compute_exponents,
    gamma_of_kappa,
    kappa_of_gamma,
)
from .profiles import RadialProfile

__version__ = "0.1.0"

__all__ = [
    "ExponentSet",
    "Params",
    "RadialProfile",
    "Regime",
    "classify_regime",
    "compute_exponents",
    "gamma_of_kappa",
    "kappa_of_gamma",
]
