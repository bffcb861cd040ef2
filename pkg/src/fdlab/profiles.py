"""Radial functions sampled on a 1-D grid, plus the grid/stencil helpers
shared by the ODE and PDE modules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

KINDS = ("steady_state", "linearized", "initial_data", "snapshot", "analytic", "construction")


def sinh_grid(R: float, spacing: float = 0.01, scale: float = 1.0) -> np.ndarray:
    """Nodes ``r_i = scale * sinh(i * h)`` on ``[0, R]``.

    Uniform near the origin, log-uniform (step ``h`` in ``ln r``) far out.
    ``h`` is shrunk slightly so that the last node lands exactly on ``R``.
    """
    if R <= 0 or spacing <= 0 or scale <= 0:
        raise ValueError("R, spacing and scale must be positive")
    rho_max = math.asinh(R / scale)
    size = max(int(math.ceil(rho_max / spacing)), 4)
    rho = np.linspace(0.0, rho_max, size + 1)
    r = scale * np.sinh(rho)
    r[-1] = R
    return r


def fd_weights(x: np.ndarray, order: int, width: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference weights for the ``order``-th derivative on an
    arbitrary increasing grid, using ``width`` neighbouring nodes.

    Returns ``(idx, w)`` with shapes ``(N, width)`` so that
    ``deriv = (w * y[idx]).sum(axis=1)``. Stencils are centred where possible
    and one-sided at the ends.
    """
    x = np.asarray(x, dtype=float)
    N = x.size
    if N < width:
        raise ValueError(f"need at least {width} nodes, got {N}")
    half = width // 2
    start = np.clip(np.arange(N) - half, 0, N - width)
    idx = start[:, None] + np.arange(width)[None, :]
    dx = x[idx] - x[:, None]
    h = np.max(np.abs(dx), axis=1, keepdims=True)
    t = dx / h
    # Vandermonde system sum_j w_j t_j^i = i! delta_{i,order}
    V = t[:, None, :] ** np.arange(width)[None, :, None]
    rhs = np.zeros((N, width))
    rhs[:, order] = math.factorial(order)
    w = np.linalg.solve(V, rhs[..., None])[..., 0]
    return idx, w / h**order


def fd_derivative(x: np.ndarray, y: np.ndarray, order: int = 1, width: int = 5) -> np.ndarray:
    idx, w = fd_weights(x, order, width)
    return np.sum(w * np.asarray(y)[idx], axis=1)


def radial_laplacian(n: int, r: np.ndarray, d1: np.ndarray, d2: np.ndarray) -> np.ndarray:
    """``u_rr + (n-1)/r u_r``; at ``r = 0`` the symmetric limit ``n u_rr``."""
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    zero = r == 0.0
    nz = ~zero
    out[nz] = d2[nz] + (n - 1) * d1[nz] / r[nz]
    out[zero] = n * d2[zero]
    return out


def pow_diff(x: np.ndarray, y: np.ndarray, q: float) -> np.ndarray:
    """``x^q - y^q`` for positive arrays, accurate when ``x ~ y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return y**q * np.expm1(q * np.log1p((x - y) / y))


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """A radial function on a strictly increasing grid.

    ``derivs`` holds first derivatives when known (ODE output, analytic
    functions); ``second`` holds second derivatives only when they are known
    analytically or by construction. ``dense`` is an optional continuous
    evaluator ``r -> (value, deriv)`` (an ODE dense output); when present it
    is used for off-grid evaluation in place of the cubic interpolant.
    """

    grid: np.ndarray
    values: np.ndarray
    derivs: np.ndarray | None = None
    second: np.ndarray | None = None
    kind: str = "snapshot"
    meta: dict = field(default_factory=dict)
    dense: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        values = np.array(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be a 1-D array with at least 2 nodes")
        if values.shape != grid.shape:
            raise ValueError("values and grid must have the same shape")
        if grid[0] < 0 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be nonnegative and strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("profile values must be finite")
        if self.kind not in KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        arrays = {"grid": grid, "values": values}
        for name in ("derivs", "second"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                if arr.shape != grid.shape:
                    raise ValueError(f"{name} must match the grid shape")
                arrays[name] = arr
        if self.kind == "steady_state":
            if np.any(values <= 0):
                raise ValueError("steady-state profile must be strictly positive")
            if np.any(np.diff(values) >= 0):
                raise ValueError("steady-state profile must be strictly decreasing")
        for name, arr in arrays.items():
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.grid.size

    @property
    def r_min(self) -> float:
        return float(self.grid[0])

    @property
    def r_max(self) -> float:
        return float(self.grid[-1])

    def _check_range(self, r: np.ndarray) -> None:
        tol = 1e-12 * max(1.0, self.r_max)
        if np.any(r < self.r_min - tol) or np.any(r > self.r_max + tol):
            raise ValueError(
                f"evaluation outside profile grid [{self.r_min}, {self.r_max}]"
            )

    def _interpolant(self):
        cached = self.__dict__.get("_interp")
        if cached is None:
            if self.derivs is not None:
                cached = CubicHermiteSpline(self.grid, self.values, self.derivs)
            else:
                cached = PchipInterpolator(self.grid, self.values)
            self.__dict__["_interp"] = cached
        return cached

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        self._check_range(r)
        r = np.clip(r, self.r_min, self.r_max)
        if self.dense is not None:
            return self.dense(r)[0]
        return self._interpolant()(r)

    def derivative(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        self._check_range(r)
        r = np.clip(r, self.r_min, self.r_max)
        if self.dense is not None:
            return self.dense(r)[1]
        return self._interpolant().derivative()(r)

    def first_derivative(self) -> np.ndarray:
        if self.derivs is not None:
            return self.derivs
        return fd_derivative(self.grid, self.values, 1)

    def second_derivative(self) -> np.ndarray:
        """Nodal second derivative: exact column if stored, otherwise a
        five-point finite difference of the first-derivative column (or of
        the values when no derivative column exists)."""
        if self.second is not None:
            return self.second
        if self.derivs is not None:
            return fd_derivative(self.grid, self.derivs, 1)
        return fd_derivative(self.grid, self.values, 2)

    def resample(self, grid: np.ndarray, kind: str | None = None) -> "RadialProfile":
        grid = np.asarray(grid, dtype=float)
        return RadialProfile(
            grid,
            self(grid),
            self.derivative(grid),
            kind=kind or self.kind,
            meta={k: v for k, v in self.meta.items() if k != "deviation"},
            dense=self.dense,
        )

    def window_mask(self, r_lo: float, r_hi: float) -> np.ndarray:
        return (self.grid >= r_lo) & (self.grid <= r_hi)
