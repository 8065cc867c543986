"""Fixed basis systems and penalized least-squares smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from .errors import ConditioningError, DomainError

PENALTY_GRID_SIZE = 512


@dataclass(frozen=True)
class BasisSystem:
    """Fourier or B-spline basis of ``size`` functions on ``domain``.

    Fourier functions are ordered constant, sin(2πt), cos(2πt), sin(4πt), ...
    and scaled to unit L2 norm on the domain. B-splines use the full knot
    vector ``knots`` (boundary knots repeated ``order`` times).
    """

    kind: str = "fourier"
    size: int = 15
    domain: tuple[float, float] = (0.0, 1.0)
    order: int = 4
    knots: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("fourier", "bspline"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("basis size must be >= 1")
        a, b = self.domain
        if not b > a:
            raise ValueError(f"empty domain {self.domain}")
        if self.kind == "bspline":
            if self.knots is None:
                if self.size < self.order:
                    raise ValueError(f"B-spline basis of order {self.order} needs size >= {self.order}")
                inner = np.linspace(a, b, self.size - self.order + 2)[1:-1]
                knots = np.r_[[a] * self.order, inner, [b] * self.order]
                object.__setattr__(self, "knots", tuple(float(k) for k in knots))
            elif len(self.knots) - self.order != self.size:
                raise ValueError("knot vector length must equal size + order")
            if np.any(np.diff(self.knots) < 0):
                raise ValueError("B-spline knots must be non-decreasing")


def fourier(size: int = 15, domain=(0.0, 1.0)) -> BasisSystem:
    return BasisSystem("fourier", size, tuple(domain))


def bspline(size: int, order: int = 4, domain=(0.0, 1.0)) -> BasisSystem:
    return BasisSystem("bspline", size, tuple(domain), order)


def _check_domain(b: BasisSystem, grid: np.ndarray):
    a, c = b.domain
    tol = 1e-12 * (c - a)
    if grid.size and (grid.min() < a - tol or grid.max() > c + tol):
        raise DomainError(f"grid [{grid.min()}, {grid.max()}] leaves basis domain [{a}, {c}]")


def eval_basis(b: BasisSystem, grid, deriv: int = 0) -> np.ndarray:
    """Evaluate the basis (or its ``deriv``-th derivative) on ``grid``; shape (len(grid), size)."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    _check_domain(b, grid)
    a, c = b.domain
    if b.kind == "fourier":
        L = c - a
        out = np.empty((grid.size, b.size))
        out[:, 0] = 1.0 / np.sqrt(L) if deriv == 0 else 0.0
        x = (grid - a) / L
        for m in range(1, b.size):
            k = (m + 1) // 2
            omega = 2.0 * np.pi * k / L
            shift = deriv * np.pi / 2.0
            theta = 2.0 * np.pi * k * x + shift
            wave = np.sin(theta) if m % 2 == 1 else np.cos(theta)
            out[:, m] = np.sqrt(2.0 / L) * omega**deriv * wave
        return out
    spl = BSpline(np.asarray(b.knots), np.eye(b.size), b.order - 1)
    if deriv:
        spl = spl.derivative(deriv)
    return spl(np.clip(grid, a, c))


def trapezoid_weights(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        return np.ones_like(grid)
    h = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def roughness_penalty(b: BasisSystem) -> np.ndarray:
    """Gram matrix of second derivatives, by trapezoid quadrature."""
    t = np.linspace(*b.domain, PENALTY_GRID_SIZE)
    D2 = eval_basis(b, t, deriv=2)
    return D2.T @ (trapezoid_weights(t)[:, None] * D2)


@dataclass
class SmoothCurve:
    coef: np.ndarray
    basis: BasisSystem


def smooth_values(times, values: np.ndarray, b: BasisSystem, roughness: float = 0.0) -> np.ndarray:
    """Coefficients for one or many series sharing ``times``.

    ``values`` is (L,) or (m, L); returns (R,) or (m, R).
    """
    if roughness < 0:
        raise ValueError("roughness must be >= 0")
    Psi = eval_basis(b, times)
    Y = np.asarray(values, dtype=float)
    single = Y.ndim == 1
    Y = Y[None, :] if single else Y
    if roughness == 0.0:
        if Psi.shape[0] < b.size or np.linalg.matrix_rank(Psi) < b.size:
            raise ConditioningError(
                f"{Psi.shape[0]} points cannot determine {b.size} basis coefficients; "
                "use roughness > 0 or a smaller basis")
        coef = np.linalg.lstsq(Psi, Y.T, rcond=None)[0].T
    else:
        lhs = Psi.T @ Psi + roughness * roughness_penalty(b)
        try:
            coef = np.linalg.solve(lhs, Psi.T @ Y.T).T
        except np.linalg.LinAlgError:
            raise ConditioningError("penalized normal equations are singular") from None
    return coef[0] if single else coef


def smooth_curve(series, b: BasisSystem, roughness: float = 0.0) -> SmoothCurve:
    """Penalized least-squares fit of a ``(times, values)`` series."""
    t, y = series
    return SmoothCurve(smooth_values(t, y, b, roughness), b)


def eval_curve(c: SmoothCurve, grid) -> np.ndarray:
    return eval_basis(c.basis, grid) @ c.coef


def smooth_dataset(ds, b: BasisSystem, roughness: float = 0.0) -> np.ndarray:
    """Smooth every (sample, node) series of a dataset; returns (n, p, R) coefficients.

    Series sharing a time grid are solved in one batch.
    """
    out = np.empty((ds.n, ds.p, b.size))
    by_grid: dict[bytes, list[tuple[int, int]]] = {}
    grids: dict[bytes, np.ndarray] = {}
    for i, row in enumerate(ds.series):
        for j, (t, _) in enumerate(row):
            key = t.tobytes()
            by_grid.setdefault(key, []).append((i, j))
            grids[key] = t
    for key, idx in by_grid.items():
        Y = np.stack([ds.series[i][j][1] for i, j in idx])
        coef = smooth_values(ds.unit_times(grids[key]), Y, b, roughness)
        for (i, j), th in zip(idx, coef):
            out[i, j] = th
    return out
