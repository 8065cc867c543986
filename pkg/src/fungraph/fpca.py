"""Node-specific FPCA bases and projection scores.

All curves are handled through their values on a common quadrature grid.
Inner products are ``sum_g w_g f(t_g) h(t_g)`` with trapezoid weights ``w``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .basis import SmoothCurve, eval_curve, trapezoid_weights
from .errors import DegenerateError, DimensionError

DEFAULT_GRID_SIZE = 100


@dataclass
class NodeBasis:
    """Orthonormal (under ``weights``) eigenfunctions of one node's covariance."""

    node: int | None
    grid: np.ndarray
    weights: np.ndarray
    mean: np.ndarray
    eigenfunctions: np.ndarray  # G x M_max
    eigenvalues: np.ndarray

    def gram(self, M: int | None = None) -> np.ndarray:
        phi = self.eigenfunctions[:, :M]
        return phi.T @ (self.weights[:, None] * phi)


@dataclass
class ScoreTensor:
    """``scores[i, k, m]`` = <y_ik - mean_k, phi_m> for target-node basis ``node``."""

    node: int
    scores: np.ndarray

    @property
    def M(self) -> int:
        return self.scores.shape[2]


def quadrature_grid(G: int = DEFAULT_GRID_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """``G`` equally spaced points in (0, 1] with trapezoid weights."""
    grid = np.arange(1, G + 1) / G
    return grid, trapezoid_weights(grid)


def _as_values(curves, grid) -> np.ndarray:
    if isinstance(curves, np.ndarray):
        return curves
    if grid is None:
        raise DimensionError("a grid is required to evaluate SmoothCurve inputs")
    return np.stack([eval_curve(c, grid) if isinstance(c, SmoothCurve) else np.asarray(c) for c in curves])


def estimate_covariance(curves, grid=None) -> np.ndarray:
    """Sample covariance (divisor n-1) of curve values after removing the mean curve."""
    Y = _as_values(curves, grid)
    if Y.shape[0] < 2:
        raise DegenerateError(f"covariance needs at least 2 curves, got {Y.shape[0]}")
    Yc = Y - Y.mean(axis=0)
    C = Yc.T @ Yc / (Y.shape[0] - 1)
    return (C + C.T) / 2


def fpca_basis(cov: np.ndarray, weights: np.ndarray, M_max: int | None = None, *,
               node: int | None = None, grid=None, mean=None) -> NodeBasis:
    """Eigen-decompose the covariance operator discretized with quadrature ``weights``.

    Solves ``W^1/2 C W^1/2 u = lam u`` and returns ``phi = W^-1/2 u`` so that
    ``phi^T W phi = I``. Signs are fixed so the first non-negligible entry of
    each ``W^1/2 phi`` is positive.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"covariance must be square, got {cov.shape}")
    if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-8:
        raise ValueError("covariance matrix is not symmetric")
    w = np.asarray(weights, dtype=float)
    sw = np.sqrt(w)
    K = sw[:, None] * cov * sw[None, :]
    vals, vecs = np.linalg.eigh((K + K.T) / 2)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    if M_max is not None:
        vals, vecs = vals[:M_max], vecs[:, :M_max]
    for m in range(vecs.shape[1]):
        col = vecs[:, m]
        big = np.nonzero(np.abs(col) > 1e-8 * np.abs(col).max())[0]
        if big.size and col[big[0]] < 0:
            vecs[:, m] = -col
    phi = vecs / sw[:, None]
    G = cov.shape[0]
    grid = np.arange(1, G + 1) / G if grid is None else np.asarray(grid)
    mean = np.zeros(G) if mean is None else np.asarray(mean)
    return NodeBasis(node, grid, w, mean, phi, vals)


def select_truncation(eigenvalues, pve_threshold: float = 0.95, M_max: int | None = None) -> int:
    """Smallest M whose cumulative share of variance reaches ``pve_threshold``."""
    if not 0.0 < pve_threshold <= 1.0:
        raise ValueError("pve_threshold must lie in (0, 1]")
    lam = np.clip(np.asarray(eigenvalues, dtype=float), 0.0, None)
    total = lam.sum()
    if total <= 0:
        raise DegenerateError("all eigenvalues are zero; node carries no variation")
    if pve_threshold >= 1.0:
        M = int(np.count_nonzero(lam > 1e-10 * lam.max()))
    else:
        share = np.cumsum(lam) / total
        M = int(np.argmax(share >= pve_threshold - 1e-12)) + 1
    if M_max is not None:
        M = min(M, M_max)
    return M


def project_scores(values: np.ndarray, means: np.ndarray, basis: NodeBasis, M: int) -> ScoreTensor:
    """Project every node's centred curves onto the first ``M`` eigenfunctions.

    ``values`` is (n, p, G) curve values on the basis grid and ``means`` the
    (p, G) per-node mean functions.
    """
    values = np.asarray(values)
    if values.shape[2] != basis.grid.size or means.shape != values.shape[1:]:
        raise DimensionError(
            f"curve values {values.shape} / means {means.shape} do not match grid of size {basis.grid.size}")
    if M > basis.eigenfunctions.shape[1]:
        raise DimensionError(f"M={M} exceeds the {basis.eigenfunctions.shape[1]} stored eigenfunctions")
    wphi = basis.weights[:, None] * basis.eigenfunctions[:, :M]
    scores = (values - means[None]) @ wphi
    return ScoreTensor(basis.node if basis.node is not None else -1, scores)


def node_bases(values: np.ndarray, grid, weights, M_max: int | None = None) -> list[NodeBasis]:
    """One FPCA basis per node from that node's own curves; ``values`` is (n, p, G)."""
    out = []
    for j in range(values.shape[1]):
        Y = values[:, j, :]
        out.append(fpca_basis(estimate_covariance(Y), weights, M_max, node=j, grid=grid, mean=Y.mean(axis=0)))
    return out


def shared_truncation(bases: list[NodeBasis], pve_threshold: float = 0.95, M_max: int | None = None) -> int:
    """Common truncation level: the largest per-node PVE choice."""
    return max(select_truncation(b.eigenvalues, pve_threshold, M_max) for b in bases)


def dump_basis_csv(basis: NodeBasis, path, M: int | None = None) -> None:
    """Write eigenvalues and eigenfunction values for inspection."""
    phi = basis.eigenfunctions[:, :M]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", *[f"phi{m + 1}" for m in range(phi.shape[1])]])
        w.writerow(["eigenvalue", *[f"{v:.17g}" for v in basis.eigenvalues[: phi.shape[1]]]])
        for t, row in zip(basis.grid, phi):
            w.writerow([f"{t:.17g}", *[f"{v:.17g}" for v in row]])
