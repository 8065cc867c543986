"""Synthetic two-group functional data with block-banded precision structure.

Each sample's Fourier score vector (p nodes x M functions) is Gaussian with
precision ``theta0`` in the reference group and ``theta0 + theta1`` in the
other group. Curves are observed on ``tau`` equally spaced points in (0, 1]
with additive Gaussian noise.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular, toeplitz

from .basis import eval_basis, fourier
from .errors import GenerationError
from .funcdata import CovariateDesign, FunctionalDataset

log = logging.getLogger(__name__)

SCENARIOS = ("S1", "S2", "S3", "S4", "S5", "S6")
PD_TOL = 1e-8
SUPPORT_TOL = 1e-12


@dataclass
class PrecisionPair:
    p: int
    M: int
    theta0: np.ndarray
    theta1: np.ndarray
    scenario: str
    shift: float = 0.0

    @property
    def theta_group1(self) -> np.ndarray:
        return self.theta0 + self.theta1


@dataclass
class TrueGraphs:
    p: int
    scenario: str
    G0: set[tuple[int, int]]
    G1: set[tuple[int, int]]
    group1: set[tuple[int, int]]

    def to_dict(self, node_ids=None) -> dict:
        def enc(edges):
            return [{"u": u, "v": v} for u, v in sorted(edges)]
        out = {"p": self.p, "scenario": self.scenario,
               "G0": enc(self.G0), "G1": enc(self.G1), "group1": enc(self.group1)}
        if node_ids is not None:
            out["nodes"] = list(node_ids)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrueGraphs":
        dec = lambda es: {(min(e["u"], e["v"]), max(e["u"], e["v"])) for e in es}  # noqa: E731
        return cls(d["p"], d.get("scenario", ""), dec(d["G0"]), dec(d["G1"]), dec(d["group1"]))


def toeplitz_block(M: int) -> np.ndarray:
    """Diagonal block with unit diagonal and entries 0.5**|v-w|."""
    return toeplitz(0.5 ** np.arange(M))


def tridiagonal_block(M: int) -> np.ndarray:
    return np.eye(M) + 0.5 * (np.eye(M, k=1) + np.eye(M, k=-1))


def _blk(M, k):
    return slice(k * M, (k + 1) * M)


def block_precision_template(p: int, M: int = 15) -> np.ndarray:
    """Block-banded ``pM x pM`` template: T on the diagonal, 0.4A at lag 1, 0.2I at lag 2."""
    if p < 3:
        raise GenerationError("template needs p >= 3")
    T, A, I = toeplitz_block(M), tridiagonal_block(M), np.eye(M)
    theta = np.zeros((p * M, p * M))
    for j in range(p):
        for k in range(p):
            lag = abs(j - k)
            if lag == 0:
                theta[_blk(M, k), _blk(M, j)] = T
            elif lag == 1:
                theta[_blk(M, k), _blk(M, j)] = 0.4 * A
            elif lag == 2:
                theta[_blk(M, k), _blk(M, j)] = 0.2 * I
    return theta


def _windows(scenario: str, p: int) -> tuple[range | None, range | None]:
    """0-based node windows edited in (theta0, theta0 + theta1)."""
    third, half = p // 3, p // 2
    first = range(0, third)
    return {
        "S1": (first, None),
        "S2": (None, first),
        "S3": (first, range(p - third, p)),
        "S4": (range(0, half + 1), range(p - half - 1, p)),
        "S5": (first, None),
        "S6": (None, first),
    }[scenario]


def _scale_offdiag(mat: np.ndarray, window: range, M: int, factor: float) -> None:
    for j in window:
        for k in window:
            if j != k:
                mat[_blk(M, k), _blk(M, j)] *= factor


def apply_scenario(theta: np.ndarray, scenario: str, p: int, M: int | None = None) -> PrecisionPair:
    """Derive (theta0, theta1) from the template for one of S1..S6.

    Edits touch off-diagonal blocks inside the scenario window only. If either
    group precision is not positive definite, the same diagonal shift is
    added to both so that theta1 keeps its off-diagonal support.
    """
    if scenario not in SCENARIOS:
        raise GenerationError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    M = theta.shape[0] // p if M is None else M
    g0, g1 = theta.copy(), theta.copy()
    w0, w1 = _windows(scenario, p)
    factor = 0.25 if scenario in ("S5", "S6") else 0.0
    if w0 is not None:
        _scale_offdiag(g0, w0, M, factor)
    if w1 is not None:
        _scale_offdiag(g1, w1, M, factor)
    low = min(np.linalg.eigvalsh(g0)[0], np.linalg.eigvalsh(g1)[0])
    shift = 0.0
    if low < PD_TOL:
        shift = abs(low) + 0.01
        log.warning("scenario %s (p=%d, M=%d): min eigenvalue %.3g, shifting diagonals by %.4g",
                    scenario, p, M, low, shift)
        g0[np.diag_indices_from(g0)] += shift
        g1[np.diag_indices_from(g1)] += shift
    for name, mat in (("theta0", g0), ("theta0+theta1", g1)):
        if np.linalg.eigvalsh(mat)[0] <= PD_TOL:
            raise GenerationError(f"{name} is not positive definite after repair")
    return PrecisionPair(p, M, g0, g1 - g0, scenario, shift)


def make_pair(scenario: str, p: int, M: int = 15) -> PrecisionPair:
    return apply_scenario(block_precision_template(p, M), scenario, p, M)


def _support(mat: np.ndarray, p: int, M: int) -> set[tuple[int, int]]:
    edges = set()
    for j in range(p):
        for k in range(j + 1, p):
            if np.linalg.norm(mat[_blk(M, j), _blk(M, k)]) > SUPPORT_TOL:
                edges.add((j, k))
    return edges


def true_graphs(pair: PrecisionPair) -> TrueGraphs:
    p, M = pair.p, pair.M
    return TrueGraphs(p, pair.scenario, _support(pair.theta0, p, M), _support(pair.theta1, p, M),
                      _support(pair.theta_group1, p, M))


def sample_streams(seed: int, n: int) -> list[np.random.Generator]:
    """One independent Philox stream per sample, spawned from ``seed``."""
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def draw_scores(precision: np.ndarray, rngs) -> np.ndarray:
    """Zero-mean Gaussian draws with the given precision, one per generator.

    Uses ``alpha = L^-T z`` with ``precision = L L^T``; the covariance is
    never formed.
    """
    try:
        L = cholesky(precision, lower=True)
    except np.linalg.LinAlgError as exc:
        raise GenerationError(f"precision factorization failed: {exc}") from exc
    Zs = np.stack([r.standard_normal(precision.shape[0]) for r in rngs])
    return solve_triangular(L, Zs.T, lower=True, trans="T").T


def sample_dataset(pair: PrecisionPair, n_per_group: int, tau: int = 100, sigma2: float = 0.5,
                   seed: int = 0, return_scores: bool = False):
    """Simulate ``2 * n_per_group`` samples; the first half is the reference group."""
    p, M = pair.p, pair.M
    n = 2 * n_per_group
    grid = np.arange(1, tau + 1) / tau
    F = eval_basis(fourier(M), grid)  # tau x M
    rngs = sample_streams(seed, n)
    x = np.r_[np.zeros(n_per_group), np.ones(n_per_group)]
    alpha = np.empty((n, p * M))
    alpha[:n_per_group] = draw_scores(pair.theta0, rngs[:n_per_group])
    alpha[n_per_group:] = draw_scores(pair.theta_group1, rngs[n_per_group:])
    noise = np.stack([r.standard_normal((p, tau)) for r in rngs]) * np.sqrt(sigma2)
    values = alpha.reshape(n, p, M) @ F.T + noise
    ds = FunctionalDataset.from_arrays(values, grid)
    X = CovariateDesign(np.column_stack([np.ones(n), x]), ["(intercept)", "group"],
                        ["intercept", "continuous"], list(ds.sample_ids))
    if return_scores:
        return ds, X, alpha
    return ds, X


def write_truth(path, truth: TrueGraphs, node_ids=None, extra: dict | None = None) -> None:
    d = truth.to_dict(node_ids)
    if extra:
        d.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_truth(path) -> TrueGraphs:
    with open(path, encoding="utf-8") as fh:
        return TrueGraphs.from_dict(json.load(fh))
