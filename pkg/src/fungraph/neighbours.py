"""Per-node neighbourhood estimation: SCV tuning, thresholding, relative effects."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import FunGraphError
from .solver import (
    DEFAULT_MAX_ITER,
    DEFAULT_RHO,
    DEFAULT_TOL_ABS,
    DEFAULT_TOL_REL,
    CoefficientBlocks,
    GroupLassoADMM,
    GroupLayout,
    RestrictedLeastSquares,
    _group_norms,
    build_design,
)

EMERGENT = math.inf


@dataclass(frozen=True)
class TuningConfig:
    n_lambda: int = 50
    lambda_min_ratio: float = 1e-3
    eps_quantiles: tuple[float, ...] = (0.1, 0.25, 0.5)
    eps_floor: float = 1e-6
    eps_values: tuple[float, ...] | None = None  # fixed candidates override the quantile rule
    folds: int = 5
    fraction: float = 1.0
    seed: int = 0
    rho: float = DEFAULT_RHO
    tol_abs: float = DEFAULT_TOL_ABS
    tol_rel: float = DEFAULT_TOL_REL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.n_lambda < 1:
            raise ValueError("n_lambda must be >= 1")
        if not 0 < self.lambda_min_ratio <= 1:
            raise ValueError("lambda_min_ratio must lie in (0, 1]")
        if self.eps_values is not None and len(self.eps_values) < 1:
            raise ValueError("eps_values must not be empty")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if not 0 < self.fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")

    def lambda_grid(self, lam_max: float) -> np.ndarray:
        """Log-spaced penalties from ``lam_max`` down to ``lambda_min_ratio * lam_max``."""
        if self.n_lambda == 1:
            return np.array([lam_max])
        return lam_max * np.logspace(0.0, np.log10(self.lambda_min_ratio), self.n_lambda)


@dataclass
class ScvResult:
    lam: float
    eps: float
    lam_index: int
    table: list[dict]
    all_empty: bool = False


@dataclass
class NodeResult:
    node: int
    lam: float
    eps: float
    lam_max: float
    coefficients: CoefficientBlocks
    neighbours: list[list[int]]  # per covariate c = 0..q
    effects: dict[int, dict[int, float]]  # c >= 1 -> {k: Eff}
    score_table: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def q(self) -> int:
        return len(self.neighbours) - 1

    def to_dict(self, node_ids=None, include_table: bool = True, include_blocks: bool = False) -> dict:
        name = (lambda k: node_ids[k]) if node_ids is not None else (lambda k: k)
        norms = self.coefficients.norms()
        out = {
            "node": self.node,
            "node_id": name(self.node),
            "lambda": _num(self.lam),
            "epsilon": _num(self.eps),
            "lambda_max": _num(self.lam_max),
            "M": self.coefficients.layout.M,
            "neighbours": {str(c): [int(k) for k in ks] for c, ks in enumerate(self.neighbours)},
            "block_norms": [[_num(v) for v in row] for row in norms],
            "effects": {
                str(c): [
                    {"k": int(k), "eff": _num(e), "log10_eff": _num(log10_effect(e)), "emergent": math.isinf(e)}
                    for k, e in sorted(eff.items())
                ]
                for c, eff in sorted(self.effects.items())
            },
            "warnings": list(self.warnings),
        }
        if include_table:
            out["score_table"] = [{k: _num(v) for k, v in row.items()} for row in self.score_table]
        if include_blocks:
            out["blocks"] = self.coefficients.blocks.tolist()
        return out


def _num(v):
    """JSON-portable number: infinities become the string 'inf'."""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return float(f"{v:.17g}")
    if isinstance(v, np.integer):
        return int(v)
    return v


def threshold_neighbours(coefs: CoefficientBlocks, eps: float) -> list[list[int]]:
    """``{k != target : ||B[c,k]||_F > eps}`` for every covariate ``c``."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    norms = coefs.norms()
    j = coefs.target
    return [[k for k in range(norms.shape[1]) if k != j and norms[c, k] > eps] for c in range(norms.shape[0])]


def relative_effect(B0: np.ndarray, Bc: np.ndarray) -> float:
    """``||B0 + Bc|| / ||B0||``; +inf marks an edge absent from the baseline."""
    base = np.linalg.norm(B0)
    if base == 0.0:
        return EMERGENT
    return float(np.linalg.norm(B0 + Bc) / base)


def log10_effect(eff: float) -> float:
    if math.isinf(eff):
        return math.inf
    if eff == 0.0:
        return -math.inf
    return math.log10(eff)


def make_folds(n: int, K: int, seed: int, strata: np.ndarray | None = None) -> list[np.ndarray]:
    """Test-index sets for K folds.

    Within each stratum the samples are permuted with ``seed`` and cut into K
    contiguous chunks, so every fold sees every stratum.
    """
    if n < 2 * K:
        raise FunGraphError(f"{n} samples are too few for {K}-fold selection (need >= {2 * K})")
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=int) if strata is None else np.unique(strata, axis=0, return_inverse=True)[1].ravel()
    tests: list[list[int]] = [[] for _ in range(K)]
    for s in np.unique(labels):
        idx = np.nonzero(labels == s)[0]
        idx = idx[rng.permutation(idx.size)]
        for f, chunk in enumerate(np.array_split(idx, K)):
            tests[f].extend(chunk.tolist())
    return [np.sort(np.array(t, dtype=int)) for t in tests]


def _eps_candidates(norms: np.ndarray, cfg: TuningConfig) -> list[float]:
    if cfg.eps_values is not None:
        return [float(e) for e in cfg.eps_values]
    nz = norms[norms > 0]
    if nz.size == 0:
        qs = [cfg.eps_floor] * len(cfg.eps_quantiles)
    else:
        qs = [float(v) for v in np.quantile(nz, cfg.eps_quantiles)]
    return [*qs, cfg.eps_floor]


def scv_select(Z, A, layout: GroupLayout, cfg: TuningConfig = TuningConfig(),
               strata: np.ndarray | None = None, solver: GroupLassoADMM | None = None,
               return_path: bool = False):
    """Selective cross-validation over (lambda, eps) pairs.

    For each pair, the active block set is screened from the full-data fit,
    refit without penalty on each training fold, and scored by the test RSS
    plus ``log(n_test) * |active|``. Ties go to fewer blocks, then larger
    lambda.
    """
    Z = np.asarray(getattr(Z, "Z", Z))
    A = np.asarray(A)
    n = Z.shape[0]
    M = layout.M
    solver = solver or GroupLassoADMM(Z, A, M, rho=cfg.rho)
    lam_max = solver.lambda_max
    lams = cfg.lambda_grid(lam_max)

    path: list[np.ndarray] = []
    warm = None
    for lam in lams:
        coef, _, warm = solver.fit(lam, tol_abs=cfg.tol_abs, tol_rel=cfg.tol_rel,
                                   max_iter=cfg.max_iter, warm=warm)
        path.append(coef)
    norms = [_group_norms(c, M) for c in path]
    eps_grid = [_eps_candidates(nm, cfg) for nm in norms]

    pairs = [(li, ei) for li in range(len(lams)) for ei in range(len(eps_grid[li]))]
    if cfg.fraction < 1.0:
        rng = np.random.default_rng(cfg.seed)
        size = max(1, int(round(cfg.fraction * len(pairs))))
        pick = np.sort(rng.choice(len(pairs), size=size, replace=False))
        pairs = [pairs[i] for i in pick]

    tests = make_folds(n, cfg.folds, cfg.seed, strata)
    folds = []
    for test in tests:
        train = np.setdiff1d(np.arange(n), test)
        folds.append((RestrictedLeastSquares(Z[train], A[train], M), Z[test], A[test]))

    cache: dict[tuple[int, ...], float] = {}

    def score(active: tuple[int, ...]) -> float:
        if active not in cache:
            total = 0.0
            for rls, Zt, At in folds:
                coef, _ = rls.solve(active)
                r = At - Zt @ coef
                total += float(np.sum(r * r)) + math.log(At.shape[0]) * len(active)
            cache[active] = total / len(folds)
        return cache[active]

    table = []
    for li, ei in pairs:
        eps = eps_grid[li][ei]
        active = tuple(int(g) for g in np.nonzero(norms[li] > eps)[0])
        table.append({"lambda_index": li, "eps_index": ei, "lambda": float(lams[li]), "eps": float(eps),
                      "n_active": len(active), "score": score(active)})

    best = min(table, key=lambda r: (r["score"], r["n_active"], r["lambda_index"], r["eps_index"]))
    all_empty = all(r["n_active"] == 0 for r in table)
    if all_empty:
        warnings.warn("every candidate selects an empty model; returning the largest lambda", stacklevel=2)
    res = ScvResult(best["lambda"], best["eps"], best["lambda_index"], table, all_empty)
    if return_path:
        return res, lams, path
    return res


def fit_node(scores, X, j: int, cfg: TuningConfig = TuningConfig()) -> NodeResult:
    """Full pipeline for target node ``j`` on scores computed with its basis."""
    design, A = build_design(scores, X, j)
    layout = design.layout
    Xm = np.asarray(getattr(X, "matrix", X))
    dummies = [c for c in range(1, Xm.shape[1]) if np.all((Xm[:, c] == 0) | (Xm[:, c] == 1))]
    strata = Xm[:, dummies] if dummies else None
    try:
        solver = GroupLassoADMM(design, A, layout.M, rho=cfg.rho)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            scv, lams, path = scv_select(design, A, layout, cfg, strata, solver, return_path=True)
    except FunGraphError as exc:
        raise type(exc)(f"node {j}: {exc}") from exc
    coefs = CoefficientBlocks.from_stacked(path[scv.lam_index], layout)
    nbrs = threshold_neighbours(coefs, scv.eps)
    effects: dict[int, dict[int, float]] = {}
    for c in range(1, layout.q + 1):
        effects[c] = {k: relative_effect(coefs.blocks[0, k], coefs.blocks[c, k]) for k in nbrs[c]}
    notes = [str(w.message) for w in caught]
    return NodeResult(j, scv.lam, scv.eps, solver.lambda_max, coefs, nbrs, effects, scv.table, notes)
