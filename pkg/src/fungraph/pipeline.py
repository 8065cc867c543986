"""End-to-end estimation: smoothing, node-wise FPCA, regressions, graph assembly."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .basis import BasisSystem, eval_basis, smooth_dataset
from .fpca import NodeBasis, node_bases, project_scores, quadrature_grid, select_truncation
from .funcdata import CovariateDesign, FunctionalDataset, validate
from .graphs import ConditionalGraphs, build_graphs
from .neighbours import NodeResult, TuningConfig, fit_node

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SmoothingConfig:
    basis: str = "fourier"
    size: int = 15
    roughness: float = 0.0
    order: int = 4

    def basis_system(self) -> BasisSystem:
        return BasisSystem(self.basis, self.size, (0.0, 1.0), self.order)


@dataclass(frozen=True)
class FpcaConfig:
    pve: float = 0.95
    M: int | None = None
    grid_size: int = 100
    M_max: int | None = None


@dataclass
class RunConfig:
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    fpca: FpcaConfig = field(default_factory=FpcaConfig)
    tuning: TuningConfig = field(default_factory=TuningConfig)
    mode: str = "OR"
    threads: int = 1
    seed: int = 0


@dataclass
class Preprocessed:
    grid: np.ndarray
    weights: np.ndarray
    values: np.ndarray  # n x p x G curve values
    means: np.ndarray  # p x G
    bases: list[NodeBasis]
    M: int
    per_node_M: list[int]

    def scores(self, j: int):
        return project_scores(self.values, self.means, self.bases[j], self.M)


def preprocess(ds: FunctionalDataset, cfg: RunConfig) -> Preprocessed:
    b = cfg.smoothing.basis_system()
    coef = smooth_dataset(ds, b, cfg.smoothing.roughness)
    grid, weights = quadrature_grid(cfg.fpca.grid_size)
    values = coef @ eval_basis(b, grid).T
    bases = node_bases(values, grid, weights, cfg.fpca.M_max)
    per_node = [select_truncation(nb.eigenvalues, cfg.fpca.pve, cfg.fpca.M_max) for nb in bases]
    M = cfg.fpca.M if cfg.fpca.M is not None else max(per_node)
    return Preprocessed(grid, weights, values, values.mean(axis=0), bases, M, per_node)


@dataclass
class FitResult:
    results: list[NodeResult]
    design: CovariateDesign
    node_ids: list[str]
    M: int
    per_node_M: list[int]
    timings: dict[str, float]

    def graphs(self, mode: str = "OR") -> ConditionalGraphs:
        return build_graphs(self.results, self.design, mode, self.node_ids)


_WORKER: dict = {}


def _init_worker(pre: Preprocessed, X: np.ndarray, tuning: TuningConfig):
    _WORKER.update(pre=pre, X=X, tuning=tuning)


def _fit_one(j: int) -> NodeResult:
    with threadpool_limits(limits=1):
        return fit_node(_WORKER["pre"].scores(j), _WORKER["X"], j, _WORKER["tuning"])


def fit_dataset(ds: FunctionalDataset, X: CovariateDesign | None, cfg: RunConfig = RunConfig()) -> FitResult:
    """Estimate all node neighbourhoods and return them with timings.

    Node fits are independent; with ``cfg.threads > 1`` they run in worker
    processes. BLAS is pinned to one thread per fit so results do not depend
    on the degree of parallelism.
    """
    validate(ds).raise_for_errors()
    if X is None:
        X = CovariateDesign.intercept_only(ds.n, ds.sample_ids)
    if X.n != ds.n:
        raise ValueError(f"covariate design has {X.n} rows for {ds.n} samples")
    t0 = time.perf_counter()
    pre = preprocess(ds, cfg)
    t1 = time.perf_counter()
    log.info("preprocessed %d samples x %d nodes, M=%d", ds.n, ds.p, pre.M)
    if cfg.threads <= 1:
        _init_worker(pre, X.matrix, cfg.tuning)
        try:
            results = [_fit_one(j) for j in range(ds.p)]
        finally:
            _WORKER.clear()
    else:
        with ProcessPoolExecutor(max_workers=cfg.threads, initializer=_init_worker,
                                 initargs=(pre, X.matrix, cfg.tuning)) as pool:
            results = list(pool.map(_fit_one, range(ds.p)))
    t2 = time.perf_counter()
    return FitResult(results, X, list(ds.node_ids), pre.M, pre.per_node_M,
                     {"preprocess_s": t1 - t0, "node_fits_s": t2 - t1})
