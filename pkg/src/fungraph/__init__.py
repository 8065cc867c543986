"""Conditional Gaussian functional graphical models by node-wise group-lasso regression."""

from .funcdata import CovariateDesign, FunctionalDataset, encode_covariates, load_functional_csv
from .graphs import ConditionalGraphs, build_graphs
from .neighbours import NodeResult, TuningConfig, fit_node
from .pipeline import FitResult, FpcaConfig, RunConfig, SmoothingConfig, fit_dataset
from .simgen import make_pair, sample_dataset, true_graphs

__version__ = "0.1.0"

__all__ = [
    "CovariateDesign", "FunctionalDataset", "encode_covariates", "load_functional_csv",
    "ConditionalGraphs", "build_graphs", "NodeResult", "TuningConfig", "fit_node",
    "FitResult", "FpcaConfig", "RunConfig", "SmoothingConfig", "fit_dataset",
    "make_pair", "sample_dataset", "true_graphs",
]
