"""Truncated Gaussian infinite factor analysis for imputing non-negative,
high-dimensional data with mixed below-detection and at-random missingness.
"""
from ._backend import available_backends, resolve_backend
from .baselines import BaselineResult, impute_fixed, impute_svd, run_ifa_chain
from .distributions import (
    RngStream,
    interval_prob,
    log_gauss_kernel,
    sample_trunc_gamma_lb1,
    sample_trunc_normal,
)
from .imputation import (
    ImputationSummary,
    MissingCellDraws,
    compute_pq,
    draw_missing_entry,
    fill_imputed_matrix,
    summarize_chain,
    summarize_missing_entry,
)
from .sampler import run_chain, sweep
from .simulation import (
    SimulatedDataset,
    designation_accuracy,
    generate_dataset,
    generate_reference,
    inject_missingness,
    mae,
    procrustes_align,
    run_study,
)
from .types import (
    ChainOutput,
    Dataset,
    Hyperparameters,
    ModelState,
    SamplerConfig,
    ShrinkageState,
    missingness_report,
    validate_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "available_backends",
    "resolve_backend",
    "BaselineResult",
    "impute_fixed",
    "impute_svd",
    "run_ifa_chain",
    "RngStream",
    "interval_prob",
    "log_gauss_kernel",
    "sample_trunc_gamma_lb1",
    "sample_trunc_normal",
    "ImputationSummary",
    "MissingCellDraws",
    "compute_pq",
    "draw_missing_entry",
    "fill_imputed_matrix",
    "summarize_chain",
    "summarize_missing_entry",
    "run_chain",
    "sweep",
    "SimulatedDataset",
    "designation_accuracy",
    "generate_dataset",
    "generate_reference",
    "inject_missingness",
    "mae",
    "procrustes_align",
    "run_study",
    "ChainOutput",
    "Dataset",
    "Hyperparameters",
    "ModelState",
    "SamplerConfig",
    "ShrinkageState",
    "missingness_report",
    "validate_dataset",
    "__version__",
]
