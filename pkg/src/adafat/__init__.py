"""Factor-adjusted large-scale multiple testing with adaptive FDR thresholding.

Panels with m tests observed n times are modeled with explanatory
variables plus pervasive latent factors; the latent component is removed
before thresholding two-sided p-values at an estimated false discovery
rate. The adaptive procedure re-estimates the factor drift on an
estimated null subset, which keeps the adjustment unbiased when the
proportion of alternatives is not small.
"""

from . import errors
from .adaptive import AdaFatIteration, AdaFatTrace, adafat_run
from .factors import (
    FactorConfig,
    FactorEstimate,
    estimate_factors,
    estimate_zeta,
    pca_top_k,
    penalty_bai_ng,
    residual_panel,
    rotation_H,
    select_q,
)
from .model import (
    Dataset,
    FactorModel,
    HypothesisSplit,
    load_csv_matrix,
    load_dataset,
    validate_dataset,
)
from .regression import (
    ThetaDecomposition,
    compute_theta,
    decompose_theta_oracle,
    residualize,
)
from .simgen import (
    SimConfig,
    SimReport,
    build_sigma_eps,
    calibrate_from_returns,
    generate,
    run_monte_carlo,
)
from .testing import (
    METHODS,
    ErrorMetrics,
    TestConfig,
    TestOutcome,
    bh_procedure,
    count_processes,
    p_values,
    run_procedure,
    storey_fdr_hat,
    storey_pi0,
    t_adjusted,
    t_oracle,
    t_original,
    threshold_star,
)

__version__ = "0.1.0"

__all__ = [
    "AdaFatIteration",
    "AdaFatTrace",
    "Dataset",
    "ErrorMetrics",
    "FactorConfig",
    "FactorEstimate",
    "FactorModel",
    "HypothesisSplit",
    "METHODS",
    "SimConfig",
    "SimReport",
    "TestConfig",
    "TestOutcome",
    "ThetaDecomposition",
    "adafat_run",
    "bh_procedure",
    "build_sigma_eps",
    "calibrate_from_returns",
    "compute_theta",
    "count_processes",
    "decompose_theta_oracle",
    "errors",
    "estimate_factors",
    "estimate_zeta",
    "generate",
    "load_csv_matrix",
    "load_dataset",
    "p_values",
    "pca_top_k",
    "penalty_bai_ng",
    "residual_panel",
    "residualize",
    "rotation_H",
    "run_monte_carlo",
    "run_procedure",
    "select_q",
    "storey_fdr_hat",
    "storey_pi0",
    "t_adjusted",
    "t_oracle",
    "t_original",
    "threshold_star",
    "validate_dataset",
]
