"""Doubly robust treatment-effect estimation with a neural first stage.

The package covers the full simulation pipeline: synthetic data
generation, the dual-network first stage with L1-penalized Adam
training, cross-fitting, the estimator family (plug-in, inverse
weighting, and doubly robust with pluggable arm-weight schemes),
influence-function standard errors with an M-estimation cross-check,
and a replication harness with stress and orthogonality probes.
"""

__version__ = "0.1.0"

from .crossfit import FoldPlan, crossfit_nuisances, split_folds
from .dgp import Dataset, DgpSpec, LinkSpec, Truth, gen_covariates, gen_dataset
from .estimators import (
    EstimatorResult,
    WeightScheme,
    aipw,
    evaluate,
    gdr,
    ipw,
    naipw,
    nate,
    nipw,
    sr,
    unbiasedness_check,
)
from .firststage import (
    NetHyper,
    NetworkParams,
    NuisanceEstimates,
    fit_nuisances,
    gradient_check,
    oracle_nuisances,
    predict_nuisances,
    train_outcome,
    train_propensity,
)
from .mc import McConfig, RepRecord, run_replication, run_study, summarize
from .probes import orthogonality_probe, positivity_stress
from .variance import (
    remainder_diagnostic,
    sandwich_oracle,
    score_components,
    truncated_sandwich,
    var_aipw,
    var_naipw,
)

__all__ = [
    "Dataset",
    "DgpSpec",
    "EstimatorResult",
    "FoldPlan",
    "LinkSpec",
    "McConfig",
    "NetHyper",
    "NetworkParams",
    "NuisanceEstimates",
    "RepRecord",
    "Truth",
    "WeightScheme",
    "__version__",
    "aipw",
    "crossfit_nuisances",
    "evaluate",
    "fit_nuisances",
    "gdr",
    "gen_covariates",
    "gen_dataset",
    "gradient_check",
    "ipw",
    "naipw",
    "nate",
    "nipw",
    "oracle_nuisances",
    "orthogonality_probe",
    "positivity_stress",
    "predict_nuisances",
    "remainder_diagnostic",
    "run_replication",
    "run_study",
    "sandwich_oracle",
    "score_components",
    "split_folds",
    "sr",
    "summarize",
    "train_outcome",
    "train_propensity",
    "truncated_sandwich",
    "unbiasedness_check",
    "var_aipw",
    "var_naipw",
]
