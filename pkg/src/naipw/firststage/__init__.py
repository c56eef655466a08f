"""Dual neural-network first stage: models, training kernels, nuisances."""

from .backend import HAVE_COMPILED, active_backend, get_trainer
from .params import (
    ADAM_BETA2,
    ADAM_EPS,
    CROSS_ENTROPY,
    SQUARED_ERROR,
    NetHyper,
    NetworkParams,
    init_params,
    loss_and_grad,
    make_layout,
)
from .train import (
    DEFAULT_CLAMP_EPS,
    NuisanceEstimates,
    fit_nuisances,
    gradient_check,
    oracle_nuisances,
    outcome_r2,
    predict_nuisances,
    propensity_auc,
    train_outcome,
    train_propensity,
)

__all__ = [
    "ADAM_BETA2",
    "ADAM_EPS",
    "CROSS_ENTROPY",
    "SQUARED_ERROR",
    "DEFAULT_CLAMP_EPS",
    "HAVE_COMPILED",
    "NetHyper",
    "NetworkParams",
    "NuisanceEstimates",
    "active_backend",
    "fit_nuisances",
    "get_trainer",
    "gradient_check",
    "init_params",
    "loss_and_grad",
    "make_layout",
    "oracle_nuisances",
    "outcome_r2",
    "predict_nuisances",
    "propensity_auc",
    "train_outcome",
    "train_propensity",
]
