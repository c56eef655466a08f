"""K-fold cross-fitting of the first-stage nuisances.

Each fold's predictions come from networks trained on the complement, so
no observation is scored by a model that saw it. A fold count of 1 is the
degenerate no-splitting mode: train on everything, predict everything.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .dgp import Dataset
from .errors import DataError, ValidationError
from .firststage.params import NetHyper
from .firststage.train import (
    DEFAULT_CLAMP_EPS,
    NuisanceEstimates,
    outcome_r2,
    predict_nuisances,
    propensity_auc,
    train_outcome,
    train_propensity,
)

DEFAULT_FOLDS = 5


@dataclass(frozen=True)
class FoldPlan:
    """Fold assignment for one dataset: sizes differ by at most one."""

    n_folds: int
    assignment: NDArray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "assignment", np.asarray(self.assignment, dtype=np.int64))
        if self.n_folds < 1:
            raise ValidationError("fold count must be at least 1")
        counts = np.bincount(self.assignment, minlength=self.n_folds)
        if self.assignment.min(initial=0) < 0 or self.assignment.max(initial=0) >= self.n_folds:
            raise ValidationError("fold ids must lie in [0, n_folds)")
        if counts.max() - counts.min() > 1:
            raise ValidationError("fold sizes may differ by at most one")

    def rows(self, fold: int) -> NDArray:
        return np.flatnonzero(self.assignment == fold)

    def complement(self, fold: int) -> NDArray:
        return np.flatnonzero(self.assignment != fold)


def split_folds(
    n: int,
    n_folds: int = DEFAULT_FOLDS,
    seed: int = 0,
    stratify_by: Optional[NDArray] = None,
) -> FoldPlan:
    """Seeded permutation split, optionally stratified on a binary vector.

    Stratification deals the shuffled members of each class around the
    fold cycle with a continuing pointer, keeping both class counts and
    fold sizes within one unit of each other.
    """
    if n_folds < 1:
        raise ValidationError("fold count must be at least 1")
    if n_folds > n:
        raise ValidationError(f"cannot split {n} rows into {n_folds} folds")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    if stratify_by is None:
        order = rng.permutation(n)
    else:
        strata = np.asarray(stratify_by)
        if strata.shape != (n,):
            raise ValidationError("stratification vector must have length n")
        ones = rng.permutation(np.flatnonzero(strata == 1))
        zeros = rng.permutation(np.flatnonzero(strata != 1))
        order = np.concatenate([ones, zeros])
    assignment[order] = np.arange(n) % n_folds
    return FoldPlan(n_folds=n_folds, assignment=assignment, seed=seed)


def _fold_seed(base_seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, 1000 + fold]).generate_state(1)[0])


def crossfit_nuisances(
    data: Dataset,
    hyper: NetHyper,
    plan: Optional[FoldPlan] = None,
    n_folds: int = DEFAULT_FOLDS,
    stratify: bool = True,
    clamp_eps: float = DEFAULT_CLAMP_EPS,
    backend: Optional[str] = None,
) -> NuisanceEstimates:
    """Out-of-fold nuisance predictions assembled in original row order.

    With one fold there is no held-out split: networks train on the full
    sample and predict it (the in-sample mode of the baseline protocol).
    """
    if plan is None:
        plan = split_folds(
            data.n, n_folds=n_folds, seed=hyper.seed,
            stratify_by=data.A if stratify else None,
        )
    if len(plan.assignment) != data.n:
        raise DataError("fold plan and dataset disagree on sample size")

    q1 = np.empty(data.n)
    q0 = np.empty(data.n)
    g = np.empty(data.n)
    for fold in range(plan.n_folds):
        predict_rows = plan.rows(fold)
        train_rows = plan.complement(fold) if plan.n_folds > 1 else predict_rows
        arm_count = data.A[train_rows].sum()
        if arm_count == 0 or arm_count == len(train_rows):
            raise DataError(f"training complement of fold {fold} contains a single arm")
        seed = _fold_seed(hyper.seed, fold)
        outcome = train_outcome(data, hyper, rows=train_rows, seed=seed, backend=backend)
        propensity = train_propensity(data, hyper, rows=train_rows, seed=seed, backend=backend)
        part = predict_nuisances(outcome, propensity, data, rows=predict_rows, clamp_eps=clamp_eps)
        q1[predict_rows] = part.q1_hat
        q0[predict_rows] = part.q0_hat
        g[predict_rows] = part.g_hat

    y_hat = np.where(data.A > 0, q1, q0)
    diagnostics = {
        "r2_outcome": outcome_r2(data.Y, y_hat),
        "auc_propensity": propensity_auc(data.A, g),
        "n_folds": plan.n_folds,
    }
    return NuisanceEstimates(
        q1_hat=q1, q0_hat=q0, g_hat=g,
        fold_id=plan.assignment.copy(), diagnostics=diagnostics,
    )
