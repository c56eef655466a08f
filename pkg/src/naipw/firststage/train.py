"""Training drivers for the two first-stage networks and nuisance assembly.

The outcome network regresses Y on (A, W) with a squared-error loss and
predicts both potential-outcome regressions by toggling its treatment
input; the propensity network classifies A from W with a cross-entropy
loss and a logistic head. Both are penalized by an L1 term on connection
weights, handled as a subgradient inside the Adam update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.stats import rankdata

from ..dgp import Dataset
from ..errors import DataError, ValidationError
from .backend import get_trainer
from .params import (
    ADAM_BETA2,
    ADAM_EPS,
    CROSS_ENTROPY,
    SQUARED_ERROR,
    NetHyper,
    NetworkParams,
    init_params,
    loss_and_grad,
)

# Stream tags so the two networks never share initialization randomness.
_OUTCOME_TAG = 11
_PROPENSITY_TAG = 13

DEFAULT_CLAMP_EPS = 1e-6


@dataclass
class NuisanceEstimates:
    """Per-observation first-stage predictions feeding the estimators."""

    q1_hat: NDArray
    q0_hat: NDArray
    g_hat: NDArray
    fold_id: Optional[NDArray] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.q1_hat = np.asarray(self.q1_hat, dtype=float)
        self.q0_hat = np.asarray(self.q0_hat, dtype=float)
        self.g_hat = np.asarray(self.g_hat, dtype=float)
        n = self.q1_hat.shape[0]
        if self.q0_hat.shape != (n,) or self.g_hat.shape != (n,):
            raise ValidationError("nuisance vectors must share one length")
        if np.any(self.g_hat <= 0) or np.any(self.g_hat >= 1):
            raise ValidationError("propensity estimates must lie strictly inside (0, 1)")

    @property
    def n(self) -> int:
        return self.q1_hat.shape[0]

    def replace_g(self, g_new: NDArray) -> "NuisanceEstimates":
        """Copy with substituted propensities (used by the stress probes)."""
        return NuisanceEstimates(
            q1_hat=self.q1_hat.copy(),
            q0_hat=self.q0_hat.copy(),
            g_hat=np.asarray(g_new, dtype=float),
            fold_id=None if self.fold_id is None else self.fold_id.copy(),
            diagnostics=dict(self.diagnostics),
        )


def _resolve_rows(data: Dataset, rows) -> NDArray:
    if rows is None:
        return np.arange(data.n)
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise DataError("row subset is empty")
    return rows


def _derived_rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, tag]))


def _fit_network(
    X: NDArray,
    y: NDArray,
    hyper: NetHyper,
    l1: float,
    logistic: bool,
    rng: np.random.Generator,
    backend: Optional[str],
) -> NetworkParams:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = X.shape[0]
    params = init_params(X.shape[1], hyper.hidden_widths, logistic, rng)
    schedule = np.empty((hyper.epochs, n), dtype=np.int64)
    for epoch in range(hyper.epochs):
        schedule[epoch] = rng.permutation(n)
    adam_m = np.zeros(params.layout.size)
    adam_v = np.zeros(params.layout.size)
    trainer = get_trainer(backend)
    trainer(
        params.values, adam_m, adam_v, params.layout, logistic,
        X, y, schedule, min(hyper.batch_size, n),
        hyper.learning_rate, hyper.momentum_beta1, ADAM_BETA2, ADAM_EPS, l1, 0,
    )
    return params


def train_outcome(
    data: Dataset,
    hyper: NetHyper,
    rows=None,
    seed: Optional[int] = None,
    backend: Optional[str] = None,
) -> NetworkParams:
    """Fit the outcome regression on (A, W) restricted to ``rows``."""
    rows = _resolve_rows(data, rows)
    a = data.A[rows]
    if a.sum() == 0 or a.sum() == len(a):
        raise DataError("outcome training subset must contain both arms")
    X = np.column_stack([a, data.W[rows]])
    rng = _derived_rng(hyper.seed if seed is None else seed, _OUTCOME_TAG)
    return _fit_network(X, data.Y[rows], hyper, hyper.l1_outcome, False, rng, backend)


def train_propensity(
    data: Dataset,
    hyper: NetHyper,
    rows=None,
    seed: Optional[int] = None,
    backend: Optional[str] = None,
) -> NetworkParams:
    """Fit the treatment classifier on W restricted to ``rows``."""
    rows = _resolve_rows(data, rows)
    a = data.A[rows]
    if a.sum() == 0 or a.sum() == len(a):
        raise DataError("propensity training subset must contain both arms")
    rng = _derived_rng(hyper.seed if seed is None else seed, _PROPENSITY_TAG)
    return _fit_network(data.W[rows], a, hyper, hyper.l1_propensity, True, rng, backend)


def outcome_r2(y: NDArray, y_hat: NDArray) -> float:
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return float("nan")
    return 1.0 - float(np.sum((y - y_hat) ** 2)) / ss_tot


def propensity_auc(a: NDArray, g_hat: NDArray) -> float:
    """Rank-based AUC of the treatment classifier (ties get average rank)."""
    n1 = int(a.sum())
    n0 = len(a) - n1
    if n1 == 0 or n0 == 0:
        return float("nan")
    ranks = rankdata(g_hat)
    u = ranks[a > 0].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def predict_nuisances(
    outcome: NetworkParams,
    propensity: NetworkParams,
    data: Dataset,
    rows=None,
    clamp_eps: float = DEFAULT_CLAMP_EPS,
) -> NuisanceEstimates:
    """Evaluate both networks on ``rows``, toggling the treatment input.

    Propensities are clamped to [clamp_eps, 1 - clamp_eps] purely to keep
    downstream divisions finite; estimators never re-clamp.
    """
    if not 0 < clamp_eps < 0.5:
        raise ValidationError("clamp_eps must lie in (0, 0.5)")
    rows = _resolve_rows(data, rows)
    W = data.W[rows]
    ones = np.ones(len(rows))
    q1 = outcome.predict(np.column_stack([ones, W]))
    q0 = outcome.predict(np.column_stack([np.zeros(len(rows)), W]))
    g = propensity.predict(W)
    g = np.clip(g, clamp_eps, 1.0 - clamp_eps)

    a = data.A[rows]
    y_hat = np.where(a > 0, q1, q0)
    diagnostics = {
        "r2_outcome": outcome_r2(data.Y[rows], y_hat),
        "auc_propensity": propensity_auc(a, g),
    }
    return NuisanceEstimates(q1_hat=q1, q0_hat=q0, g_hat=g, diagnostics=diagnostics)


def oracle_nuisances(data: Dataset) -> NuisanceEstimates:
    """Substitute the generative truth verbatim for the fitted nuisances."""
    if data.truth is None:
        raise DataError("dataset carries no truth vectors; oracle mode unavailable")
    return NuisanceEstimates(
        q1_hat=data.truth.q1.copy(),
        q0_hat=data.truth.q0.copy(),
        g_hat=data.truth.g.copy(),
        diagnostics={"oracle": True},
    )


def fit_nuisances(
    data: Dataset,
    hyper: NetHyper,
    rows=None,
    seed: Optional[int] = None,
    clamp_eps: float = DEFAULT_CLAMP_EPS,
    backend: Optional[str] = None,
) -> NuisanceEstimates:
    """Train both networks on ``rows`` and predict on those same rows."""
    outcome = train_outcome(data, hyper, rows=rows, seed=seed, backend=backend)
    propensity = train_propensity(data, hyper, rows=rows, seed=seed, backend=backend)
    return predict_nuisances(outcome, propensity, data, rows=rows, clamp_eps=clamp_eps)


def gradient_check(
    params: NetworkParams,
    loss_kind: str,
    X: NDArray,
    y: NDArray,
    l1: float = 0.0,
    step: float = 1e-5,
) -> float:
    """Max relative gap between analytic and central-difference gradients.

    Coordinates sitting exactly at zero are skipped when ``l1 > 0`` (the
    penalty's subgradient is not unique there). Coordinates where both
    gradients are below 1e-6 are compared on an absolute scale.
    """
    if loss_kind not in (SQUARED_ERROR, CROSS_ENTROPY):
        raise ValidationError(f"unknown loss kind {loss_kind!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    _, analytic = loss_and_grad(params, X, y, loss_kind, l1)

    worst = 0.0
    work = params.copy()
    for k in range(params.layout.size):
        if l1 > 0 and params.values[k] == 0.0:
            continue
        original = work.values[k]
        work.values[k] = original + step
        up, _ = loss_and_grad(work, X, y, loss_kind, l1)
        work.values[k] = original - step
        down, _ = loss_and_grad(work, X, y, loss_kind, l1)
        work.values[k] = original
        fd = (up - down) / (2.0 * step)
        denom = max(abs(analytic[k]), abs(fd), 1e-6)
        worst = max(worst, abs(analytic[k] - fd) / denom)
    return worst
