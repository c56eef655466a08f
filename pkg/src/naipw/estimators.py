"""Point estimators of the average treatment effect.

The plug-in family (nATE, SR), the propensity-weighting family (IPW,
nIPW), and the doubly robust family: single-sum residual adjustments
added to SR, parameterized by a per-arm weight scheme. The scheme with
plain inverse weights recovers the classic augmented estimator; the
self-normalized scheme divides each arm's weighted residual sum by the
realized weight total, which bounds the adjustment by the largest
residual no matter how extreme the propensities are.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .dgp import Dataset
from .errors import DataError, ValidationError
from .firststage.train import NuisanceEstimates

SCHEME_VARIANTS = ("aipw", "naipw", "hybrid")

ESTIMATOR_NAMES = ("nate", "sr", "ipw", "nipw", "aipw", "naipw", "hybrid")


@dataclass(frozen=True)
class WeightScheme:
    """Arm weight functions h1, h0 for the doubly robust family.

    aipw:   h1 = g,           h0 = 1 - g
    naipw:  h1 = g * En[A/g], h0 = (1-g) * En[(1-A)/(1-g)]
    hybrid: normalized form only where g falls within 1/n of the relevant
            boundary, plain inverse weights elsewhere (experimental).
    """

    variant: str

    def __post_init__(self):
        if self.variant not in SCHEME_VARIANTS:
            raise ValidationError(f"unknown scheme {self.variant!r}; expected one of {SCHEME_VARIANTS}")

    @property
    def experimental(self) -> bool:
        return self.variant == "hybrid"

    def arm_weights(self, a: NDArray, g_hat: NDArray) -> tuple[NDArray, NDArray]:
        a = np.asarray(a, dtype=float)
        g = np.asarray(g_hat, dtype=float)
        if np.any(g <= 0) or np.any(g >= 1):
            raise DataError("propensities must lie strictly inside (0, 1)")
        if self.variant == "aipw":
            return g, 1.0 - g
        norm1 = float(np.mean(a / g))
        norm0 = float(np.mean((1.0 - a) / (1.0 - g)))
        if self.variant == "naipw":
            return g * norm1, (1.0 - g) * norm0
        eps = 1.0 / len(a)
        h1 = np.where(g < eps, g * norm1, g)
        h0 = np.where(g > 1.0 - eps, (1.0 - g) * norm0, 1.0 - g)
        return h1, h0


@dataclass
class EstimatorResult:
    """One estimator's output: point estimate plus optional standard error."""

    estimator: str
    beta_hat: float
    sigma_hat: Optional[float] = None
    n_used: int = 0
    scheme: Optional[str] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sigma_hat is not None and self.sigma_hat < 0:
            raise ValidationError("sigma_hat must be nonnegative")


def _checked(data: Dataset, nuis: NuisanceEstimates) -> None:
    if nuis.n != data.n:
        raise DataError("nuisances and data disagree on sample size")
    data.require_both_arms()


def nate(data: Dataset, nuis: NuisanceEstimates) -> EstimatorResult:
    """Arm-wise means of fitted values: biased under confounding."""
    _checked(data, nuis)
    treated = data.A > 0
    value = float(nuis.q1_hat[treated].mean() - nuis.q0_hat[~treated].mean())
    return EstimatorResult("nate", value, n_used=data.n)


def sr_value(q1_hat: NDArray, q0_hat: NDArray) -> float:
    return float(np.mean(q1_hat - q0_hat))


def sr(data: Dataset, nuis: NuisanceEstimates) -> EstimatorResult:
    """Plug-in mean difference of the outcome regressions."""
    _checked(data, nuis)
    return EstimatorResult("sr", sr_value(nuis.q1_hat, nuis.q0_hat), n_used=data.n)


def ipw(data: Dataset, nuis: NuisanceEstimates) -> EstimatorResult:
    """Unnormalized inverse-propensity weighting of raw outcomes."""
    _checked(data, nuis)
    g = nuis.g_hat
    value = float(np.mean(data.A * data.Y / g - (1.0 - data.A) * data.Y / (1.0 - g)))
    return EstimatorResult("ipw", value, n_used=data.n)


def nipw_weighted(a: NDArray, y: NDArray, w1: NDArray, w0: NDArray) -> float:
    """Self-normalized weighting with caller-supplied arm weights.

    Invariant under rescaling of either weight vector.
    """
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    denom1 = float(np.sum(a * w1))
    denom0 = float(np.sum((1.0 - a) * w0))
    if denom1 <= 0 or denom0 <= 0:
        raise DataError("an arm has zero total weight")
    return float(np.sum(a * w1 * y) / denom1 - np.sum((1.0 - a) * w0 * y) / denom0)


def nipw(data: Dataset, nuis: NuisanceEstimates) -> EstimatorResult:
    """Self-normalized inverse-propensity weighting of raw outcomes."""
    _checked(data, nuis)
    g = nuis.g_hat
    value = nipw_weighted(data.A, data.Y, 1.0 / g, 1.0 / (1.0 - g))
    return EstimatorResult("nipw", value, n_used=data.n)


def arm_adjustments(
    data: Dataset,
    nuis: NuisanceEstimates,
    scheme: WeightScheme,
) -> tuple[float, float]:
    """Per-arm weighted-residual adjustments added to the plug-in estimate."""
    h1, h0 = scheme.arm_weights(data.A, nuis.g_hat)
    if np.any(h1 <= 0) or np.any(h0 <= 0):
        raise DataError("scheme produced non-positive arm weights")
    adj1 = float(np.mean(data.A * (data.Y - nuis.q1_hat) / h1))
    adj0 = float(np.mean((1.0 - data.A) * (data.Y - nuis.q0_hat) / h0))
    return adj1, adj0


def gdr(
    data: Dataset,
    nuis: NuisanceEstimates,
    scheme: WeightScheme,
    with_variance: bool = True,
) -> EstimatorResult:
    """Doubly robust estimate under an arbitrary arm weight scheme.

    Standard errors are attached for the two schemes with published
    variance formulas; the hybrid scheme reports the point estimate only.
    """
    _checked(data, nuis)
    adj1, adj0 = arm_adjustments(data, nuis, scheme)
    beta = adj1 - adj0 + sr_value(nuis.q1_hat, nuis.q0_hat)

    sigma = None
    if with_variance and scheme.variant in ("aipw", "naipw"):
        from .variance import var_aipw, var_naipw

        var = var_aipw(data, nuis, beta) if scheme.variant == "aipw" else var_naipw(data, nuis, beta)
        sigma = float(np.sqrt(var))

    name = scheme.variant if scheme.variant in ("aipw", "naipw") else "hybrid"
    metadata = {"experimental": True} if scheme.experimental else {}
    return EstimatorResult(
        name, float(beta), sigma_hat=sigma, n_used=data.n, scheme=scheme.variant, metadata=metadata
    )


def aipw(data: Dataset, nuis: NuisanceEstimates, with_variance: bool = True) -> EstimatorResult:
    return gdr(data, nuis, WeightScheme("aipw"), with_variance=with_variance)


def naipw(data: Dataset, nuis: NuisanceEstimates, with_variance: bool = True) -> EstimatorResult:
    return gdr(data, nuis, WeightScheme("naipw"), with_variance=with_variance)


def unbiasedness_check(
    scheme: WeightScheme,
    data: Dataset,
    nuis: NuisanceEstimates,
) -> dict:
    """Empirical moments behind the scheme's unbiasedness condition.

    ``mean_a_minus_h1`` and ``mean_1ma_minus_h0`` estimate the two moments
    that must vanish for an unbiased scheme; ``mean_a_over_h1`` and
    ``mean_1ma_over_h0`` equal 1 identically for the self-normalized
    scheme.
    """
    h1, h0 = scheme.arm_weights(data.A, nuis.g_hat)
    a = data.A
    return {
        "scheme": scheme.variant,
        "mean_a_minus_h1": float(np.mean(a - h1)),
        "mean_1ma_minus_h0": float(np.mean((1.0 - a) - h0)),
        "mean_a_over_h1": float(np.mean(a / h1)),
        "mean_1ma_over_h0": float(np.mean((1.0 - a) / h0)),
    }


def evaluate(
    data: Dataset,
    nuis: NuisanceEstimates,
    names=ESTIMATOR_NAMES,
    with_variance: bool = True,
) -> list[EstimatorResult]:
    """Run a batch of estimators by name, in the order given."""
    results = []
    for name in names:
        if name == "nate":
            results.append(nate(data, nuis))
        elif name == "sr":
            results.append(sr(data, nuis))
        elif name == "ipw":
            results.append(ipw(data, nuis))
        elif name == "nipw":
            results.append(nipw(data, nuis))
        elif name in SCHEME_VARIANTS:
            results.append(gdr(data, nuis, WeightScheme(name), with_variance=with_variance))
        else:
            raise ValidationError(f"unknown estimator {name!r}; expected one of {ESTIMATOR_NAMES}")
    return results
