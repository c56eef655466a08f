"""Influence-function variance estimators and the sandwich cross-check.

``var_aipw`` and ``var_naipw`` are the shipped standard errors for the two
doubly robust estimators. ``sandwich_oracle`` re-derives the normalized
estimator's variance through the three-equation M-estimation route
(target parameter plus the two weight-normalization constants) and is
used in tests as an independent oracle: it assembles the full bread and
meat matrices numerically, including the cross terms that the shipped
formula drops as asymptotically negligible.

The module is deliberately self-contained: every quantity is recomputed
from (data, nuisances) so nothing here depends on the estimator module.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
from numpy.typing import NDArray

from .errors import DataError, ValidationError

if TYPE_CHECKING:
    from .dgp import Dataset, Truth
    from .firststage.train import NuisanceEstimates


def _pieces(data: "Dataset", nuis: "NuisanceEstimates"):
    """Shared intermediates: inverse-weight scores and residuals."""
    a = data.A
    g = nuis.g_hat
    if np.any(g <= 0) or np.any(g >= 1):
        raise DataError("propensities must lie strictly inside (0, 1)")
    v = a / g
    u = (1.0 - a) / (1.0 - g)
    f = data.Y - nuis.q1_hat
    h = data.Y - nuis.q0_hat
    q = nuis.q1_hat - nuis.q0_hat
    return a, v, u, f, h, q


def _naipw_beta(v, u, f, h, q) -> tuple[float, float, float, float]:
    gamma_hat = float(v.sum())
    lambda_hat = float(u.sum())
    if gamma_hat <= 0 or lambda_hat <= 0:
        raise DataError("an arm has zero total inverse-propensity weight")
    sr = float(q.mean())
    beta = float((v * f).sum() / gamma_hat - (u * h).sum() / lambda_hat + sr)
    return beta, gamma_hat, lambda_hat, sr


def var_aipw(data: "Dataset", nuis: "NuisanceEstimates", beta_aipw: Optional[float] = None) -> float:
    """Plug-in variance of the inverse-weighted doubly robust estimator."""
    _, v, u, f, h, q = _pieces(data, nuis)
    n = data.n
    sr = float(q.mean())
    if beta_aipw is None:
        beta_aipw = float((v * f - u * h).mean() + sr)
    scores = v * f - u * h + sr - beta_aipw
    return float((scores**2).sum() / n**2)


def var_naipw(data: "Dataset", nuis: "NuisanceEstimates", beta_naipw: Optional[float] = None) -> float:
    """Variance of the self-normalized estimator.

    Each summand is the normalized arm residual contrast plus
    (srhat - betahat) / n; the normalizing sums absorb the 1/n^2 of the
    unnormalized formula, and the two coincide when ghat is constant at
    the treated share.
    """
    _, v, u, f, h, q = _pieces(data, nuis)
    n = data.n
    beta, gamma_hat, lambda_hat, sr = _naipw_beta(v, u, f, h, q)
    if beta_naipw is not None:
        beta = beta_naipw
    scores = v * f / gamma_hat - u * h / lambda_hat + (sr - beta) / n
    return float((scores**2).sum())


@dataclass
class ScoreComponents:
    """Per-observation estimating-equation scores at the fitted triple.

    phi is the target-parameter score, eta and omega the scores of the two
    normalization constants; all three sum to zero at the solution.
    """

    phi: NDArray
    eta: NDArray
    omega: NDArray
    beta_hat: float
    gamma_hat: float
    lambda_hat: float


def score_components(
    data: "Dataset",
    nuis: "NuisanceEstimates",
    beta: Optional[float] = None,
) -> ScoreComponents:
    _, v, u, f, h, q = _pieces(data, nuis)
    n = data.n
    beta_hat, gamma_hat, lambda_hat, _ = _naipw_beta(v, u, f, h, q)
    if beta is not None:
        beta_hat = float(beta)
    phi = lambda_hat * v * f - gamma_hat * u * h + (gamma_hat * lambda_hat / n) * (q - beta_hat)
    eta = v - gamma_hat / n
    omega = u - lambda_hat / n
    return ScoreComponents(phi, eta, omega, beta_hat, gamma_hat, lambda_hat)


@dataclass
class SandwichEstimate:
    """Assembled sandwich: variance plus the bread and meat matrices."""

    variance: float
    bread: NDArray
    meat: NDArray


def sandwich_oracle(data: "Dataset", nuis: "NuisanceEstimates") -> SandwichEstimate:
    """Full three-parameter sandwich variance of the normalized estimator.

    Bread is minus the averaged score Jacobian in (beta, gamma, lambda),
    upper triangular by construction; meat is the averaged score outer
    product, PSD by construction. The (1, 1) entry of bread^-1 meat
    bread^-T over n estimates the target's variance, cross terms included.
    """
    _, v, u, f, h, q = _pieces(data, nuis)
    n = data.n
    comps = score_components(data, nuis)
    beta, gamma_hat, lambda_hat = comps.beta_hat, comps.gamma_hat, comps.lambda_hat
    if gamma_hat == 0 or lambda_hat == 0:
        raise DataError("normalization constants vanish; sandwich is singular")

    bread = np.zeros((3, 3))
    bread[0, 0] = gamma_hat * lambda_hat / n
    bread[0, 1] = float(np.mean(u * h - (lambda_hat / n) * (q - beta)))
    bread[0, 2] = -float(np.mean(v * f + (gamma_hat / n) * (q - beta)))
    bread[1, 1] = 1.0 / n
    bread[2, 2] = 1.0 / n

    psi = np.stack([comps.phi, comps.eta, comps.omega], axis=1)
    meat = psi.T @ psi / n

    bread_inv = np.linalg.inv(bread)
    variance = float((bread_inv @ meat @ bread_inv.T)[0, 0] / n)
    return SandwichEstimate(variance=variance, bread=bread, meat=meat)


def truncated_sandwich(data: "Dataset", nuis: "NuisanceEstimates") -> float:
    """Sandwich variance keeping only the target score's squared term.

    The truncation profiles the plug-in contrast out of the target score
    (its mean replaces the per-observation value), which makes the result
    algebraically identical to ``var_naipw``; the difference between the
    profiled and raw scores is one of the cross terms the full sandwich
    retains.
    """
    _, v, u, f, h, q = _pieces(data, nuis)
    n = data.n
    beta, gamma_hat, lambda_hat, sr = _naipw_beta(v, u, f, h, q)
    phi_profiled = lambda_hat * v * f - gamma_hat * u * h + (gamma_hat * lambda_hat / n) * (sr - beta)
    bread_11 = gamma_hat * lambda_hat / n
    meat_11 = float((phi_profiled**2).sum() / n)
    return float(meat_11 / bread_11**2 / n)


def remainder_diagnostic(
    data: "Dataset",
    nuis: "NuisanceEstimates",
    truth: Optional["Truth"] = None,
    scheme: str = "naipw",
) -> tuple[float, float]:
    """Per-arm product bounds on the second-order remainder.

    Each bound is the root-mean-square weight-calibration error times the
    root-mean-square outcome-regression error, computable only when the
    generative truth is available. Both vanish under oracle nuisances.
    """
    if truth is None:
        truth = data.truth
    if truth is None:
        raise DataError("remainder diagnostic needs the generative truth")
    if scheme not in ("aipw", "naipw"):
        raise ValidationError(f"scheme must be 'aipw' or 'naipw', got {scheme!r}")

    a = data.A
    g_hat = nuis.g_hat
    if scheme == "aipw":
        h1 = g_hat
        h0 = 1.0 - g_hat
    else:
        h1 = g_hat * float(np.mean(a / g_hat))
        h0 = (1.0 - g_hat) * float(np.mean((1.0 - a) / (1.0 - g_hat)))

    weight_err1 = float(np.sqrt(np.mean((truth.g / h1 - 1.0) ** 2)))
    weight_err0 = float(np.sqrt(np.mean(((1.0 - truth.g) / h0 - 1.0) ** 2)))
    q_err1 = float(np.sqrt(np.mean((truth.q1 - nuis.q1_hat) ** 2)))
    q_err0 = float(np.sqrt(np.mean((truth.q0 - nuis.q0_hat) ** 2)))
    return weight_err1 * q_err1, weight_err0 * q_err0
