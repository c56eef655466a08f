"""Numeric probes of the theory: orthogonality and positivity stress.

The orthogonality probe walks the empirical estimating moment along a
straight line in nuisance space and estimates its derivative at the
truth; an orthogonal moment's slope sits at the Monte Carlo noise floor
while the plug-in contrast's does not. The positivity stress injects
near-zero propensities for one or two treated units into otherwise
well-behaved nuisances and compares both doubly robust estimators
against the closed-form limits of the single- and two-unit scenarios.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from .dgp import Dataset, DgpSpec, gen_dataset
from .errors import DataError, ValidationError
from .estimators import WeightScheme, arm_adjustments, gdr
from .firststage.train import NuisanceEstimates, oracle_nuisances
from .variance import var_aipw, var_naipw

DEFAULT_EPS_GRID = tuple(np.linspace(-0.1, 0.1, 9))
DEFAULT_S_GRID = (2.0, 4.0, 8.0, 12.0)


# ---------------------------------------------------------------------------
# Orthogonality probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Direction:
    """A fixed perturbation of (q1, q0, g), one vector per nuisance."""

    dq1: NDArray
    dq0: NDArray
    dg: NDArray

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.mean(self.dq1**2 + self.dq0**2 + self.dg**2)))


def default_direction(data: Dataset) -> Direction:
    """Smooth bounded perturbation; dg shrinks near the propensity bounds
    so that every point of the epsilon path stays inside (0, 1)."""
    w1 = data.W[:, 0]
    w2 = data.W[:, min(1, data.p - 1)]
    w3 = data.W[:, min(2, data.p - 1)]
    g = data.truth.g if data.truth is not None else np.full(data.n, 0.5)
    return Direction(
        dq1=1.0 + 0.5 * np.sin(w1),
        dq0=0.5 * np.cos(w2),
        dg=g * (1.0 - g) * np.cos(w3),
    )


@dataclass
class ProbeReport:
    """Moment paths and fitted slopes for each probed estimating moment."""

    eps_grid: NDArray
    moments: dict[str, NDArray]
    slopes: dict[str, float]
    direction_norm: float
    n: int

    def moment_at_zero(self, name: str) -> float:
        zero = int(np.argmin(np.abs(self.eps_grid)))
        return float(self.moments[name][zero])


def _moment_values(data: Dataset, q1: NDArray, q0: NDArray, g: NDArray, beta: float) -> dict[str, float]:
    a, y = data.A, data.Y
    v = a / g
    u = (1.0 - a) / (1.0 - g)
    f = y - q1
    h = y - q0
    q_diff = q1 - q0
    sr_moment = float(np.mean(q_diff) - beta)
    aipw_moment = float(np.mean(v * f - u * h) + sr_moment)
    naipw_moment = float((v * f).sum() / v.sum() - (u * h).sum() / u.sum() + sr_moment)
    return {"sr": sr_moment, "aipw": aipw_moment, "naipw": naipw_moment}


def orthogonality_probe(
    spec: DgpSpec,
    n: Optional[int] = None,
    seed: Optional[int] = None,
    eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
    direction_fn: Callable[[Dataset], Direction] = default_direction,
) -> ProbeReport:
    """Estimate the Gateaux derivative of each moment at the truth.

    One large oracle sample is drawn; the moment is evaluated along
    truth + eps * direction for every grid point and a least-squares line
    gives the slope. The grid should be symmetric around zero so that the
    quadratic part of the path does not leak into the slope.
    """
    overrides = {}
    if n is not None:
        overrides["n"] = n
    if seed is not None:
        overrides["seed"] = seed
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    eps_grid = np.asarray(sorted(eps_grid), dtype=float)
    if eps_grid.size < 3:
        raise ValidationError("eps grid needs at least 3 points")

    data = gen_dataset(spec)
    truth = data.truth
    direction = direction_fn(data)

    moments: dict[str, list[float]] = {"sr": [], "aipw": [], "naipw": []}
    for eps in eps_grid:
        q1 = truth.q1 + eps * direction.dq1
        q0 = truth.q0 + eps * direction.dq0
        g = truth.g + eps * direction.dg
        if np.any(g <= 0) or np.any(g >= 1):
            raise ValidationError("perturbed propensities left (0, 1); shrink eps or the direction")
        values = _moment_values(data, q1, q0, g, truth.beta)
        for name, value in values.items():
            moments[name].append(value)

    arrays = {name: np.asarray(vals) for name, vals in moments.items()}
    slopes = {name: float(np.polyfit(eps_grid, vals, 1)[0]) for name, vals in arrays.items()}
    return ProbeReport(
        eps_grid=eps_grid, moments=arrays, slopes=slopes,
        direction_norm=direction.norm, n=data.n,
    )


# ---------------------------------------------------------------------------
# Positivity stress
# ---------------------------------------------------------------------------

@dataclass
class StressRow:
    """Estimator behavior with near-zero propensities injected.

    ``s`` of 0 means no injection (the moderate baseline). The arm-1
    component is the treated-arm adjustment plus the mean fitted treated
    outcome; closed forms approximate it for the one- and two-unit
    injection scenarios.
    """

    s: float
    t: Optional[float]
    aipw_beta: float
    naipw_beta: float
    aipw_var: float
    naipw_var: float
    aipw_adj1: float
    naipw_adj1: float
    naipw_arm1: float
    closed_form_one_unit: Optional[float]
    naipw_beta_two: Optional[float]
    naipw_arm1_two: Optional[float]
    closed_form_two_unit: Optional[float]
    convex_bound: float
    convex_bound_ok: bool


def _inject(nuis: NuisanceEstimates, index_values: dict[int, float]) -> NuisanceEstimates:
    g_new = nuis.g_hat.copy()
    for idx, value in index_values.items():
        g_new[idx] = value
    return nuis.replace_g(g_new)


def positivity_stress(
    spec: DgpSpec,
    s_grid: Sequence[float] = DEFAULT_S_GRID,
    n: Optional[int] = None,
    seed: Optional[int] = None,
    two_unit_offset: float = 4.0,
    nuisances: Optional[NuisanceEstimates] = None,
) -> list[StressRow]:
    """Tabulate both doubly robust estimators under injected 10^-s propensities.

    By default the baseline nuisances are the oracle ones, so the injected
    value is the only pathology. The first treated unit receives 10^-s;
    the two-unit scenario additionally gives the second treated unit
    10^-(s + two_unit_offset).
    """
    overrides = {}
    if n is not None:
        overrides["n"] = n
    if seed is not None:
        overrides["seed"] = seed
    if overrides:
        spec = dataclasses.replace(spec, **overrides)

    data = gen_dataset(spec)
    base = nuisances if nuisances is not None else oracle_nuisances(data)
    treated = np.flatnonzero(data.A > 0)
    if treated.size < 2:
        raise DataError("stress scenario needs at least two treated units")
    k, l = int(treated[0]), int(treated[1])
    resid_k = float(data.Y[k] - base.q1_hat[k])
    resid_l = float(data.Y[l] - base.q1_hat[l])
    q1_mean = float(base.q1_hat.mean())
    n_obs = data.n

    aipw_scheme = WeightScheme("aipw")
    naipw_scheme = WeightScheme("naipw")
    rows = []
    for s in s_grid:
        s = float(s)
        if s == 0:
            nuis = base
            t = None
        else:
            nuis = _inject(base, {k: 10.0 ** (-s)})
            t = s + two_unit_offset

        aipw_res = gdr(data, nuis, aipw_scheme, with_variance=False)
        naipw_res = gdr(data, nuis, naipw_scheme, with_variance=False)
        aipw_adj1, _ = arm_adjustments(data, nuis, aipw_scheme)
        naipw_adj1, _ = arm_adjustments(data, nuis, naipw_scheme)
        naipw_arm1 = naipw_adj1 + q1_mean

        closed_one = None if s == 0 else resid_k + q1_mean

        naipw_beta_two = naipw_arm1_two = closed_two = None
        if s != 0:
            nuis_two = _inject(base, {k: 10.0 ** (-s), l: 10.0 ** (-t)})
            naipw_two_res = gdr(data, nuis_two, naipw_scheme, with_variance=False)
            naipw_beta_two = naipw_two_res.beta_hat
            adj1_two, _ = arm_adjustments(data, nuis_two, naipw_scheme)
            naipw_arm1_two = adj1_two + q1_mean
            closed_two = (
                resid_k / (1.0 + 10.0 ** (t - s) + 10.0 ** (-s) * (n_obs - 2))
                + resid_l / (1.0 + 10.0 ** (s - t) + 10.0 ** (-t) * (n_obs - 2))
                + q1_mean
            )

        treated_resid_max = float(np.abs(data.Y[treated] - nuis.q1_hat[treated]).max())
        rows.append(StressRow(
            s=s, t=t,
            aipw_beta=aipw_res.beta_hat, naipw_beta=naipw_res.beta_hat,
            aipw_var=var_aipw(data, nuis, aipw_res.beta_hat),
            naipw_var=var_naipw(data, nuis, naipw_res.beta_hat),
            aipw_adj1=aipw_adj1, naipw_adj1=naipw_adj1, naipw_arm1=naipw_arm1,
            closed_form_one_unit=closed_one,
            naipw_beta_two=naipw_beta_two, naipw_arm1_two=naipw_arm1_two,
            closed_form_two_unit=closed_two,
            convex_bound=treated_resid_max,
            convex_bound_ok=abs(naipw_adj1) <= treated_resid_max + 1e-12,
        ))
    return rows
