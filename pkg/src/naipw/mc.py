"""Replication harness: run estimator batteries over DGP x hyper grids.

Each replication derives its own seed (base_seed XOR replication index),
generates a dataset, fits or oracle-substitutes the nuisances per grid
cell, and evaluates the requested estimators. Failures are recorded and
excluded from the summaries, never fatal to the batch. Summaries report
bias (truth minus mean), the 1/m-normalized Monte Carlo spread, their
root-mean-square combination, and the mean asymptotic standard error,
computed on estimates winsorized at a reporting cap; raw estimates are
always persisted separately.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .crossfit import crossfit_nuisances
from .dgp import DgpSpec, gen_dataset
from .errors import ValidationError
from .estimators import ESTIMATOR_NAMES, evaluate
from .firststage.params import NetHyper
from .firststage.train import DEFAULT_CLAMP_EPS, oracle_nuisances

ORACLE_CELL = "oracle"

RAW_COLUMNS = (
    "rep", "cell_id", "estimator", "scheme", "beta_hat", "sigma_hat",
    "failed", "error", "r2_outcome", "auc_propensity",
)
SUMMARY_COLUMNS = (
    "cell_id", "estimator", "scheme", "n", "p", "l1", "widths",
    "bias", "mc_std", "rmse", "mean_se", "failures",
)


@dataclass(frozen=True)
class McConfig:
    """Study description: DGP template, hyper grid, and run controls."""

    dgp: DgpSpec
    hyper_grid: tuple[NetHyper, ...] = ()
    estimators: tuple[str, ...] = ("sr", "ipw", "nipw", "aipw", "naipw")
    m: int = 100
    base_seed: int = 0
    oracle_mode: bool = False
    cap: Optional[float] = 10.0
    n_folds: int = 1
    stratify_folds: bool = True
    clamp_eps: float = DEFAULT_CLAMP_EPS

    def __post_init__(self):
        object.__setattr__(self, "hyper_grid", tuple(self.hyper_grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.m < 1:
            raise ValidationError("replication count m must be at least 1")
        if self.base_seed < 0:
            raise ValidationError("base_seed must be nonnegative")
        if not self.oracle_mode and not self.hyper_grid:
            raise ValidationError("hyper_grid must be nonempty unless oracle_mode is set")
        unknown = set(self.estimators) - set(ESTIMATOR_NAMES)
        if unknown:
            raise ValidationError(f"unknown estimators: {sorted(unknown)}")
        if self.cap is not None and self.cap <= 0:
            raise ValidationError("cap must be positive (or None to disable)")
        if self.n_folds < 1:
            raise ValidationError("n_folds must be at least 1")

    def cells(self) -> list[tuple[str, Optional[NetHyper]]]:
        if self.oracle_mode:
            return [(ORACLE_CELL, None)]
        return [(str(i), h) for i, h in enumerate(self.hyper_grid)]


@dataclass
class RepRecord:
    """One estimator's outcome inside one replication."""

    rep: int
    cell_id: str
    estimator: str
    scheme: Optional[str]
    beta_hat: float
    sigma_hat: Optional[float]
    failed: bool = False
    error: str = ""
    r2_outcome: float = float("nan")
    auc_propensity: float = float("nan")


def replication_seed(base_seed: int, rep_index: int) -> int:
    return int(base_seed) ^ int(rep_index)


def _training_seed(rep_seed: int, cell_index: int, hyper_seed: int) -> int:
    ss = np.random.SeedSequence(
        [rep_seed & 0xFFFFFFFF, cell_index, int(hyper_seed) & 0xFFFFFFFF]
    )
    return int(ss.generate_state(1)[0])


def _failed_records(config: McConfig, rep_index: int, cell_id: str, message: str) -> list[RepRecord]:
    return [
        RepRecord(
            rep=rep_index, cell_id=cell_id, estimator=name,
            scheme=name if name in ("aipw", "naipw", "hybrid") else None,
            beta_hat=float("nan"), sigma_hat=None, failed=True, error=message,
        )
        for name in config.estimators
    ]


def run_replication(config: McConfig, rep_index: int) -> list[RepRecord]:
    """Generate one dataset and evaluate every cell and estimator on it."""
    rep_seed = replication_seed(config.base_seed, rep_index)
    spec = dataclasses.replace(config.dgp, seed=rep_seed)
    cells = config.cells()
    try:
        data = gen_dataset(spec)
    except Exception as exc:  # noqa: BLE001 - recorded, never fatal to the batch
        message = f"dgp: {exc}"
        return [rec for cell_id, _ in cells for rec in _failed_records(config, rep_index, cell_id, message)]

    records: list[RepRecord] = []
    for cell_index, (cell_id, hyper) in enumerate(cells):
        try:
            if hyper is None:
                nuis = oracle_nuisances(data)
            else:
                run_hyper = dataclasses.replace(
                    hyper, seed=_training_seed(rep_seed, cell_index, hyper.seed)
                )
                nuis = crossfit_nuisances(
                    data, run_hyper,
                    n_folds=config.n_folds, stratify=config.stratify_folds,
                    clamp_eps=config.clamp_eps,
                )
        except Exception as exc:  # noqa: BLE001
            records.extend(_failed_records(config, rep_index, cell_id, f"firststage: {exc}"))
            continue

        r2 = float(nuis.diagnostics.get("r2_outcome", float("nan")))
        auc = float(nuis.diagnostics.get("auc_propensity", float("nan")))
        for name in config.estimators:
            try:
                result = evaluate(data, nuis, names=[name])[0]
                records.append(RepRecord(
                    rep=rep_index, cell_id=cell_id, estimator=name, scheme=result.scheme,
                    beta_hat=result.beta_hat, sigma_hat=result.sigma_hat,
                    r2_outcome=r2, auc_propensity=auc,
                ))
            except Exception as exc:  # noqa: BLE001
                records.append(RepRecord(
                    rep=rep_index, cell_id=cell_id, estimator=name,
                    scheme=name if name in ("aipw", "naipw", "hybrid") else None,
                    beta_hat=float("nan"), sigma_hat=None,
                    failed=True, error=f"estimator: {exc}",
                    r2_outcome=r2, auc_propensity=auc,
                ))
    return records


def _worker(payload: tuple[McConfig, int]) -> list[RepRecord]:
    config, rep_index = payload
    return run_replication(config, rep_index)


def run_study(config: McConfig, workers: int = 1) -> list[RepRecord]:
    """Run all replications; results are ordered by replication index, so
    the output is independent of worker count and scheduling."""
    if workers < 1:
        raise ValidationError("workers must be at least 1")
    if workers == 1:
        batches = [run_replication(config, rep) for rep in range(config.m)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_worker, [(config, rep) for rep in range(config.m)]))
    return [rec for batch in batches for rec in batch]


@dataclass
class CellSummary:
    """Aggregate metrics for one (cell, estimator) pair."""

    cell_id: str
    estimator: str
    scheme: Optional[str]
    bias: float
    mc_std: float
    rmse: float
    mean_se: float
    n_ok: int
    failures: int
    flagged: bool = False


def summarize(
    records: Sequence[RepRecord],
    beta_true: float,
    cap: Optional[float] = 10.0,
) -> list[CellSummary]:
    """Bias / spread / RMSE / mean-SE per cell and estimator.

    Estimates are winsorized at +-cap before the metrics (matching how the
    summary figures cap extreme draws); pass ``cap=None`` for raw metrics.
    The identity rmse^2 = bias^2 + mc_std^2 holds by construction.
    """
    groups: dict[tuple[str, str], list[RepRecord]] = {}
    order: list[tuple[str, str]] = []
    for rec in records:
        key = (rec.cell_id, rec.estimator)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(rec)

    summaries = []
    for cell_id, estimator in order:
        recs = groups[(cell_id, estimator)]
        ok = [r for r in recs if not r.failed and np.isfinite(r.beta_hat)]
        failures = len(recs) - len(ok)
        betas = np.array([r.beta_hat for r in ok], dtype=float)
        if cap is not None and betas.size:
            betas = np.clip(betas, -cap, cap)
        if betas.size:
            mu = float(betas.mean())
            bias = beta_true - mu
            mc_std = float(np.sqrt(np.mean((betas - mu) ** 2)))
            rmse = float(np.sqrt(mc_std**2 + bias**2))
        else:
            bias = mc_std = rmse = float("nan")
        sigmas = [r.sigma_hat for r in ok if r.sigma_hat is not None]
        mean_se = float(np.mean(sigmas)) if sigmas else float("nan")
        summaries.append(CellSummary(
            cell_id=cell_id, estimator=estimator, scheme=recs[0].scheme,
            bias=bias, mc_std=mc_std, rmse=rmse, mean_se=mean_se,
            n_ok=len(ok), failures=failures,
            flagged=failures > 0.1 * len(recs),
        ))
    return summaries


def _cell_labels(config: McConfig) -> dict[str, dict]:
    labels = {}
    for cell_id, hyper in config.cells():
        if hyper is None:
            labels[cell_id] = {"l1": "", "widths": ORACLE_CELL}
        else:
            labels[cell_id] = {
                "l1": hyper.l1_outcome,
                "widths": "x".join(str(w) for w in hyper.hidden_widths),
            }
    return labels


def raw_frame(records: Sequence[RepRecord]) -> pd.DataFrame:
    rows = [
        {
            "rep": r.rep, "cell_id": r.cell_id, "estimator": r.estimator,
            "scheme": r.scheme or "", "beta_hat": r.beta_hat,
            "sigma_hat": "" if r.sigma_hat is None else r.sigma_hat,
            "failed": int(r.failed), "error": r.error,
            "r2_outcome": r.r2_outcome, "auc_propensity": r.auc_propensity,
        }
        for r in records
    ]
    return pd.DataFrame(rows, columns=list(RAW_COLUMNS))


def summary_frame(summaries: Sequence[CellSummary], config: McConfig) -> pd.DataFrame:
    labels = _cell_labels(config)
    rows = [
        {
            "cell_id": s.cell_id, "estimator": s.estimator, "scheme": s.scheme or "",
            "n": config.dgp.n, "p": config.dgp.p,
            "l1": labels[s.cell_id]["l1"], "widths": labels[s.cell_id]["widths"],
            "bias": s.bias, "mc_std": s.mc_std, "rmse": s.rmse,
            "mean_se": s.mean_se, "failures": s.failures,
        }
        for s in summaries
    ]
    return pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS))


def write_raw_csv(records: Sequence[RepRecord], path) -> None:
    raw_frame(records).to_csv(path, index=False, lineterminator="\n")


def write_summary_csv(summaries: Sequence[CellSummary], config: McConfig, path) -> None:
    summary_frame(summaries, config).to_csv(path, index=False, lineterminator="\n")
