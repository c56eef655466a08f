"""Command-line entry point.

Four subcommands share one config file and output-directory convention:

  simulate   replication study over the DGP x hyper grid -> summary.csv, raw.csv
  stress     positivity stress table -> stress.csv
  probe      orthogonality slope probe -> probe.csv
  estimate   run every estimator on a user CSV (y,a,w1..wp) -> estimates.csv

Any config value can be overridden with ``--section.key=value`` flags,
which win over the file. Every run writes ``manifest.json`` into the
output directory, on failure paths too. Exit codes: 0 ok, 2 config
error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone

import pandas as pd

from . import __version__
from .config import (
    apply_overrides,
    build_dgp,
    build_mc_config,
    build_probe_settings,
    build_single_hyper,
    build_stress_settings,
    config_digest,
    load_config,
)
from .crossfit import crossfit_nuisances
from .dgp import Dataset
from .errors import DataError, NaipwError, ValidationError
from .estimators import ESTIMATOR_NAMES, evaluate
from .firststage.train import oracle_nuisances
from .mc import run_study, summarize, write_raw_csv, write_summary_csv
from .probes import orthogonality_probe, positivity_stress

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

WORKERS_ENV = "NAIPW_WORKERS"


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _write_csv(frame: pd.DataFrame, path) -> None:
    frame.to_csv(path, index=False, lineterminator="\n")


class _Manifest:
    """Collects run metadata and guarantees a manifest lands on disk."""

    def __init__(self, outdir: str, command: str):
        self.outdir = outdir
        self.payload = {
            "command": command,
            "tool_version": __version__,
            "started_at": _utcnow(),
            "config_digest": None,
            "seed": None,
            "outputs": [],
            "failure_counts": {},
            "status": "running",
            "error": None,
        }

    def write(self) -> None:
        os.makedirs(self.outdir, exist_ok=True)
        self.payload["finished_at"] = _utcnow()
        path = os.path.join(self.outdir, "manifest.json")
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.payload, handle, indent=2, sort_keys=True, default=str)
            handle.write("\n")


def _load_merged_config(args, manifest: _Manifest) -> dict:
    config = load_config(args.config) if args.config else {}
    merged = apply_overrides(config, args.overrides)
    manifest.payload["config_digest"] = config_digest(merged)
    return merged


def _cmd_simulate(args, manifest: _Manifest) -> int:
    merged = _load_merged_config(args, manifest)
    mc_config = build_mc_config(merged)
    manifest.payload["seed"] = mc_config.base_seed
    records = run_study(mc_config, workers=args.workers)
    summaries = summarize(records, mc_config.dgp.beta_true, cap=mc_config.cap)

    os.makedirs(args.output, exist_ok=True)
    raw_path = os.path.join(args.output, "raw.csv")
    summary_path = os.path.join(args.output, "summary.csv")
    write_raw_csv(records, raw_path)
    write_summary_csv(summaries, mc_config, summary_path)

    failures = sum(1 for r in records if r.failed)
    manifest.payload["outputs"] = ["raw.csv", "summary.csv"]
    manifest.payload["failure_counts"] = {
        "replication_records": failures,
        "flagged_cells": [f"{s.cell_id}:{s.estimator}" for s in summaries if s.flagged],
    }
    print(f"wrote {summary_path} ({len(summaries)} cells, {failures} failed records)")
    return EXIT_OK


def _cmd_stress(args, manifest: _Manifest) -> int:
    merged = _load_merged_config(args, manifest)
    spec = build_dgp(merged)
    settings = build_stress_settings(merged)
    manifest.payload["seed"] = settings.get("seed", spec.seed)
    rows = positivity_stress(spec, **settings)

    frame = pd.DataFrame([dataclasses.asdict(row) for row in rows])
    os.makedirs(args.output, exist_ok=True)
    path = os.path.join(args.output, "stress.csv")
    _write_csv(frame, path)
    manifest.payload["outputs"] = ["stress.csv"]
    print(f"wrote {path} ({len(rows)} scenarios)")
    return EXIT_OK


def _cmd_probe(args, manifest: _Manifest) -> int:
    merged = _load_merged_config(args, manifest)
    spec = build_dgp(merged)
    settings = build_probe_settings(merged)
    manifest.payload["seed"] = settings.get("seed", spec.seed)
    report = orthogonality_probe(spec, **settings)

    frame = pd.DataFrame({
        "eps": report.eps_grid,
        "moment_sr": report.moments["sr"],
        "moment_aipw": report.moments["aipw"],
        "moment_naipw": report.moments["naipw"],
    })
    os.makedirs(args.output, exist_ok=True)
    path = os.path.join(args.output, "probe.csv")
    _write_csv(frame, path)
    manifest.payload["outputs"] = ["probe.csv"]
    manifest.payload["slopes"] = report.slopes
    manifest.payload["direction_norm"] = report.direction_norm
    for name, slope in report.slopes.items():
        print(f"{name:6s} slope {slope:+.6f}   (direction norm {report.direction_norm:.4f})")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_estimate(args, manifest: _Manifest) -> int:
    merged = _load_merged_config(args, manifest)
    data = Dataset.from_csv(args.data)
    data.require_both_arms()

    if args.oracle:
        if data.truth is None:
            raise DataError("--oracle needs g_true,q1_true,q0_true columns in the CSV")
        nuis = oracle_nuisances(data)
    else:
        hyper = build_single_hyper(merged, data.p, seed=args.seed)
        manifest.payload["seed"] = hyper.seed
        nuis = crossfit_nuisances(data, hyper, n_folds=args.folds)

    results = evaluate(data, nuis, names=ESTIMATOR_NAMES)
    rows = [
        {
            "estimator": r.estimator,
            "beta_hat": r.beta_hat,
            "sigma_hat": "" if r.sigma_hat is None else r.sigma_hat,
            "n": r.n_used,
            "scheme": r.scheme or "",
        }
        for r in results
    ]
    os.makedirs(args.output, exist_ok=True)
    path = os.path.join(args.output, "estimates.csv")
    _write_csv(pd.DataFrame(rows), path)
    manifest.payload["outputs"] = ["estimates.csv"]

    print(f"{'estimator':10s} {'beta':>12s} {'se':>12s}")
    for r in results:
        se = "" if r.sigma_hat is None else f"{r.sigma_hat:.6f}"
        print(f"{r.estimator:10s} {r.beta_hat:12.6f} {se:>12s}")
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="naipw",
        description="Doubly robust treatment-effect estimation and simulation harness.",
    )
    parser.add_argument("--version", action="version", version=f"naipw {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        p.add_argument("-c", "--config", required=needs_config, help="YAML config path")
        p.add_argument("-o", "--output", required=True, help="output directory")

    p_sim = sub.add_parser("simulate", help="run a replication study")
    add_common(p_sim)
    p_sim.add_argument("--workers", type=int, default=_default_workers(),
                       help=f"parallel replication workers (default ${WORKERS_ENV} or 1)")
    p_sim.set_defaults(func=_cmd_simulate)

    p_stress = sub.add_parser("stress", help="positivity stress scenarios")
    add_common(p_stress)
    p_stress.set_defaults(func=_cmd_stress)

    p_probe = sub.add_parser("probe", help="orthogonality slope probe")
    add_common(p_probe)
    p_probe.set_defaults(func=_cmd_probe)

    p_est = sub.add_parser("estimate", help="estimate effects from a CSV")
    add_common(p_est, needs_config=False)
    p_est.add_argument("--data", required=True, help="CSV with y,a,w1..wp columns")
    p_est.add_argument("--oracle", action="store_true",
                       help="plug in the g_true,q1_true,q0_true columns instead of fitting")
    p_est.add_argument("--folds", type=int, default=5, help="cross-fitting folds (1 = none)")
    p_est.add_argument("--seed", type=int, default=None, help="training seed override")
    p_est.set_defaults(func=_cmd_estimate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, unknown = parser.parse_known_args(argv)
    manifest = _Manifest(args.output, args.command)
    try:
        for flag in unknown:
            if not (flag.startswith("--") and "=" in flag):
                raise ValidationError(f"unrecognized argument {flag!r}")
        args.overrides = unknown
        code = args.func(args, manifest)
        manifest.payload["status"] = "ok"
        return code
    except ValidationError as exc:
        manifest.payload.update(status="config_error", error=str(exc))
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        manifest.payload.update(status="data_error", error=str(exc))
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NaipwError as exc:
        manifest.payload.update(status="error", error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - manifest must still land
        manifest.payload.update(status="internal_error", error=f"{type(exc).__name__}: {exc}")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    finally:
        try:
            manifest.write()
        except OSError as exc:
            print(f"could not write manifest: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
