import json

import numpy as np
import pandas as pd
import pytest
import yaml

from naipw.cli import main
from naipw.dgp import DgpSpec, gen_dataset

SMOKE = {
    "dgp": {
        "n": 150, "block_sizes": [2, 2, 2, 2], "rho": 0.5,
        "beta_true": 1.0, "seed": 1,
    },
    "hyper_grid": [{
        "hidden_widths": [4], "l1_outcome": 0.01, "l1_propensity": 0.01,
        "learning_rate": 0.01, "epochs": 5, "batch_size": 48, "seed": 7,
    }],
    "mc": {"m": 2, "base_seed": 99, "estimators": ["sr", "aipw", "naipw"], "n_folds": 1},
    "stress": {"s_grid": [0, 8], "n": 400, "seed": 3},
    "probe": {"n": 3000, "seed": 5},
}


@pytest.fixture
def smoke_config(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(SMOKE))
    return path


def read_manifest(outdir):
    with open(outdir / "manifest.json", encoding="utf-8") as handle:
        return json.load(handle)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_smoke_outputs_and_identity(smoke_config, tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "-c", str(smoke_config), "-o", str(out)]) == 0
    summary = pd.read_csv(out / "summary.csv")
    assert list(summary.columns) == [
        "cell_id", "estimator", "scheme", "n", "p", "l1", "widths",
        "bias", "mc_std", "rmse", "mean_se", "failures",
    ]
    for _, row in summary.iterrows():
        assert row["rmse"] ** 2 == pytest.approx(row["bias"] ** 2 + row["mc_std"] ** 2, rel=1e-9)
    raw = pd.read_csv(out / "raw.csv")
    assert len(raw) == 2 * 3
    manifest = read_manifest(out)
    assert manifest["status"] == "ok"
    assert manifest["outputs"] == ["raw.csv", "summary.csv"]
    assert manifest["seed"] == 99


def test_simulate_byte_identical_reruns(smoke_config, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "-c", str(smoke_config), "-o", str(out1)]) == 0
    assert main(["simulate", "-c", str(smoke_config), "-o", str(out2), "--workers", "2"]) == 0
    assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()
    assert (out1 / "raw.csv").read_bytes() == (out2 / "raw.csv").read_bytes()


def test_simulate_flag_overrides_win(smoke_config, tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "-c", str(smoke_config), "-o", str(out), "--mc.m=1"]) == 0
    raw = pd.read_csv(out / "raw.csv")
    assert raw["rep"].nunique() == 1
    manifest = read_manifest(out)
    base = main(["simulate", "-c", str(smoke_config), "-o", str(tmp_path / "base")])
    assert base == 0
    assert manifest["config_digest"] != read_manifest(tmp_path / "base")["config_digest"]


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def test_estimate_oracle_round_trip(tmp_path, capsys):
    data = gen_dataset(DgpSpec(n=200, block_sizes=(2, 2, 2, 2), seed=4))
    csv_path = tmp_path / "data.csv"
    data.to_csv(csv_path)
    out = tmp_path / "est"
    assert main(["estimate", "--data", str(csv_path), "-o", str(out), "--oracle"]) == 0
    printed = capsys.readouterr().out
    frame = pd.read_csv(out / "estimates.csv")
    sr_row = frame[frame["estimator"] == "sr"].iloc[0]
    assert sr_row["beta_hat"] == pytest.approx(1.0, abs=1e-12)
    assert "sr" in printed
    naipw_row = frame[frame["estimator"] == "naipw"].iloc[0]
    assert np.isfinite(naipw_row["sigma_hat"])


def test_estimate_trains_when_not_oracle(tmp_path, smoke_config):
    data = gen_dataset(DgpSpec(n=150, block_sizes=(2, 2, 2, 2), seed=4))
    csv_path = tmp_path / "data.csv"
    data.to_csv(csv_path, include_truth=False)
    out = tmp_path / "est"
    code = main([
        "estimate", "--data", str(csv_path), "-o", str(out),
        "-c", str(smoke_config), "--folds", "2", "--seed", "3",
    ])
    assert code == 0
    frame = pd.read_csv(out / "estimates.csv")
    assert set(frame["estimator"]) == {"nate", "sr", "ipw", "nipw", "aipw", "naipw", "hybrid"}


def test_estimate_oracle_without_truth_is_data_error(tmp_path):
    data = gen_dataset(DgpSpec(n=60, block_sizes=(2, 2, 2, 2), seed=4))
    csv_path = tmp_path / "data.csv"
    data.to_csv(csv_path, include_truth=False)
    out = tmp_path / "est"
    assert main(["estimate", "--data", str(csv_path), "-o", str(out), "--oracle"]) == 3
    assert read_manifest(out)["status"] == "data_error"


def test_estimate_missing_column_exit_code(tmp_path):
    csv_path = tmp_path / "bad.csv"
    csv_path.write_text("y,w1\n1.0,0.5\n")
    out = tmp_path / "est"
    assert main(["estimate", "--data", str(csv_path), "-o", str(out)]) == 3


def test_estimate_non_binary_treatment_exit_code(tmp_path):
    csv_path = tmp_path / "bad.csv"
    csv_path.write_text("y,a,w1\n1.0,0.3,0.5\n2.0,1,0.6\n")
    out = tmp_path / "est"
    assert main(["estimate", "--data", str(csv_path), "-o", str(out)]) == 3


# ---------------------------------------------------------------------------
# stress and probe
# ---------------------------------------------------------------------------

def test_stress_command_matches_closed_form(smoke_config, tmp_path):
    out = tmp_path / "stress"
    assert main(["stress", "-c", str(smoke_config), "-o", str(out)]) == 0
    frame = pd.read_csv(out / "stress.csv")
    row = frame[frame["s"] == 8.0].iloc[0]
    assert row["naipw_arm1"] == pytest.approx(row["closed_form_one_unit"], rel=0.01)
    assert bool(row["convex_bound_ok"])


def test_probe_command_reports_slopes(smoke_config, tmp_path):
    out = tmp_path / "probe"
    assert main(["probe", "-c", str(smoke_config), "-o", str(out)]) == 0
    frame = pd.read_csv(out / "probe.csv")
    assert list(frame.columns) == ["eps", "moment_sr", "moment_aipw", "moment_naipw"]
    manifest = read_manifest(out)
    assert set(manifest["slopes"]) == {"sr", "aipw", "naipw"}
    assert abs(manifest["slopes"]["sr"]) > abs(manifest["slopes"]["naipw"])


# ---------------------------------------------------------------------------
# error handling
# ---------------------------------------------------------------------------

def test_missing_config_is_config_error(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "-c", str(tmp_path / "nope.yaml"), "-o", str(out)]) == 2
    assert read_manifest(out)["status"] == "config_error"


def test_unparsable_config_is_config_error(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("dgp: [unclosed\n")
    out = tmp_path / "run"
    assert main(["simulate", "-c", str(bad), "-o", str(out)]) == 2


def test_invalid_override_is_config_error(smoke_config, tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "-c", str(smoke_config), "-o", str(out), "--frobnicate"]) == 2


def test_invalid_config_values_are_config_errors(smoke_config, tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "-c", str(smoke_config), "-o", str(out), "--dgp.rho=1.5"]) == 2
    manifest = read_manifest(out)
    assert manifest["status"] == "config_error"
    assert "rho" in manifest["error"]
