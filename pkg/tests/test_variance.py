import numpy as np
import pytest

from conftest import make_problem, random_problem
from naipw.dgp import DgpSpec, gen_dataset
from naipw.errors import DataError
from naipw.estimators import naipw
from naipw.firststage.train import NuisanceEstimates, oracle_nuisances
from naipw.variance import (
    remainder_diagnostic,
    sandwich_oracle,
    score_components,
    truncated_sandwich,
    var_aipw,
    var_naipw,
)


# ---------------------------------------------------------------------------
# closed-form variance values
# ---------------------------------------------------------------------------

def test_var_aipw_on_d4_is_one(d4):
    data, nuis = d4
    # scores are (+2, -2, -2, +2); (1/16) * 16 = 1
    assert var_aipw(data, nuis) == pytest.approx(1.0, abs=1e-12)


def test_var_naipw_on_d4_is_one(d4):
    data, nuis = d4
    assert var_naipw(data, nuis) == pytest.approx(1.0, abs=1e-12)


def test_zero_residuals_and_constant_gap_give_zero_variance():
    a = np.array([1.0, 0.0, 1.0, 0.0])
    q1 = np.array([2.0, 3.0, 4.0, 5.0])
    q0 = q1 - 2.0
    y = np.where(a > 0, q1, q0)
    data, nuis = make_problem(a=a, y=y, g=[0.4, 0.6, 0.5, 0.5], q1=q1, q0=q0)
    assert var_aipw(data, nuis) == pytest.approx(0.0, abs=1e-14)
    assert var_naipw(data, nuis) == pytest.approx(0.0, abs=1e-14)


def test_dx_variance_blowup_contrast(dx):
    data, nuis = dx
    # inverse weighting squares the 1e6 factor: order 1e10
    assert var_aipw(data, nuis) > 1e10
    blown = var_naipw(data, nuis)
    beta = naipw(data, nuis, with_variance=False).beta_hat
    sr_hat = 0.0
    per_term_bound = (1.0 + abs(sr_hat - beta)) ** 2
    assert blown <= 3 * per_term_bound


# ---------------------------------------------------------------------------
# estimating equations and the sandwich
# ---------------------------------------------------------------------------

def test_score_sums_vanish_at_fitted_triple():
    rng = np.random.default_rng(0)
    for _ in range(25):
        data, nuis = random_problem(rng, n=rng.integers(10, 300))
        comps = score_components(data, nuis)
        scale = 1e-10 * data.n
        assert abs(comps.phi.sum()) < scale * max(1.0, np.abs(comps.phi).max())
        assert abs(comps.eta.sum()) < scale
        assert abs(comps.omega.sum()) < scale


def test_truncated_sandwich_equals_var_naipw():
    rng = np.random.default_rng(1)
    for _ in range(50):
        data, nuis = random_problem(rng, n=rng.integers(8, 400))
        a = truncated_sandwich(data, nuis)
        b = var_naipw(data, nuis)
        assert a == pytest.approx(b, rel=1e-12)


def test_full_sandwich_close_on_d4(d4):
    data, nuis = d4
    estimate = sandwich_oracle(data, nuis)
    assert estimate.variance == pytest.approx(var_naipw(data, nuis), rel=0.15)


def test_full_sandwich_within_five_percent_at_large_n():
    spec = DgpSpec(n=4000, block_sizes=(8, 8, 8, 8), seed=8)
    data = gen_dataset(spec)
    nuis = oracle_nuisances(data)
    full = sandwich_oracle(data, nuis).variance
    plain = var_naipw(data, nuis)
    assert full == pytest.approx(plain, rel=0.05)


def test_bread_upper_triangular_with_expected_corner():
    rng = np.random.default_rng(2)
    data, nuis = random_problem(rng, n=120)
    estimate = sandwich_oracle(data, nuis)
    assert estimate.bread[1, 0] == 0 and estimate.bread[2, 0] == 0 and estimate.bread[2, 1] == 0
    comps = score_components(data, nuis)
    assert estimate.bread[0, 0] == pytest.approx(
        comps.gamma_hat * comps.lambda_hat / data.n, rel=1e-12
    )
    assert estimate.bread[1, 1] == pytest.approx(1.0 / data.n)
    assert estimate.bread[2, 2] == pytest.approx(1.0 / data.n)


def test_meat_is_positive_semidefinite():
    rng = np.random.default_rng(3)
    for _ in range(25):
        data, nuis = random_problem(rng, n=rng.integers(8, 200))
        estimate = sandwich_oracle(data, nuis)
        eigenvalues = np.linalg.eigvalsh(estimate.meat)
        assert eigenvalues.min() >= -1e-10 * max(1.0, eigenvalues.max())


def test_sandwich_requires_both_arms():
    a = np.zeros(6)
    data, nuis = make_problem(a=a, y=np.ones(6), g=np.full(6, 0.4),
                              q1=np.zeros(6), q0=np.zeros(6))
    with pytest.raises(DataError):
        sandwich_oracle(data, nuis)


# ---------------------------------------------------------------------------
# remainder diagnostic
# ---------------------------------------------------------------------------

def test_remainder_zero_under_oracle():
    data = gen_dataset(DgpSpec(n=500, block_sizes=(8, 8, 8, 8), seed=9))
    nuis = oracle_nuisances(data)
    b1, b0 = remainder_diagnostic(data, nuis)
    assert b1 == pytest.approx(0.0, abs=1e-12)
    assert b0 == pytest.approx(0.0, abs=1e-12)


def test_remainder_first_factor_zero_kills_bound():
    data = gen_dataset(DgpSpec(n=500, block_sizes=(8, 8, 8, 8), seed=10))
    truth = data.truth
    nuis = NuisanceEstimates(
        q1_hat=truth.q1 + 5.0,  # badly wrong outcome model
        q0_hat=truth.q0 - 5.0,
        g_hat=truth.g,          # exact weights for the plain scheme
    )
    b1, b0 = remainder_diagnostic(data, nuis, scheme="aipw")
    assert b1 == pytest.approx(0.0, abs=1e-12)
    assert b0 == pytest.approx(0.0, abs=1e-12)
    b1n, b0n = remainder_diagnostic(data, nuis, scheme="naipw")
    assert b1n > 0 and b0n > 0


def test_remainder_shrinks_with_sample_size():
    bounds = []
    for n in (500, 2000, 8000):
        spec = DgpSpec(n=n, block_sizes=(8, 8, 8, 8), seed=11)
        data = gen_dataset(spec)
        truth = data.truth
        rng = np.random.default_rng(n)
        # misspecification that improves as 1/sqrt(n) in both nuisances
        scale = 3.0 / np.sqrt(n)
        g_hat = np.clip(truth.g + scale * np.sin(data.W[:, 0]) * 0.4, 1e-4, 1 - 1e-4)
        nuis = NuisanceEstimates(
            q1_hat=truth.q1 + scale * (1.0 + data.W[:, 1]),
            q0_hat=truth.q0 + scale * (1.0 - data.W[:, 2]),
            g_hat=g_hat,
        )
        b1, b0 = remainder_diagnostic(data, nuis)
        bounds.append(b1 + b0)
    assert bounds[0] > bounds[1] > bounds[2]


def test_remainder_requires_truth():
    data, nuis = make_problem(a=[1, 0], y=[1.0, 0.0], g=[0.5, 0.5],
                              q1=[0.0] * 2, q0=[0.0] * 2)
    with pytest.raises(DataError):
        remainder_diagnostic(data, nuis)
