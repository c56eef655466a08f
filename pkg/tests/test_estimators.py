import numpy as np
import pytest

from conftest import make_problem, random_problem
from naipw.errors import DataError, ValidationError
from naipw.estimators import (
    WeightScheme,
    aipw,
    arm_adjustments,
    evaluate,
    gdr,
    ipw,
    naipw,
    nate,
    nipw,
    nipw_weighted,
    sr,
    unbiasedness_check,
)


# ---------------------------------------------------------------------------
# plug-in estimators
# ---------------------------------------------------------------------------

def test_nate_constant_fits():
    data, nuis = make_problem(a=[1, 1, 0], y=[9, 9, 9], g=[0.5] * 3,
                              q1=[5.0] * 3, q0=[2.0] * 3)
    assert nate(data, nuis).beta_hat == pytest.approx(3.0)


def test_nate_on_d4(d4):
    data, nuis = d4
    assert nate(data, nuis).beta_hat == pytest.approx(1.0)


def test_nate_minimal_arms_null_fit():
    data, nuis = make_problem(a=[1, 0], y=[1.0, 2.0], g=[0.5, 0.5],
                              q1=[7.0, 7.0], q0=[7.0, 7.0])
    assert nate(data, nuis).beta_hat == pytest.approx(0.0)


def test_sr_unit_gap():
    data, nuis = make_problem(a=[1, 0, 0], y=[0, 0, 0], g=[0.5] * 3,
                              q1=[2.0, 3.0, 4.0], q0=[1.0, 2.0, 3.0])
    assert sr(data, nuis).beta_hat == pytest.approx(1.0)


def test_sr_on_d4(d4):
    data, nuis = d4
    assert sr(data, nuis).beta_hat == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# inverse weighting
# ---------------------------------------------------------------------------

def test_ipw_nipw_two_rows_hand_case():
    data, nuis = make_problem(a=[1, 0], y=[1.0, 1.0], g=[0.5, 0.5],
                              q1=[0.0] * 2, q0=[0.0] * 2)
    # (1/2)(1/0.5 - 1/0.5) = 0; normalized arms both average to 1
    assert ipw(data, nuis).beta_hat == pytest.approx(0.0)
    assert nipw(data, nuis).beta_hat == pytest.approx(0.0)


def test_constant_outcome_cancels():
    a = np.array([1.0, 1.0, 0.0, 0.0])
    data, nuis = make_problem(a=a, y=[3.0] * 4, g=[0.5] * 4, q1=[0.0] * 4, q0=[0.0] * 4)
    assert ipw(data, nuis).beta_hat == pytest.approx(0.0)
    assert nipw(data, nuis).beta_hat == pytest.approx(0.0)


def test_nipw_weight_rescaling_invariance():
    rng = np.random.default_rng(0)
    data, nuis = random_problem(rng)
    w1 = 1.0 / nuis.g_hat
    w0 = 1.0 / (1.0 - nuis.g_hat)
    base = nipw_weighted(data.A, data.Y, w1, w0)
    assert nipw_weighted(data.A, data.Y, 10.0 * w1, w0) == pytest.approx(base, rel=1e-14)
    assert nipw_weighted(data.A, data.Y, w1, 0.1 * w0) == pytest.approx(base, rel=1e-14)
    assert nipw(data, nuis).beta_hat == pytest.approx(base)


def test_empty_arm_rejected():
    with pytest.raises(DataError):
        data, nuis = make_problem(a=[1, 1], y=[1.0, 2.0], g=[0.5, 0.5],
                                  q1=[0.0] * 2, q0=[0.0] * 2)
        ipw(data, nuis)


# ---------------------------------------------------------------------------
# doubly robust family
# ---------------------------------------------------------------------------

def test_d4_both_schemes_give_one(d4):
    data, nuis = d4
    assert aipw(data, nuis).beta_hat == pytest.approx(1.0, abs=1e-12)
    assert naipw(data, nuis).beta_hat == pytest.approx(1.0, abs=1e-12)


def test_dx_blowup_contrast(dx):
    data, nuis = dx
    # single treated unit: residual 1 weighted by 1e6, averaged over n=3
    assert aipw(data, nuis, with_variance=False).beta_hat == pytest.approx(1e6 / 3.0, rel=1e-9)
    assert naipw(data, nuis, with_variance=False).beta_hat == pytest.approx(1.0, abs=1e-9)


def test_zero_residuals_collapse_to_sr():
    rng = np.random.default_rng(1)
    a = (rng.random(40) < 0.5).astype(float)
    a[:2] = [1, 0]
    q1 = rng.normal(size=40)
    q0 = rng.normal(size=40)
    y = np.where(a > 0, q1, q0)
    data, nuis = make_problem(a=a, y=y, g=rng.uniform(0.2, 0.8, 40), q1=q1, q0=q0)
    target = sr(data, nuis).beta_hat
    for variant in ("aipw", "naipw", "hybrid"):
        result = gdr(data, nuis, WeightScheme(variant), with_variance=False)
        assert result.beta_hat == pytest.approx(target, abs=1e-12)


def test_scheme_coincidence_at_constant_treated_share():
    rng = np.random.default_rng(2)
    for _ in range(20):
        data, nuis = random_problem(rng)
        share = data.A.mean()
        flat = nuis.replace_g(np.full(data.n, share))
        a_res = aipw(data, flat, with_variance=False).beta_hat
        n_res = naipw(data, flat, with_variance=False).beta_hat
        assert a_res == pytest.approx(n_res, rel=1e-12)


def test_bounded_adjustment_under_extreme_weights():
    rng = np.random.default_rng(3)
    for _ in range(30):
        data, nuis = random_problem(rng)
        exponents = rng.uniform(-12, -0.1, data.n)
        wild = nuis.replace_g(np.sort(10.0**exponents))
        adj1, adj0 = arm_adjustments(data, wild, WeightScheme("naipw"))
        treated = data.A > 0
        assert abs(adj1) <= np.abs(data.Y[treated] - wild.q1_hat[treated]).max() + 1e-12
        assert abs(adj0) <= np.abs(data.Y[~treated] - wild.q0_hat[~treated]).max() + 1e-12


def test_monotone_blowup_contrast():
    n = 200
    a = np.zeros(n)
    a[:40] = 1.0
    rng = np.random.default_rng(4)
    y = rng.normal(0.0, 1.0, n)
    q1 = np.zeros(n)
    q0 = np.zeros(n)
    g = np.full(n, 40 / n)
    data, nuis = make_problem(a=a, y=y, g=g, q1=q1, q0=q0)
    q1_mean = 0.0
    previous = None
    for s in (4.0, 8.0, 12.0):
        g_s = g.copy()
        g_s[0] = 10.0**-s
        stressed = nuis.replace_g(g_s)
        aipw_adj1, _ = arm_adjustments(data, stressed, WeightScheme("aipw"))
        naipw_adj1, _ = arm_adjustments(data, stressed, WeightScheme("naipw"))
        # unnormalized adjustment is (10^s y_0 + sum of moderate terms) / n
        tail = np.sum(y[1:40] / g[1:40])
        assert aipw_adj1 == pytest.approx((10.0**s * y[0] + tail) / n, rel=1e-9)
        if previous is not None:
            assert abs(aipw_adj1) > 1e3 * abs(previous)
        previous = aipw_adj1
        if s >= 8:
            limit = y[0] - q1[0] + q1_mean
            assert naipw_adj1 + q1_mean == pytest.approx(limit, rel=0.01)


def test_gdr_attaches_variance_only_where_published(d4):
    data, nuis = d4
    assert aipw(data, nuis).sigma_hat == pytest.approx(1.0)
    assert naipw(data, nuis).sigma_hat == pytest.approx(1.0)
    hybrid = gdr(data, nuis, WeightScheme("hybrid"))
    assert hybrid.sigma_hat is None
    assert hybrid.metadata["experimental"]
    for name in ("nate", "sr", "ipw", "nipw"):
        assert evaluate(data, nuis, names=[name])[0].sigma_hat is None


def test_hybrid_mixes_weights_by_threshold(dx):
    data, nuis = dx
    # g = 1e-6 < 1/3, so the treated unit takes the normalized weight
    hybrid = gdr(data, nuis, WeightScheme("hybrid"), with_variance=False)
    normalized = naipw(data, nuis, with_variance=False)
    assert hybrid.beta_hat == pytest.approx(normalized.beta_hat, abs=1e-9)
    # with moderate propensities the hybrid is plain inverse weighting
    rng = np.random.default_rng(5)
    data2, nuis2 = random_problem(rng)
    h = gdr(data2, nuis2, WeightScheme("hybrid"), with_variance=False)
    a = aipw(data2, nuis2, with_variance=False)
    assert h.beta_hat == pytest.approx(a.beta_hat, rel=1e-12)


def test_unknown_scheme_and_estimator_rejected(d4):
    data, nuis = d4
    with pytest.raises(ValidationError):
        WeightScheme("bogus")
    with pytest.raises(ValidationError):
        evaluate(data, nuis, names=["bogus"])


def test_propensity_bounds_enforced():
    with pytest.raises((DataError, ValidationError)):
        make_problem(a=[1, 0], y=[1.0, 0.0], g=[1.0, 0.5], q1=[0.0] * 2, q0=[0.0] * 2)


# ---------------------------------------------------------------------------
# unbiasedness check
# ---------------------------------------------------------------------------

def test_naipw_self_normalization_identity():
    rng = np.random.default_rng(6)
    for _ in range(10):
        data, nuis = random_problem(rng)
        report = unbiasedness_check(WeightScheme("naipw"), data, nuis)
        assert report["mean_a_over_h1"] == pytest.approx(1.0, abs=1e-12)
        assert report["mean_1ma_over_h0"] == pytest.approx(1.0, abs=1e-12)


def test_aipw_moment_vanishes_under_true_propensity():
    rng = np.random.default_rng(7)
    n = 50000
    g = rng.uniform(0.2, 0.8, n)
    a = (rng.random(n) < g).astype(float)
    data, nuis = make_problem(a=a, y=np.zeros(n), g=g, q1=np.zeros(n), q0=np.zeros(n))
    report = unbiasedness_check(WeightScheme("aipw"), data, nuis)
    assert abs(report["mean_a_minus_h1"]) < 0.01
    assert abs(report["mean_1ma_minus_h0"]) < 0.01


def test_aipw_moment_detects_miscalibration():
    a = np.array([1.0, 0.0] * 10)
    data, nuis = make_problem(a=a, y=np.zeros(20), g=np.full(20, 0.9),
                              q1=np.zeros(20), q0=np.zeros(20))
    report = unbiasedness_check(WeightScheme("aipw"), data, nuis)
    assert report["mean_a_minus_h1"] == pytest.approx(-0.4)
