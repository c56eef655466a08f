import numpy as np
import pytest

from naipw.dgp import Dataset
from naipw.firststage.train import NuisanceEstimates


def make_problem(a, y, g, q1, q0):
    """Dataset plus nuisances from raw vectors (covariates are dummies)."""
    a = np.asarray(a, dtype=float)
    data = Dataset(W=np.zeros((len(a), 1)), A=a, Y=np.asarray(y, dtype=float))
    nuis = NuisanceEstimates(
        q1_hat=np.asarray(q1, dtype=float),
        q0_hat=np.asarray(q0, dtype=float),
        g_hat=np.asarray(g, dtype=float),
    )
    return data, nuis


def random_problem(rng, n=60):
    """Generic random estimation problem with interior propensities."""
    a = (rng.random(n) < 0.5).astype(float)
    while a.sum() in (0, n):
        a = (rng.random(n) < 0.5).astype(float)
    y = rng.normal(1.0, 2.0, n)
    g = rng.uniform(0.05, 0.95, n)
    q1 = rng.normal(1.0, 1.0, n)
    q0 = rng.normal(0.0, 1.0, n)
    return make_problem(a, y, g, q1, q0)


@pytest.fixture
def d4():
    """Four-row hand case: A=(1,1,0,0), Y=(2,0,1,-1), g=0.5, q1=1, q0=0."""
    return make_problem(
        a=[1, 1, 0, 0],
        y=[2.0, 0.0, 1.0, -1.0],
        g=[0.5, 0.5, 0.5, 0.5],
        q1=[1.0, 1.0, 1.0, 1.0],
        q0=[0.0, 0.0, 0.0, 0.0],
    )


@pytest.fixture
def dx():
    """Three-row blow-up case: one treated unit with g = 1e-6."""
    return make_problem(
        a=[1, 0, 0],
        y=[1.0, 0.0, 0.0],
        g=[1e-6, 0.5, 0.5],
        q1=[0.0, 0.0, 0.0],
        q0=[0.0, 0.0, 0.0],
    )
