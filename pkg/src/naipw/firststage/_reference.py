"""Pure-numpy training kernel, the fallback when the extension is absent.

Semantics match ``_speedups.train_mlp``: mini-batch Adam over a fixed
per-epoch visiting schedule, mean-reduced data loss per batch, and an L1
subgradient on connection weights. Results agree with the compiled kernel
up to floating-point summation order.
"""

from __future__ import annotations

import numpy as np

from ..errors import TrainingDivergedError
from .params import CROSS_ENTROPY, SQUARED_ERROR, Layout, NetworkParams, loss_and_grad


def train_mlp(
    values: np.ndarray,
    adam_m: np.ndarray,
    adam_v: np.ndarray,
    layout: Layout,
    logistic: bool,
    X: np.ndarray,
    y: np.ndarray,
    schedule: np.ndarray,
    batch_size: int,
    lr: float,
    beta1: float,
    beta2: float,
    adam_eps: float,
    l1: float,
    t0: int = 0,
) -> int:
    """Run every epoch in ``schedule``, mutating parameters and Adam state.

    Returns the Adam step counter so training can be resumed.
    """
    params = NetworkParams(layout, logistic, values)
    kind = CROSS_ENTROPY if logistic else SQUARED_ERROR
    n = X.shape[0]
    t = t0
    for epoch in range(schedule.shape[0]):
        order = schedule[epoch]
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            _, grad = loss_and_grad(params, X[idx], y[idx], kind, l1)
            t += 1
            adam_m *= beta1
            adam_m += (1.0 - beta1) * grad
            adam_v *= beta2
            adam_v += (1.0 - beta2) * grad * grad
            m_hat = adam_m / (1.0 - beta1**t)
            v_hat = adam_v / (1.0 - beta2**t)
            values -= lr * m_hat / (np.sqrt(v_hat) + adam_eps)
        if not np.isfinite(values).all():
            raise TrainingDivergedError(
                f"non-finite parameters after epoch {epoch}; the learning rate is likely too high"
            )
    return t
