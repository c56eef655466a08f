"""Network representation for the dual first-stage models.

Both nuisance models are multilayer perceptrons with ReLU hidden layers
plus a direct linear path from the inputs to the scalar output. The
outcome network consumes (A, W) and uses the raw output; the propensity
network consumes W and pushes the output through a logistic head. All
parameters live in one flat float64 vector so the training kernels can
stay allocation-free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit

from ..errors import ValidationError

ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

PARAMS_FORMAT_VERSION = 1

SQUARED_ERROR = "squared_error"
CROSS_ENTROPY = "cross_entropy"


@dataclass(frozen=True)
class NetHyper:
    """Training hyperparameters shared by the outcome and propensity nets."""

    hidden_widths: tuple[int, ...]
    l1_outcome: float = 0.0
    l1_propensity: float = 0.0
    learning_rate: float = 0.01
    momentum_beta1: float = 0.95
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if any(w < 1 for w in self.hidden_widths):
            raise ValidationError("hidden widths must be positive")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if not 0 <= self.momentum_beta1 < 1:
            raise ValidationError("momentum_beta1 must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be at least 1")
        if self.l1_outcome < 0 or self.l1_propensity < 0:
            raise ValidationError("l1 penalties must be nonnegative")

    @classmethod
    def default_for(cls, p: int, **overrides) -> "NetHyper":
        """Baseline setting: three hidden layers of width p, batch 3p."""
        base = dict(
            hidden_widths=(p, p, p),
            learning_rate=0.01,
            momentum_beta1=0.95,
            epochs=200,
            batch_size=3 * p,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return {
            "hidden_widths": list(self.hidden_widths),
            "l1_outcome": self.l1_outcome,
            "l1_propensity": self.l1_propensity,
            "learning_rate": self.learning_rate,
            "momentum_beta1": self.momentum_beta1,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "NetHyper":
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown hyper keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "hidden_widths" in kwargs:
            kwargs["hidden_widths"] = tuple(kwargs["hidden_widths"])
        return cls(**kwargs)


@dataclass(frozen=True)
class Layout:
    """Offsets of each parameter segment inside the flat vector."""

    input_dim: int
    hidden_widths: tuple[int, ...]
    size: int
    w_offsets: tuple[int, ...]
    b_offsets: tuple[int, ...]
    head_offset: int
    skip_offset: int
    bias_offset: int

    def weight_mask(self) -> NDArray:
        """Boolean mask of connection parameters (everything except biases)."""
        mask = np.zeros(self.size, dtype=bool)
        prev = self.input_dim
        for off, w in zip(self.w_offsets, self.hidden_widths):
            mask[off:off + w * prev] = True
            prev = w
        if self.hidden_widths:
            mask[self.head_offset:self.head_offset + self.hidden_widths[-1]] = True
        mask[self.skip_offset:self.skip_offset + self.input_dim] = True
        return mask


def make_layout(input_dim: int, hidden_widths: tuple[int, ...]) -> Layout:
    if input_dim < 1:
        raise ValidationError("input_dim must be positive")
    w_offsets, b_offsets = [], []
    offset = 0
    prev = input_dim
    for w in hidden_widths:
        w_offsets.append(offset)
        offset += w * prev
        b_offsets.append(offset)
        offset += w
        prev = w
    head_offset = offset
    if hidden_widths:
        offset += hidden_widths[-1]
    skip_offset = offset
    offset += input_dim
    bias_offset = offset
    offset += 1
    return Layout(
        input_dim=input_dim,
        hidden_widths=tuple(hidden_widths),
        size=offset,
        w_offsets=tuple(w_offsets),
        b_offsets=tuple(b_offsets),
        head_offset=head_offset,
        skip_offset=skip_offset,
        bias_offset=bias_offset,
    )


@dataclass
class NetworkParams:
    """One trained (or initialized) network: layout plus flat parameters."""

    layout: Layout
    logistic_head: bool
    values: NDArray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != (self.layout.size,):
            raise ValidationError(
                f"parameter vector has size {self.values.size}, layout wants {self.layout.size}"
            )

    @property
    def input_dim(self) -> int:
        return self.layout.input_dim

    def hidden_layer(self, idx: int) -> tuple[NDArray, NDArray]:
        """Views of (weights, biases) for hidden layer ``idx``."""
        lay = self.layout
        prev = lay.input_dim if idx == 0 else lay.hidden_widths[idx - 1]
        w = lay.hidden_widths[idx]
        W = self.values[lay.w_offsets[idx]:lay.w_offsets[idx] + w * prev].reshape(w, prev)
        b = self.values[lay.b_offsets[idx]:lay.b_offsets[idx] + w]
        return W, b

    def head(self) -> tuple[Optional[NDArray], NDArray, float]:
        """Views of (hidden head, linear skip, output bias)."""
        lay = self.layout
        gamma = None
        if lay.hidden_widths:
            gamma = self.values[lay.head_offset:lay.head_offset + lay.hidden_widths[-1]]
        skip = self.values[lay.skip_offset:lay.skip_offset + lay.input_dim]
        bias = float(self.values[lay.bias_offset])
        return gamma, skip, bias

    def raw_output(self, X: NDArray) -> NDArray:
        """Pre-head output: skip-path plus deep-path contributions."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        act = X
        for idx in range(len(self.layout.hidden_widths)):
            W, b = self.hidden_layer(idx)
            act = np.maximum(act @ W.T + b, 0.0)
        gamma, skip, bias = self.head()
        out = X @ skip + bias
        if gamma is not None:
            out = out + act @ gamma
        return out

    def predict(self, X: NDArray) -> NDArray:
        out = self.raw_output(X)
        return expit(out) if self.logistic_head else out

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.layout, self.logistic_head, self.values.copy())

    def to_blob(self) -> dict:
        """Portable JSON-ready dump; floats survive the json round trip exactly."""
        return {
            "format_version": PARAMS_FORMAT_VERSION,
            "input_dim": self.layout.input_dim,
            "hidden_widths": list(self.layout.hidden_widths),
            "logistic_head": self.logistic_head,
            "values": self.values.tolist(),
        }

    @classmethod
    def from_blob(cls, blob: dict) -> "NetworkParams":
        version = blob.get("format_version")
        if version != PARAMS_FORMAT_VERSION:
            raise ValidationError(f"unsupported parameter blob version {version!r}")
        layout = make_layout(int(blob["input_dim"]), tuple(blob["hidden_widths"]))
        return cls(layout, bool(blob["logistic_head"]), np.asarray(blob["values"], dtype=float))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_blob(), handle)

    @classmethod
    def load(cls, path) -> "NetworkParams":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_blob(json.load(handle))


def init_params(
    input_dim: int,
    hidden_widths: tuple[int, ...],
    logistic_head: bool,
    rng: np.random.Generator,
) -> NetworkParams:
    """He-style uniform fan-in initialization; biases start at zero."""
    layout = make_layout(input_dim, tuple(hidden_widths))
    values = np.zeros(layout.size)
    params = NetworkParams(layout, logistic_head, values)
    prev = input_dim
    for idx, w in enumerate(layout.hidden_widths):
        limit = np.sqrt(6.0 / prev)
        W, _ = params.hidden_layer(idx)
        W[:] = rng.uniform(-limit, limit, size=W.shape)
        prev = w
    gamma, skip, _ = params.head()
    if gamma is not None:
        gamma[:] = rng.uniform(-1, 1, size=gamma.shape) * np.sqrt(6.0 / layout.hidden_widths[-1])
    skip[:] = rng.uniform(-1, 1, size=skip.shape) * np.sqrt(6.0 / input_dim)
    return params


def loss_and_grad(
    params: NetworkParams,
    X: NDArray,
    y: NDArray,
    kind: str,
    l1: float = 0.0,
) -> tuple[float, NDArray]:
    """Mean-reduced loss and its analytic gradient over one batch.

    The penalty term is ``l1 * sum(|w|)`` over connection weights (biases
    are exempt); its subgradient uses sign(0) = 0, matching the training
    kernels.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    lay = params.layout

    acts = [X]
    for idx in range(len(lay.hidden_widths)):
        W, b = params.hidden_layer(idx)
        acts.append(np.maximum(acts[-1] @ W.T + b, 0.0))
    gamma, skip, bias = params.head()
    out = X @ skip + bias
    if gamma is not None:
        out = out + acts[-1] @ gamma

    if kind == SQUARED_ERROR:
        resid = out - y
        data_loss = float(np.mean(resid**2))
        dout = 2.0 * resid / n
    elif kind == CROSS_ENTROPY:
        # softplus(out) - y*out is the stable negative Bernoulli log-likelihood
        data_loss = float(np.mean(np.logaddexp(0.0, out) - y * out))
        dout = (expit(out) - y) / n
    else:
        raise ValidationError(f"unknown loss kind {kind!r}")

    grad = np.zeros(lay.size)
    grad[lay.bias_offset] = dout.sum()
    grad[lay.skip_offset:lay.skip_offset + lay.input_dim] = X.T @ dout
    if gamma is not None:
        grad[lay.head_offset:lay.head_offset + lay.hidden_widths[-1]] = acts[-1].T @ dout
        delta = (dout[:, None] * gamma[None, :]) * (acts[-1] > 0)
        for idx in range(len(lay.hidden_widths) - 1, -1, -1):
            W, _ = params.hidden_layer(idx)
            w = lay.hidden_widths[idx]
            prev = lay.input_dim if idx == 0 else lay.hidden_widths[idx - 1]
            grad[lay.w_offsets[idx]:lay.w_offsets[idx] + w * prev] = (delta.T @ acts[idx]).ravel()
            grad[lay.b_offsets[idx]:lay.b_offsets[idx] + w] = delta.sum(axis=0)
            if idx > 0:
                delta = (delta @ W) * (acts[idx] > 0)

    loss = data_loss
    if l1 > 0:
        mask = lay.weight_mask()
        loss += l1 * float(np.abs(params.values[mask]).sum())
        grad[mask] += l1 * np.sign(params.values[mask])
    return loss, grad
