"""Training-kernel dispatch: compiled extension when available, numpy otherwise.

The choice is made once at import time. Set ``NAIPW_BACKEND=python`` or
``NAIPW_BACKEND=compiled`` to force a side; the per-call ``backend=``
argument on the training entry points takes precedence over both.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import TrainingDivergedError, ValidationError
from . import _reference
from .params import Layout

try:
    from . import _speedups
except ImportError:
    _speedups = None

HAVE_COMPILED = _speedups is not None


def _compiled_train(values, adam_m, adam_v, layout: Layout, logistic, X, y,
                    schedule, batch_size, lr, beta1, beta2, adam_eps, l1, t0=0):
    widths = np.asarray(layout.hidden_widths, dtype=np.int64)
    w_off = np.asarray(layout.w_offsets, dtype=np.int64)
    b_off = np.asarray(layout.b_offsets, dtype=np.int64)
    mask = np.ascontiguousarray(layout.weight_mask(), dtype=np.uint8)
    status = _speedups.train_mlp(
        values, adam_m, adam_v,
        layout.input_dim, widths, w_off, b_off,
        layout.head_offset, layout.skip_offset, layout.bias_offset,
        1 if logistic else 0,
        X, y, schedule, batch_size,
        lr, beta1, beta2, adam_eps, l1, mask, t0,
    )
    if status < 0:
        raise TrainingDivergedError(
            f"non-finite parameters after epoch {-status - 1}; the learning rate is likely too high"
        )
    return status


_BACKENDS = {"python": _reference.train_mlp}
if HAVE_COMPILED:
    _BACKENDS["compiled"] = _compiled_train

_env_choice = os.environ.get("NAIPW_BACKEND", "").strip().lower()
if _env_choice and _env_choice not in ("python", "compiled"):
    raise ValidationError(f"NAIPW_BACKEND must be 'python' or 'compiled', got {_env_choice!r}")
if _env_choice == "compiled" and not HAVE_COMPILED:
    raise ImportError("NAIPW_BACKEND=compiled but the extension is not built")

DEFAULT_BACKEND = _env_choice or ("compiled" if HAVE_COMPILED else "python")


def active_backend() -> str:
    return DEFAULT_BACKEND


def get_trainer(name: str | None = None):
    """Resolve a kernel by name; ``None`` means the import-time default."""
    key = name or DEFAULT_BACKEND
    if key not in _BACKENDS:
        raise ValidationError(
            f"unknown backend {key!r}; available: {sorted(_BACKENDS)}"
        )
    return _BACKENDS[key]
