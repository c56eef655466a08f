"""Synthetic data generation for the simulation studies.

Covariates come in four mutually independent blocks (confounders,
instruments, outcome predictors, irrelevant noise), each block Gaussian
with AR(1) correlation rho^|j-k|. Treatment is assigned by a logistic
model whose index mixes confounder and instrument links; the outcome is
linear in treatment with additive nonlinear signal. Nonlinear links are
built from randomly drawn column pairs pushed through one of five
bivariate function families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy.special import expit

from .errors import DataError, DegenerateArmError, ValidationError

BLOCK_ROLES = ("confounders", "instruments", "outcome_predictors", "irrelevant")

# Fraction of a block's columns consumed by its nonlinear link.
LINK_COLUMN_FRACTION = 0.20

# Baseline outcome level before treatment and covariate signal.
OUTCOME_INTERCEPT = 3.0

# Attempts before giving up on a draw where every unit lands in one arm.
DEGENERATE_ARM_RETRIES = 10


# ---------------------------------------------------------------------------
# Bivariate link families
# ---------------------------------------------------------------------------

def step_x1(x: NDArray, variant: int) -> NDArray:
    """Piecewise-constant transform applied to the first column of a pair."""
    x = np.asarray(x, dtype=float)
    if variant == 0:
        out = np.empty_like(x)
        out[x <= -1] = -2.0
        out[(x > -1) & (x <= 0)] = -1.0
        out[(x > 0) & (x < 2)] = 1.0
        out[x >= 2] = 3.0
        return out
    return (x >= 0).astype(float)


def step_x2(x: NDArray, variant: int) -> NDArray:
    """Piecewise-constant transform applied to the second column of a pair."""
    x = np.asarray(x, dtype=float)
    if variant == 0:
        out = np.empty_like(x)
        out[x <= 0] = -5.0
        out[(x > 0) & (x < 1)] = -2.0
        out[x >= 1] = 3.0
        return out
    return (x >= 1).astype(float)


def _exp_product(x1, x2, variant):
    return np.exp(x1 * x2 / 2.0)


def _logistic_ratio(x1, x2, variant):
    return x1 / (1.0 + np.exp(x2))


def _shifted_cube(x1, x2, variant):
    return (x1 * x2 / 10.0 + 2.0) ** 3


def _shifted_square(x1, x2, variant):
    return (x1 + x2 + 3.0) ** 2


def _step_product(x1, x2, variant):
    return step_x1(x1, variant) * step_x2(x2, variant)


LINK_FAMILIES = (
    _exp_product,
    _logistic_ratio,
    _shifted_cube,
    _shifted_square,
    _step_product,
)


# ---------------------------------------------------------------------------
# Specs and dataset container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DgpSpec:
    """Frozen description of one synthetic data-generating process.

    Coefficient ranges are (low, high) pairs for uniform draws; a range
    with low == high pins the coefficient to a constant. ``gamma_c`` and
    ``gamma_iv`` scale the treatment-model links of the confounder and
    instrument blocks, ``gamma_c_prime`` and ``gamma_y`` the outcome-model
    links of the confounder and outcome-predictor blocks.
    """

    n: int
    block_sizes: tuple[int, int, int, int]
    rho: float = 0.5
    gamma_c: tuple[float, float] = (0.25, 0.25)
    gamma_c_prime: tuple[float, float] = (0.25, 0.25)
    gamma_y: tuple[float, float] = (0.25, 0.25)
    gamma_iv: tuple[float, float] = (0.25, 0.25)
    beta_true: float = 1.0
    noise_sd: float = 1.0
    standardize_links: bool = True
    seed: int = 0
    p: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "block_sizes", tuple(int(b) for b in self.block_sizes))
        if self.p is None:
            object.__setattr__(self, "p", sum(self.block_sizes))
        self.validate()

    def validate(self) -> None:
        if len(self.block_sizes) != 4:
            raise ValidationError("block_sizes must list four block widths")
        if any(b < 2 for b in self.block_sizes):
            raise ValidationError("each block needs at least 2 columns (links consume pairs)")
        if self.p != sum(self.block_sizes):
            raise ValidationError(f"p={self.p} does not equal sum(block_sizes)={sum(self.block_sizes)}")
        if self.n < 2:
            raise ValidationError("n must be at least 2")
        if not abs(self.rho) < 1:
            raise ValidationError("rho must satisfy |rho| < 1")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be nonnegative")
        for name in ("gamma_c", "gamma_c_prime", "gamma_y", "gamma_iv"):
            low, high = getattr(self, name)
            if high < low:
                raise ValidationError(f"{name} range must satisfy low <= high")

    def block_bounds(self, role: str) -> tuple[int, int]:
        """Return (start, width) of the columns owned by a block role."""
        if role not in BLOCK_ROLES:
            raise ValidationError(f"unknown block role {role!r}; expected one of {BLOCK_ROLES}")
        idx = BLOCK_ROLES.index(role)
        start = sum(self.block_sizes[:idx])
        return start, self.block_sizes[idx]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "block_sizes": list(self.block_sizes),
            "rho": self.rho,
            "gamma_c": list(self.gamma_c),
            "gamma_c_prime": list(self.gamma_c_prime),
            "gamma_y": list(self.gamma_y),
            "gamma_iv": list(self.gamma_iv),
            "beta_true": self.beta_true,
            "noise_sd": self.noise_sd,
            "standardize_links": self.standardize_links,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "DgpSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown dgp keys: {sorted(unknown)}")
        kwargs = dict(raw)
        for key in ("block_sizes", "gamma_c", "gamma_c_prime", "gamma_y", "gamma_iv"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class LinkSpec:
    """One drawn nonlinear link: paired columns, families, and coefficients.

    ``selected_pairs`` holds global column indices. ``step_variants`` only
    matters for pairs whose family is the step product, but one variant is
    drawn per pair regardless so the random stream does not depend on which
    families came up.
    """

    block: tuple[int, int]
    selected_pairs: tuple[tuple[int, int], ...]
    function_ids: tuple[int, ...]
    step_variants: tuple[int, ...]
    coefficients: tuple[float, ...]
    standardize: bool = True

    def __post_init__(self):
        start, width = self.block
        for i, j in self.selected_pairs:
            if not (start <= i < start + width and start <= j < start + width):
                raise ValidationError(f"pair ({i}, {j}) outside block [{start}, {start + width})")
        n_pairs = len(self.selected_pairs)
        if not (len(self.function_ids) == len(self.step_variants) == len(self.coefficients) == n_pairs):
            raise ValidationError("per-pair fields must all have the same length")
        if any(not 0 <= f < len(LINK_FAMILIES) for f in self.function_ids):
            raise ValidationError("function id out of range")


@dataclass(frozen=True)
class Truth:
    """True nuisance values carried alongside a synthetic dataset."""

    g: NDArray
    q1: NDArray
    q0: NDArray
    beta: float


@dataclass
class Dataset:
    """Covariates, binary treatment, outcome, and optional generative truth."""

    W: NDArray
    A: NDArray
    Y: NDArray
    truth: Optional[Truth] = None

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.Y = np.asarray(self.Y, dtype=float)
        n = self.W.shape[0]
        if self.A.shape != (n,) or self.Y.shape != (n,):
            raise DataError("W, A, Y must share their first dimension")
        if not np.isin(self.A, (0.0, 1.0)).all():
            raise DataError("treatment must be binary 0/1")
        if not (np.isfinite(self.W).all() and np.isfinite(self.Y).all()):
            raise DataError("covariates and outcome must be finite")

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]

    def require_both_arms(self) -> None:
        n1 = int(self.A.sum())
        if n1 == 0 or n1 == self.n:
            raise DataError("both treatment arms must be nonempty")

    def to_csv(self, path, include_truth: bool = True) -> None:
        """Write `y,a,w1..wp` columns, plus truth columns when available."""
        cols = {"y": self.Y, "a": self.A.astype(int)}
        for j in range(self.p):
            cols[f"w{j + 1}"] = self.W[:, j]
        if include_truth and self.truth is not None:
            cols["g_true"] = self.truth.g
            cols["q1_true"] = self.truth.q1
            cols["q0_true"] = self.truth.q0
        pd.DataFrame(cols).to_csv(path, index=False, lineterminator="\n")

    @classmethod
    def from_csv(cls, path, beta_true: Optional[float] = None) -> "Dataset":
        """Read a dataset written by :meth:`to_csv` (or any `y,a,w*` CSV)."""
        try:
            frame = pd.read_csv(path)
        except Exception as exc:
            raise DataError(f"could not read CSV {path}: {exc}") from exc
        for required in ("y", "a"):
            if required not in frame.columns:
                raise DataError(f"missing required column {required!r}")
        w_cols = [c for c in frame.columns if c.startswith("w") and c[1:].isdigit()]
        if not w_cols:
            raise DataError("no covariate columns w1..wp found")
        w_cols.sort(key=lambda c: int(c[1:]))
        expected = [f"w{j + 1}" for j in range(len(w_cols))]
        if w_cols != expected:
            raise DataError("covariate columns must be contiguous w1..wp")
        a = frame["a"].to_numpy(dtype=float)
        if not np.isin(a, (0.0, 1.0)).all():
            raise DataError("treatment column must be binary 0/1")
        truth = None
        if {"g_true", "q1_true", "q0_true"}.issubset(frame.columns):
            q1 = frame["q1_true"].to_numpy(dtype=float)
            q0 = frame["q0_true"].to_numpy(dtype=float)
            beta = float(beta_true) if beta_true is not None else float(np.mean(q1 - q0))
            truth = Truth(g=frame["g_true"].to_numpy(dtype=float), q1=q1, q0=q0, beta=beta)
        return cls(
            W=frame[w_cols].to_numpy(dtype=float),
            A=a,
            Y=frame["y"].to_numpy(dtype=float),
            truth=truth,
        )


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def ar1_covariance(width: int, rho: float) -> NDArray:
    """AR(1) covariance with entries rho^|j-k|."""
    idx = np.arange(width)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def gen_covariates(spec: DgpSpec, rng: np.random.Generator) -> NDArray:
    """Draw the n x p covariate matrix, one independent AR(1) block at a time."""
    spec.validate()
    blocks = []
    for width in spec.block_sizes:
        cov = ar1_covariance(width, spec.rho)
        chol = np.linalg.cholesky(cov)
        z = rng.standard_normal((spec.n, width))
        blocks.append(z @ chol.T)
    return np.concatenate(blocks, axis=1)


def draw_links(
    spec: DgpSpec,
    block: str,
    rng: np.random.Generator,
    coef_range: Optional[tuple[float, float]] = None,
) -> LinkSpec:
    """Draw one block's link: 20% of columns, paired, with random families.

    Selected columns are grouped into disjoint pairs in draw order; an odd
    leftover column is dropped. ``coef_range`` defaults to the block's own
    coefficient range (confounders -> gamma_c, instruments -> gamma_iv,
    outcome predictors -> gamma_y); pass ``spec.gamma_c_prime`` to reuse
    the confounder block inside the outcome model.
    """
    start, width = spec.block_bounds(block)
    if width < 2:
        raise ValidationError(f"block {block!r} too small to form a link")
    if coef_range is None:
        defaults = {
            "confounders": spec.gamma_c,
            "instruments": spec.gamma_iv,
            "outcome_predictors": spec.gamma_y,
            "irrelevant": (0.0, 0.0),
        }
        coef_range = defaults[block]

    n_cols = math.ceil(LINK_COLUMN_FRACTION * width)
    cols = rng.choice(width, size=n_cols, replace=False) + start
    n_pairs = n_cols // 2
    pairs = tuple((int(cols[2 * k]), int(cols[2 * k + 1])) for k in range(n_pairs))
    function_ids = tuple(int(f) for f in rng.integers(0, len(LINK_FAMILIES), size=n_pairs))
    step_variants = tuple(int(s) for s in rng.integers(0, 2, size=n_pairs))
    coefficients = tuple(float(c) for c in rng.uniform(coef_range[0], coef_range[1], size=n_pairs))
    return LinkSpec(
        block=(start, width),
        selected_pairs=pairs,
        function_ids=function_ids,
        step_variants=step_variants,
        coefficients=coefficients,
        standardize=spec.standardize_links,
    )


def eval_link(link: LinkSpec, W: NDArray) -> NDArray:
    """Evaluate a drawn link on covariates: sum of coefficient * family(x1, x2).

    With ``standardize`` set, each pair's raw output is centered and scaled
    to unit sample variance before its coefficient is applied, so that the
    heavy-tailed families (cube, exponential) cannot dominate the index by
    scale alone. Constant outputs are centered but not rescaled.
    """
    W = np.asarray(W, dtype=float)
    total = np.zeros(W.shape[0])
    for (i, j), fid, variant, coef in zip(
        link.selected_pairs, link.function_ids, link.step_variants, link.coefficients
    ):
        if i >= W.shape[1] or j >= W.shape[1]:
            raise DataError("covariate matrix does not cover the link's columns")
        values = LINK_FAMILIES[fid](W[:, i], W[:, j], variant)
        if link.standardize:
            values = values - values.mean()
            sd = values.std()
            if sd > 1e-12:
                values = values / sd
        total += coef * values
    return total


def gen_dataset(spec: DgpSpec, rng: Optional[np.random.Generator] = None) -> Dataset:
    """Generate one dataset, retrying on a degenerate (single-arm) draw.

    Retries continue the same random stream, so results stay a
    deterministic function of (spec, seed) or of the supplied generator.
    """
    spec.validate()
    if rng is None:
        rng = np.random.default_rng(spec.seed)

    for _ in range(DEGENERATE_ARM_RETRIES):
        W = gen_covariates(spec, rng)
        f_a = draw_links(spec, "confounders", rng)
        g_a = draw_links(spec, "instruments", rng)
        f_y = draw_links(spec, "confounders", rng, coef_range=spec.gamma_c_prime)
        g_y = draw_links(spec, "outcome_predictors", rng)

        eta = eval_link(f_a, W) + eval_link(g_a, W)
        g_true = expit(eta)
        A = (rng.random(spec.n) < g_true).astype(float)

        signal = eval_link(f_y, W) + eval_link(g_y, W)
        q0 = OUTCOME_INTERCEPT + signal
        q1 = q0 + spec.beta_true
        eps = rng.normal(0.0, spec.noise_sd, size=spec.n)
        Y = np.where(A > 0, q1, q0) + eps

        if 0 < A.sum() < spec.n:
            truth = Truth(g=g_true, q1=q1, q0=q0, beta=spec.beta_true)
            return Dataset(W=W, A=A, Y=Y, truth=truth)

    raise DegenerateArmError(
        f"all {DEGENERATE_ARM_RETRIES} draws produced a single-arm sample; "
        "weaken the treatment links or increase n"
    )
