"""Shared value types, the stacking objective, and deterministic RNG streams.

Everything here is immutable after construction: arrays are copied and
marked read-only, so instances can be shared freely across threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "LooMatrix",
    "ConstraintSpec",
    "UNCONSTRAINED",
    "WeightSolution",
    "RngPlan",
    "stacking_error",
    "empirical_inner_product",
]


def _frozen_array(a, name, ndim, dtype=np.float64):
    """Copy to a read-only float64 array of the given rank, or raise."""
    out = np.array(a, dtype=dtype, copy=True)
    if out.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite values")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """A design matrix x of shape (n, d) paired with responses y of shape (n,).

    A 1-d x is accepted and treated as a single column.  Requires n >= 2,
    d >= 1, and finite entries throughout.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        object.__setattr__(self, "x", _frozen_array(x, "x", 2))
        object.__setattr__(self, "y", _frozen_array(self.y, "y", 1))
        n, d = self.x.shape
        if n < 2:
            raise ValueError(f"need at least 2 rows, got n={n}")
        if d < 1:
            raise ValueError("x must have at least one column")
        if self.y.shape[0] != n:
            raise ValueError(
                f"row mismatch: x has {n} rows, y has {self.y.shape[0]}"
            )

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class LooMatrix:
    """Held-out predictions, one column per predictor.

    preds[i, j] is predictor j evaluated at x_i with point i (or its fold)
    excluded from the fit.  k records the fold size the columns were built
    with.  The n >= J requirement is enforced by the solver entry points,
    not here, so partially assembled matrices remain representable.
    """

    preds: np.ndarray
    k: int = 1

    def __post_init__(self):
        object.__setattr__(self, "preds", _frozen_array(self.preds, "preds", 2))
        n, J = self.preds.shape
        if n < 1:
            raise ValueError("preds must have at least one row")
        if J < 1:
            raise ValueError("preds must have at least one column")
        if self.k < 1:
            raise ValueError(f"fold size k must be >= 1, got {self.k}")

    @property
    def n(self) -> int:
        return self.preds.shape[0]

    @property
    def J(self) -> int:
        return self.preds.shape[1]


@dataclass(frozen=True)
class ConstraintSpec:
    """Weight-sum constraint: either unconstrained (m is None) or sum-to-m.

    m = 0 is rejected: the sum-to-m closed form rescales by m, and a zero
    total also makes the stacked predictor degenerate.
    """

    m: float | None = None

    def __post_init__(self):
        if self.m is not None:
            m = float(self.m)
            if not np.isfinite(m):
                raise ValueError("constraint total m must be finite")
            if m == 0.0:
                raise ValueError("m must be nonzero")
            object.__setattr__(self, "m", m)

    @classmethod
    def sum_to(cls, m: float) -> "ConstraintSpec":
        return cls(m=m)

    @property
    def constrained(self) -> bool:
        return self.m is not None

    def __str__(self):
        return "unconstrained" if self.m is None else f"sum-to-{self.m:g}"


UNCONSTRAINED = ConstraintSpec()


@dataclass(frozen=True)
class WeightSolution:
    """Stacking weights w with the constraint they satisfy and the attained
    objective value q = stacking_error at w."""

    w: np.ndarray
    constraint: ConstraintSpec
    q: float

    def __post_init__(self):
        object.__setattr__(self, "w", _frozen_array(self.w, "w", 1))
        if not np.isfinite(self.q) or self.q < 0:
            raise ValueError(f"objective q must be finite and >= 0, got {self.q}")
        if self.constraint.constrained:
            m = self.constraint.m
            gap = abs(float(self.w.sum()) - m)
            if gap > 1e-10 * max(1.0, abs(m)):
                raise ValueError(
                    f"weights sum to {self.w.sum()!r}, constraint requires {m!r}"
                )

    @property
    def J(self) -> int:
        return self.w.shape[0]


def _label_word(label) -> int:
    """Stable 64-bit word for one stream label (no salted builtin hash)."""
    digest = hashlib.blake2s(str(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class RngPlan:
    """Root seed plus a label path; every labelled stream is independent.

    stream(*labels) derives a generator from (seed, prefix, labels) alone,
    so results never depend on the order work items are executed in, and a
    pool of workers draws exactly the same numbers a serial loop would.
    Canonical top-level labels used in this package: "bootstrap",
    "permutation", "simulation", "split", "folds".
    """

    seed: int
    prefix: tuple = field(default_factory=tuple)

    def __post_init__(self):
        seed = int(self.seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "prefix", tuple(self.prefix))

    def stream(self, *labels) -> np.random.Generator:
        words = [self.seed] + [_label_word(l) for l in (*self.prefix, *labels)]
        return np.random.default_rng(np.random.SeedSequence(words))

    def scoped(self, *labels) -> "RngPlan":
        """A sub-plan whose streams are namespaced under the given labels."""
        return RngPlan(self.seed, self.prefix + labels)


def stacking_error(loo: LooMatrix, y: np.ndarray, w: np.ndarray) -> float:
    """Sum of squared residuals of the stacked held-out predictor.

    Computes sum_i (y_i - sum_j w_j * preds[i, j])^2, the objective every
    solver in this package minimizes.

    Parameters
    ----------
    loo : LooMatrix
        Held-out predictions, shape (n, J).
    y : ndarray
        Responses, shape (n,).
    w : ndarray
        Stacking weights, shape (J,).

    Returns
    -------
    float
        Nonnegative; zero exactly when the stacked predictions match y.
    """
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != loo.n:
        raise ValueError(
            f"y has shape {y.shape}, expected ({loo.n},) to match preds rows"
        )
    if w.ndim != 1 or w.shape[0] != loo.J:
        raise ValueError(
            f"w has shape {w.shape}, expected ({loo.J},) to match preds columns"
        )
    r = y - loo.preds @ w
    return float(r @ r)


def empirical_inner_product(g: np.ndarray, h: np.ndarray) -> float:
    """Design-averaged inner product (1/n) sum_i g_i h_i.

    The arguments are evaluations of two functions at the same n design
    points.  This is the inner product every orthonormality statement in
    the basis machinery refers to.
    """
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if g.ndim != 1 or h.ndim != 1:
        raise ValueError("g and h must be 1-dimensional evaluation vectors")
    if g.shape[0] != h.shape[0]:
        raise ValueError(
            f"length mismatch: g has {g.shape[0]} entries, h has {h.shape[0]}"
        )
    return float(g @ h) / g.shape[0]
