"""Leave-one-out and leave-k-out prediction columns.

For linear smoothers the held-out predictions come from the leverage
identity on a single full-data fit; for everything else loo_refit does
honest refits over a deterministic fold schedule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .core import Dataset, LooMatrix, RngPlan
from .solver import RCOND_FLOOR, SingularSystemError

__all__ = [
    "LinearModelFit",
    "fit_linear",
    "loo_linear",
    "fold_schedule",
    "loo_refit",
    "assemble_loo_matrix",
]


@dataclass(frozen=True)
class LinearModelFit:
    """Least-squares fit of y on a design matrix, with hat diagonals.

    fitted + residuals reconstructs y exactly; leverages are the hat
    matrix diagonal, each in [0, 1], summing to the number of columns.
    """

    design: np.ndarray
    coef: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    leverages: np.ndarray

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]


def fit_linear(design: np.ndarray, y: np.ndarray) -> LinearModelFit:
    """Least squares of y on design via QR, leverages from the Q factor.

    Parameters
    ----------
    design : ndarray
        Shape (n, p) with n > p and full column rank (reciprocal condition
        at least 1e-12, else an error).
    y : ndarray
        Responses, shape (n,).

    Returns
    -------
    LinearModelFit
    """
    design = np.asarray(design, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if design.ndim != 2:
        raise ValueError(f"design must be 2-dimensional, got shape {design.shape}")
    n, p = design.shape
    if y.ndim != 1 or y.shape[0] != n:
        raise ValueError(f"y has shape {y.shape}, expected ({n},) to match design rows")
    if n <= p:
        raise ValueError(f"need more rows than columns, got n={n} <= p={p}")
    if not (np.all(np.isfinite(design)) and np.all(np.isfinite(y))):
        raise ValueError("design and y must be finite")

    s = np.linalg.svd(design, compute_uv=False)
    rcond = 0.0 if s[0] == 0.0 else float(s[-1] / s[0])
    if rcond < RCOND_FLOOR:
        raise SingularSystemError("design matrix", rcond)

    Q, R = scipy.linalg.qr(design, mode="economic")
    coef = scipy.linalg.solve_triangular(R, Q.T @ y)
    fitted = design @ coef
    leverages = np.clip(np.einsum("ij,ij->i", Q, Q), 0.0, 1.0)
    return LinearModelFit(design, coef, fitted, y - fitted, leverages)


def loo_linear(fit: LinearModelFit, y: np.ndarray) -> np.ndarray:
    """Held-out predictions from one fit, via the leverage identity.

    Returns the vector with entries y_i - residual_i / (1 - leverage_i),
    which equals the prediction at x_i of the model refit without row i.
    Requires every leverage below 1 - 1e-10 (a leverage of 1 means the
    point determines its own fit and has no held-out prediction).
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != fit.n:
        raise ValueError(f"y has shape {y.shape}, expected ({fit.n},)")
    hmax = float(fit.leverages.max())
    if hmax >= 1.0 - 1e-10:
        raise ValueError(
            f"leverage {hmax} too close to 1; a row fully determines its own fit"
        )
    return y - fit.residuals / (1.0 - fit.leverages)


def fold_schedule(n: int, k: int, plan: RngPlan | None = None) -> list[np.ndarray]:
    """Disjoint index blocks of size k covering range(n), in seeded order.

    k = 1 yields the identity schedule [0], [1], ...; larger k permutes
    the indices with plan.stream("folds") and slices consecutive blocks
    (the last block keeps the remainder, so every index appears exactly
    once).  The same plan always yields the same schedule.
    """
    if k < 1 or k > n:
        raise ValueError(f"fold size must satisfy 1 <= k <= n, got k={k}, n={n}")
    if k == 1:
        return [np.array([i]) for i in range(n)]
    if plan is None:
        raise ValueError("leave-k-out with k > 1 needs an RngPlan for the fold order")
    order = plan.stream("folds").permutation(n)
    return [order[i : i + k] for i in range(0, n, k)]


def loo_refit(
    fitter: Callable[[np.ndarray, np.ndarray], Callable[[np.ndarray], np.ndarray]],
    data: Dataset,
    k: int = 1,
    plan: RngPlan | None = None,
    schedule: Sequence[np.ndarray] | None = None,
) -> np.ndarray:
    """Held-out predictions by honest refits over a fold schedule.

    fitter(x, y) must return a prediction function mapping a query design
    block to predictions.  Each fold is predicted by a model fit on all
    rows outside the fold.  Pass schedule to impose an explicit fold
    partition; otherwise one is derived from (k, plan) via fold_schedule.

    Returns
    -------
    ndarray
        Shape (n,), one held-out prediction per row; a ready LooMatrix
        column.
    """
    n = data.n
    if schedule is None:
        schedule = fold_schedule(n, k, plan)
    seen = np.zeros(n, dtype=bool)
    out = np.empty(n)
    for block in schedule:
        block = np.asarray(block)
        if seen[block].any():
            raise ValueError("fold schedule repeats an index")
        seen[block] = True
        keep = np.ones(n, dtype=bool)
        keep[block] = False
        predict = fitter(data.x[keep], data.y[keep])
        out[block] = np.asarray(predict(data.x[block]), dtype=np.float64)
    if not seen.all():
        raise ValueError("fold schedule does not cover every index")
    return out


def assemble_loo_matrix(columns: Sequence[np.ndarray], k: int = 1) -> LooMatrix:
    """Stack per-predictor held-out columns into a LooMatrix.

    All columns must have the same length; validation of finiteness and
    shape happens in the LooMatrix constructor.
    """
    cols = [np.asarray(c, dtype=np.float64) for c in columns]
    if not cols:
        raise ValueError("need at least one column")
    lengths = {c.shape[0] for c in cols if c.ndim == 1}
    if any(c.ndim != 1 for c in cols) or len(lengths) != 1:
        raise ValueError("columns must be 1-dimensional and of equal length")
    return LooMatrix(np.column_stack(cols), k=k)
