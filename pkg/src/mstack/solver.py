"""Closed-form stacking weights under sum constraints, plus a KKT oracle.

Three closed forms are implemented on top of the held-out prediction
moments: the unconstrained normal-equations solution, the sum-to-m
solution obtained by solving a rank-one-shifted system against the ones
vector and rescaling, and the sum-to-one special case driven by the
residual Gram matrix.  kkt_oracle solves the bordered stationarity
system directly with an unrelated factorization; solve_sum_to_m checks
itself against the oracle on every call because the moment-matrix route
is the delicate one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (
    UNCONSTRAINED,
    ConstraintSpec,
    LooMatrix,
    WeightSolution,
    stacking_error,
)

__all__ = [
    "SingularSystemError",
    "SolverMatrices",
    "solve_unconstrained",
    "solve_sum_to_m",
    "solve_sum_to_one",
    "solve_in_hilbert",
    "kkt_oracle",
]

# Reciprocal-condition floor below which linear systems are treated as
# singular.  Collinear predictor columns land here; callers should prune.
RCOND_FLOOR = 1e-12


class SingularSystemError(np.linalg.LinAlgError):
    """A solve was refused because the system is singular or nearly so."""

    def __init__(self, what: str, rcond: float):
        self.rcond = rcond
        super().__init__(
            f"{what} is singular to working precision "
            f"(reciprocal condition {rcond:.3e} < {RCOND_FLOOR:g}); "
            "predictor columns are likely collinear"
        )


def _solve_checked(A: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    """Solve A z = b via SVD with an explicit reciprocal-condition check."""
    u, s, vt = np.linalg.svd(A)
    rcond = 0.0 if s[0] == 0.0 else float(s[-1] / s[0])
    if rcond < RCOND_FLOOR:
        raise SingularSystemError(what, rcond)
    return vt.T @ ((u.T @ b) / s)


def _check_shapes(loo: LooMatrix, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != loo.n:
        raise ValueError(
            f"y has shape {y.shape}, expected ({loo.n},) to match preds rows"
        )
    if loo.n < loo.J:
        raise ValueError(
            f"need at least as many rows as predictors, got n={loo.n} < J={loo.J}"
        )
    return y


@dataclass(frozen=True)
class SolverMatrices:
    """Moments of the held-out predictions that all closed forms consume.

    gram[l, j] = sum_i preds[i, l] * preds[i, j]
    response[j] = sum_i y_i * preds[i, j]
    residuals[i, j] = y_i - preds[i, j]
    """

    gram: np.ndarray
    response: np.ndarray
    residuals: np.ndarray
    sq_response: float

    @classmethod
    def from_loo(cls, loo: LooMatrix, y: np.ndarray) -> "SolverMatrices":
        y = _check_shapes(loo, y)
        P = loo.preds
        return cls(
            gram=P.T @ P,
            response=P.T @ y,
            residuals=y[:, None] - P,
            sq_response=float(y @ y),
        )

    def constraint_system(self, m: float) -> np.ndarray:
        """System matrix of the sum-to-m stationarity conditions.

        Entry (l, j) is sum_i (y_i / m - preds[i, j]) * preds[i, l]
        minus sum_i (y_i - preds[i, j]) * y_i; at the constrained optimum
        this matrix maps the weight vector to a multiple of ones.
        """
        c = self.response
        return c[:, None] / m - self.gram - (self.sq_response - c)[None, :]


def solve_unconstrained(loo: LooMatrix, y: np.ndarray) -> WeightSolution:
    """Weights minimizing the stacking error with no constraint on the sum.

    Solves gram @ w = response.  Requires n >= J and a prediction Gram
    matrix whose reciprocal condition is at least 1e-12.

    Parameters
    ----------
    loo : LooMatrix
        Held-out predictions, shape (n, J).
    y : ndarray
        Responses, shape (n,).

    Returns
    -------
    WeightSolution
        Unconstrained minimizer with its attained objective value.
    """
    y = _check_shapes(loo, y)
    mats = SolverMatrices.from_loo(loo, y)
    w = _solve_checked(mats.gram, mats.response, "prediction Gram matrix")
    return WeightSolution(w, UNCONSTRAINED, stacking_error(loo, y, w))


def solve_sum_to_m(loo: LooMatrix, y: np.ndarray, m: float) -> WeightSolution:
    """Weights minimizing the stacking error subject to sum(w) = m.

    Solves the shifted moment system against the ones vector and rescales
    the result so the weights sum to m exactly.  Every call is verified
    against kkt_oracle entrywise within 1e-8; a discrepancy raises rather
    than returning a silently wrong vector, since this route's index
    conventions are the subtle part.

    Parameters
    ----------
    loo : LooMatrix
        Held-out predictions, shape (n, J).
    y : ndarray
        Responses, shape (n,).
    m : float
        Required weight total, nonzero.

    Returns
    -------
    WeightSolution
        Constrained minimizer; w.sum() equals m to within 1e-10 relative.
    """
    constraint = ConstraintSpec.sum_to(m)  # validates m
    m = constraint.m
    y = _check_shapes(loo, y)
    mats = SolverMatrices.from_loo(loo, y)
    U = mats.constraint_system(m)
    v = _solve_checked(U, np.ones(loo.J), "sum-constraint system matrix")
    total = float(v.sum())
    if abs(total) <= 1e-12 * max(1.0, float(np.abs(v).max())):
        raise SingularSystemError("rescaling total (sum of presolution)", 0.0)
    w = (m / total) * v

    ref = kkt_oracle(loo, y, m).w
    tol = 1e-8 * max(1.0, float(np.abs(ref).max()))
    if float(np.abs(w - ref).max()) > tol:
        raise RuntimeError(
            "sum-to-m closed form disagrees with the KKT oracle "
            f"(max deviation {np.abs(w - ref).max():.3e}); "
            "the system is too ill-conditioned to trust"
        )
    return WeightSolution(w, constraint, stacking_error(loo, y, w))


def solve_sum_to_one(loo: LooMatrix, y: np.ndarray) -> WeightSolution:
    """Weights minimizing the stacking error subject to sum(w) = 1.

    Uses the residual Gram route: solve (residuals' residuals) v = ones
    and normalize v to unit sum.
    """
    y = _check_shapes(loo, y)
    mats = SolverMatrices.from_loo(loo, y)
    E = mats.residuals
    v = _solve_checked(E.T @ E, np.ones(loo.J), "residual Gram matrix")
    total = float(v.sum())
    if abs(total) <= 1e-12 * max(1.0, float(np.abs(v).max())):
        raise SingularSystemError("rescaling total (sum of presolution)", 0.0)
    w = v / total
    return WeightSolution(
        w, ConstraintSpec.sum_to(1.0), stacking_error(loo, y, w)
    )


def solve_in_hilbert(evaluations: np.ndarray, y: np.ndarray) -> WeightSolution:
    """Unconstrained combination weights for arbitrary predictor evaluations.

    Identical computation to solve_unconstrained; the argument is any
    matrix of predictor evaluations at the design points (columns need not
    be held-out predictions), reflecting that the normal equations only
    ever see empirical inner products.
    """
    return solve_unconstrained(LooMatrix(evaluations), y)


def kkt_oracle(loo: LooMatrix, y: np.ndarray, m: float | None = None) -> WeightSolution:
    """Ground-truth weights from the stationarity system, no closed form.

    Unconstrained: solves gram @ w = response by LU.  With a sum
    constraint: solves the bordered system

        [2*gram  1] [w]   [2*response]
        [ 1'     0] [l] = [    m     ]

    by LU.  Deliberately shares no factorization code with the closed
    forms above so it can serve as an independent check.
    """
    y = _check_shapes(loo, y)
    P = loo.preds
    T = P.T @ P
    c = P.T @ y
    J = loo.J
    if m is None:
        if np.linalg.cond(T) > 1.0 / RCOND_FLOOR:
            raise SingularSystemError("prediction Gram matrix", 1.0 / np.linalg.cond(T))
        w = scipy.linalg.solve(T, c, assume_a="sym")
        constraint = UNCONSTRAINED
    else:
        constraint = ConstraintSpec.sum_to(m)
        m = constraint.m
        K = np.zeros((J + 1, J + 1))
        K[:J, :J] = 2.0 * T
        K[:J, J] = 1.0
        K[J, :J] = 1.0
        if np.linalg.cond(K) > 1.0 / RCOND_FLOOR:
            raise SingularSystemError("bordered stationarity system", 1.0 / np.linalg.cond(K))
        rhs = np.concatenate([2.0 * c, [m]])
        w = scipy.linalg.solve(K, rhs)[:J]
        # kill the last-digit drift so the WeightSolution sum check is exact
        w = w * (m / float(w.sum()))
    return WeightSolution(w, constraint, stacking_error(loo, y, w))
