"""Kernel regressors used as basis candidates: Nadaraya-Watson and GP means.

Both produce a RegressionFn, a frozen prediction function carrying its
anchors and parameters.  Multivariate inputs are standardized coordinate
by coordinate with the anchor mean and standard deviation, so the
isotropic kernels see comparable scales; univariate inputs are left raw
and the bandwidth grid carries the scale instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.spatial.distance import pdist

from .core import Dataset, _frozen_array

__all__ = [
    "KernelSpec",
    "RegressionFn",
    "nw_fit",
    "gp_fit",
    "default_bandwidth_grid",
    "select_bandwidth_cv",
]

JITTER_MAX = 1e-6
NOISE_FLOOR = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    """Covariance choice for GP regression: rbf(lengthscale) or poly(degree, offset).

    noise is the observation variance added to the kernel diagonal; values
    below the 1e-10 jitter floor are clamped up to it.
    """

    family: str = "rbf"
    lengthscale: float = 1.0
    degree: int = 3
    offset: float = 1.0
    noise: float = 1e-2

    def __post_init__(self):
        if self.family not in ("rbf", "poly"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == "rbf" and not (
            np.isfinite(self.lengthscale) and self.lengthscale > 0
        ):
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if self.family == "poly":
            if int(self.degree) != self.degree or self.degree < 1:
                raise ValueError(f"degree must be an integer >= 1, got {self.degree}")
            if not (np.isfinite(self.offset) and self.offset >= 0):
                raise ValueError(f"offset must be >= 0, got {self.offset}")
        if not (np.isfinite(self.noise) and self.noise >= 0):
            raise ValueError(f"noise must be finite and >= 0, got {self.noise}")
        object.__setattr__(self, "noise", max(float(self.noise), NOISE_FLOOR))

    def matrix(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Kernel matrix between row sets a (m, d) and b (n, d)."""
        if self.family == "rbf":
            sq = (
                np.sum(a * a, axis=1)[:, None]
                + np.sum(b * b, axis=1)[None, :]
                - 2.0 * (a @ b.T)
            )
            np.maximum(sq, 0.0, out=sq)
            return np.exp(-0.5 * sq / self.lengthscale**2)
        return (a @ b.T + self.offset) ** self.degree


def _as_anchors(data) -> tuple[np.ndarray, np.ndarray]:
    """Normalize a Dataset or raw (x, y) pair into anchor arrays.

    Dataset requires n >= 2, but the kernel fitters are defined down to a
    single anchor (prefix fits start there), so a plain (x, y) pair is
    accepted as well.
    """
    if isinstance(data, Dataset):
        return data.x, data.y
    x, y = data
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValueError(f"x has shape {x.shape}, y has shape {y.shape}")
    if x.shape[0] < 1:
        raise ValueError("need at least one anchor")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("anchors must be finite")
    return x, y


def _standardizer(x: np.ndarray):
    """Per-coordinate (shift, scale) for d >= 2; identity for univariate x."""
    n, d = x.shape
    if d < 2:
        return np.zeros(d), np.ones(d)
    shift = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    return shift, scale


@dataclass(frozen=True)
class RegressionFn:
    """A fitted kernel regressor: deterministic map from points to predictions.

    kind is "nw" or "gp"; anchors are the training rows the prediction is
    formed from.  Instances are callable on a scalar (univariate anchors
    only), a 1-d array of univariate queries, or an (m, d) block; scalar
    in gives float out, arrays give an (m,) vector.
    """

    kind: str
    x: np.ndarray
    y: np.ndarray
    bandwidth: float | None = None
    kernel: KernelSpec | None = None
    _shift: np.ndarray = field(default=None, repr=False)
    _scale: np.ndarray = field(default=None, repr=False)
    _alpha: np.ndarray = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def _queries(self, xq):
        xq = np.asarray(xq, dtype=np.float64)
        scalar = xq.ndim == 0
        if scalar:
            xq = xq.reshape(1, 1)
        elif xq.ndim == 1:
            xq = xq[:, None] if self.d == 1 else xq[None, :]
        if xq.ndim != 2 or xq.shape[1] != self.d:
            raise ValueError(
                f"query has shape {np.shape(xq)}, expected (m, {self.d})"
            )
        if not np.all(np.isfinite(xq)):
            raise ValueError("query contains non-finite values")
        return (xq - self._shift) / self._scale, scalar

    def __call__(self, xq):
        q, scalar = self._queries(xq)
        anchors = (self.x - self._shift) / self._scale
        if self.kind == "nw":
            sq = (
                np.sum(q * q, axis=1)[:, None]
                + np.sum(anchors * anchors, axis=1)[None, :]
                - 2.0 * (q @ anchors.T)
            )
            np.maximum(sq, 0.0, out=sq)
            # factor out the per-row peak weight: denominator >= 1 always,
            # and when every other weight underflows this is exactly the
            # nearest anchor's response (ties averaged)
            sq -= sq.min(axis=1)[:, None]
            w = np.exp(-0.5 * sq / self.bandwidth**2)
            out = (w @ self.y) / w.sum(axis=1)
        else:
            out = self.kernel.matrix(q, anchors) @ self._alpha
        return float(out[0]) if scalar else out


def nw_fit(data: Dataset, bandwidth: float) -> RegressionFn:
    """Nadaraya-Watson regressor with a Gaussian kernel at fixed bandwidth.

    Parameters
    ----------
    data : Dataset or (x, y) pair
        Anchor points and responses; a raw pair may have a single row.
    bandwidth : float
        Kernel scale, positive and finite.

    Returns
    -------
    RegressionFn
        eval(x) = sum_i K((x - x_i)/bandwidth) y_i / sum_i K((x - x_i)/bandwidth)
        with K(u) = exp(-|u|^2 / 2).
    """
    if not (np.isfinite(bandwidth) and bandwidth > 0):
        raise ValueError(f"bandwidth must be positive and finite, got {bandwidth}")
    x, y = _as_anchors(data)
    shift, scale = _standardizer(x)
    return RegressionFn(
        kind="nw",
        x=x,
        y=y,
        bandwidth=float(bandwidth),
        _shift=shift,
        _scale=scale,
    )


def gp_fit(data: Dataset, spec: KernelSpec) -> RegressionFn:
    """Posterior-mean GP regressor for a fixed kernel spec.

    Solves (K + noise*I) alpha = y by Cholesky; if the factorization fails
    a diagonal jitter is escalated tenfold from 1e-10 up to 1e-6 before
    giving up.  Predictions are k(x, anchors) @ alpha; no predictive
    variances are computed.
    """
    x, y = _as_anchors(data)
    shift, scale = _standardizer(x)
    anchors = (x - shift) / scale
    K = spec.matrix(anchors, anchors)
    K[np.diag_indices_from(K)] += spec.noise
    jitter = 0.0
    while True:
        try:
            chol = scipy.linalg.cholesky(
                K + jitter * np.eye(x.shape[0]), lower=True
            )
            break
        except scipy.linalg.LinAlgError:
            jitter = NOISE_FLOOR if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise np.linalg.LinAlgError(
                    f"kernel matrix not positive definite at jitter {JITTER_MAX:g}"
                )
    alpha = scipy.linalg.cho_solve((chol, True), y)
    return RegressionFn(
        kind="gp",
        x=x,
        y=y,
        kernel=spec,
        _shift=shift,
        _scale=scale,
        _alpha=_frozen_array(alpha, "alpha", 1),
    )


def default_bandwidth_grid(x: np.ndarray, num: int = 25) -> np.ndarray:
    """Log-spaced bandwidth grid over [0.01, 10] x median pairwise distance.

    Distances are measured in the same standardized coordinates the kernel
    will see.  A zero median (mostly duplicated anchors) falls back to 1.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    shift, scale = _standardizer(x)
    med = float(np.median(pdist((x - shift) / scale))) if x.shape[0] > 1 else 1.0
    if med == 0.0:
        med = 1.0
    return med * np.logspace(np.log10(0.01), np.log10(10.0), num)


def select_bandwidth_cv(data: Dataset, grid: np.ndarray | None = None) -> float:
    """Bandwidth minimizing the leave-one-out error of the NW regressor.

    Each point is predicted from all other anchors; ties in the LOO error
    are broken toward the larger (smoother) bandwidth.  Requires n >= 2;
    with a single anchor no grid value has a defined LOO prediction.
    """
    x, y = _as_anchors(data)
    if x.shape[0] < 2:
        raise ValueError(
            "all grid values produce undefined LOO predictions (need n >= 2)"
        )
    if grid is None:
        grid = default_bandwidth_grid(x)
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    if grid.size == 0 or not np.all(np.isfinite(grid)) or grid[0] <= 0:
        raise ValueError("bandwidth grid must be positive and finite")

    shift, scale = _standardizer(x)
    anchors = (x - shift) / scale
    sq = (
        np.sum(anchors * anchors, axis=1)[:, None]
        + np.sum(anchors * anchors, axis=1)[None, :]
        - 2.0 * (anchors @ anchors.T)
    )
    np.maximum(sq, 0.0, out=sq)
    np.fill_diagonal(sq, np.inf)
    sq -= sq.min(axis=1)[:, None]

    errs = np.empty(grid.size)
    for g, lam in enumerate(grid):
        w = np.exp(-0.5 * sq / lam**2)
        pred = (w @ y) / w.sum(axis=1)
        r = y - pred
        errs[g] = r @ r
    # last index attaining the minimum = largest bandwidth among ties
    best = np.flatnonzero(errs == errs.min())[-1]
    return float(grid[best])
