"""Data-driven orthonormal basis predictors.

The generation loop draws bootstrap resamples, fits a kernel regressor to
each, and orthonormalizes the fits under the design-averaged inner
product.  A batch whose candidates are too collinear is rejected as a
whole (BasisRejection) and redrawn.  Accepted bases are ordered by how
close each element's surface area is to that of a reference fit on the
full data, then truncated at the size that scores best under either a
leave-one-out criterion or a permuted sequential-prediction score.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import Dataset, LooMatrix, RngPlan, empirical_inner_product
from .kernels import KernelSpec, RegressionFn, nw_fit, gp_fit, select_bandwidth_cv
from .loocv import fit_linear, loo_linear

__all__ = [
    "BasisRejection",
    "LinearCombination",
    "BasisSet",
    "PermutationPlan",
    "BasisSearchResult",
    "bootstrap_candidates",
    "gram_schmidt_empirical",
    "generate_orthonormal_basis",
    "surface_area",
    "order_basis",
    "sequential_score",
    "select_j_opt",
    "search_basis",
]


class BasisRejection(Exception):
    """A candidate batch was too collinear to orthonormalize.

    Recoverable by redrawing the batch; generate_orthonormal_basis does
    exactly that.  index is the offending column, ratio the residual norm
    left after projection relative to the column's original norm.
    """

    def __init__(self, index: int, ratio: float):
        self.index = index
        self.ratio = ratio
        super().__init__(
            f"candidate {index} lies within tolerance of the span of its "
            f"predecessors (residual ratio {ratio:.3e}); redraw the batch"
        )


@dataclass(frozen=True)
class LinearCombination:
    """Fixed linear combination of evaluable functions; itself evaluable."""

    funcs: tuple
    weights: np.ndarray

    def __call__(self, xq):
        cols = [f(xq) for f in self.funcs]
        if np.ndim(cols[0]) == 0:
            return float(np.dot(np.asarray(cols), self.weights))
        return np.column_stack(cols) @ self.weights


@dataclass(frozen=True)
class BasisSet:
    """Orthonormal basis under the design-averaged inner product.

    evals holds the basis evaluated at the n design points (column j is
    element j); funcs and coef, when present, express element j as the
    combination sum_l coef[l, j] * funcs[l], which is how elements are
    evaluated away from the design points.
    """

    evals: np.ndarray
    funcs: tuple | None = None
    coef: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.evals.shape[0]

    @property
    def J(self) -> int:
        return self.evals.shape[1]

    @property
    def gram(self) -> np.ndarray:
        return (self.evals.T @ self.evals) / self.n

    @property
    def elements(self) -> tuple:
        if self.funcs is None:
            raise ValueError(
                "this basis carries evaluations only; elements need funcs"
            )
        return tuple(
            LinearCombination(self.funcs, self.coef[:, j]) for j in range(self.J)
        )

    def evaluate_at(self, xq) -> np.ndarray:
        """All elements at the query block: shape (m, J)."""
        if self.funcs is None:
            raise ValueError(
                "this basis carries evaluations only; elements need funcs"
            )
        G = np.column_stack([f(xq) for f in self.funcs])
        return np.column_stack([G @ self.coef[:, j] for j in range(self.J)])

    def take(self, order) -> "BasisSet":
        """Basis with columns reindexed by order (a permutation or prefix)."""
        order = np.asarray(order)
        return BasisSet(
            evals=self.evals[:, order],
            funcs=self.funcs,
            coef=None if self.coef is None else self.coef[:, order],
        )


def gram_schmidt_empirical(
    candidates: np.ndarray,
    tol: float = 1e-6,
    funcs: Sequence | None = None,
) -> BasisSet:
    """Modified Gram-Schmidt under the design-averaged inner product.

    Orthonormalizes the columns of candidates (evaluations at the n design
    points) so the output satisfies (1/n) * evals.T @ evals = I.  Each
    column is projected against the accepted ones twice before
    normalizing, which keeps the Gram error near machine precision even
    for marginal batches.

    Raises
    ------
    BasisRejection
        If any column's residual norm after projection falls below
        tol times its original norm.  The whole batch is rejected.
    ValueError
        If a column has exactly zero norm (a degenerate candidate, not a
        collinearity matter).
    """
    V = np.array(candidates, dtype=np.float64, copy=True)
    if V.ndim != 2:
        raise ValueError(f"candidates must be 2-dimensional, got shape {V.shape}")
    n, J = V.shape
    if J < 1:
        raise ValueError("need at least one candidate column")
    if not np.all(np.isfinite(V)):
        raise ValueError("candidate evaluations contain non-finite values")
    if funcs is not None and len(funcs) != J:
        raise ValueError(f"got {len(funcs)} funcs for {J} candidate columns")

    E = np.empty_like(V)
    C = np.eye(J)
    for j in range(J):
        v = V[:, j].copy()
        orig = np.sqrt(empirical_inner_product(v, v))
        if orig == 0.0:
            raise ValueError(f"candidate column {j} has zero norm")
        for _ in range(2):
            for l in range(j):
                r = empirical_inner_product(E[:, l], v)
                v -= r * E[:, l]
                C[:, j] -= r * C[:, l]
        resid = np.sqrt(empirical_inner_product(v, v))
        if resid < tol * orig:
            raise BasisRejection(j, resid / orig)
        E[:, j] = v / resid
        C[:, j] /= resid
    return BasisSet(
        evals=E,
        funcs=None if funcs is None else tuple(funcs),
        coef=None if funcs is None else C,
    )


def bootstrap_candidates(
    data: Dataset,
    J: int,
    generator: str = "nw",
    plan: RngPlan | None = None,
    kernel_spec: KernelSpec | None = None,
) -> list[RegressionFn]:
    """J kernel regressors, each fit to an n-point bootstrap resample.

    generator "nw" selects the bandwidth per resample by leave-one-out on
    the default grid; "gp" uses the given kernel_spec as-is.  Resample
    indices come from plan.stream("bootstrap", j, attempt), so results are
    identical however the loop is scheduled.  A fit failure retries the
    slot on a fresh substream, at most 10*J failures in total.
    """
    if J < 1:
        raise ValueError(f"J must be >= 1, got {J}")
    if generator not in ("nw", "gp"):
        raise ValueError(f"unknown generator {generator!r}")
    if generator == "gp" and kernel_spec is None:
        kernel_spec = KernelSpec()
    if plan is None:
        raise ValueError("bootstrap_candidates needs an RngPlan")

    out = []
    failures = 0
    for j in range(J):
        attempt = 0
        while True:
            rng = plan.stream("bootstrap", j, attempt)
            idx = rng.integers(0, data.n, size=data.n)
            resample = Dataset(data.x[idx], data.y[idx])
            try:
                if generator == "nw":
                    fit = nw_fit(resample, select_bandwidth_cv(resample))
                else:
                    fit = gp_fit(resample, kernel_spec)
                break
            except (np.linalg.LinAlgError, ValueError):
                failures += 1
                attempt += 1
                if failures > 10 * J:
                    raise RuntimeError(
                        f"generator failed on {failures} resamples; giving up"
                    )
        out.append(fit)
    return out


def generate_orthonormal_basis(
    data: Dataset,
    J: int,
    generator: str = "nw",
    plan: RngPlan | None = None,
    tol: float = 1e-6,
    max_rounds: int = 50,
    kernel_spec: KernelSpec | None = None,
) -> BasisSet:
    """Bootstrap-fit-orthonormalize loop; redraws whole batches on rejection.

    Returns an accepted BasisSet whose elements are linear combinations of
    the round's candidate regressors.  After max_rounds consecutive
    rejections the last rejection diagnostic is raised as an error.
    """
    if J > data.n:
        raise ValueError(f"J={J} exceeds the number of rows n={data.n}")
    if plan is None:
        raise ValueError("generate_orthonormal_basis needs an RngPlan")
    last = None
    for r in range(max_rounds):
        candidates = bootstrap_candidates(
            data, J, generator, plan.scoped("round", r), kernel_spec
        )
        evals = np.column_stack([f(data.x) for f in candidates])
        try:
            return gram_schmidt_empirical(evals, tol, funcs=candidates)
        except BasisRejection as rej:
            last = rej
    raise RuntimeError(
        f"no acceptable candidate batch after {max_rounds} rounds; "
        f"last rejection: {last}"
    )


def _domain_box(domain) -> np.ndarray:
    box = np.asarray(domain, dtype=np.float64)
    if box.ndim == 1:
        box = box[None, :]
    if box.ndim != 2 or box.shape[1] != 2:
        raise ValueError(f"domain must be (d, 2) bounds, got shape {np.shape(domain)}")
    if not np.all(np.isfinite(box)) or not np.all(box[:, 0] < box[:, 1]):
        raise ValueError("domain bounds must be finite with lo < hi per axis")
    return box


def surface_area(fn: Callable, domain, resolution: int = 512) -> float:
    """Graph size of fn over an axis-aligned box.

    Univariate: polyline arc length of the graph sampled on a uniform
    grid of `resolution` points.  Bivariate: total area of the two
    triangles per grid cell over the sampled surface.  Three or more
    dimensions are not supported.
    """
    box = _domain_box(domain)
    d = box.shape[0]
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    if d == 1:
        grid = np.linspace(box[0, 0], box[0, 1], resolution)
        f = np.asarray(fn(grid), dtype=np.float64)
        return float(np.hypot(np.diff(grid), np.diff(f)).sum())
    if d == 2:
        gx = np.linspace(box[0, 0], box[0, 1], resolution)
        gy = np.linspace(box[1, 0], box[1, 1], resolution)
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        Z = np.asarray(fn(pts), dtype=np.float64).reshape(resolution, resolution)
        dx = np.diff(gx)[:, None]
        dy = np.diff(gy)[None, :]
        z00 = Z[:-1, :-1]
        z10 = Z[1:, :-1]
        z01 = Z[:-1, 1:]
        z11 = Z[1:, 1:]
        # triangles (00,10,01) and (10,11,01) per cell; cross-product areas
        a1 = 0.5 * np.sqrt(
            (dy * (z00 - z10)) ** 2 + (dx * (z00 - z01)) ** 2 + (dx * dy) ** 2
        )
        a2 = 0.5 * np.sqrt(
            (dy * (z11 - z01)) ** 2 + (dx * (z11 - z10)) ** 2 + (dx * dy) ** 2
        )
        return float((a1 + a2).sum())
    raise ValueError(f"surface area is not defined here for d={d} >= 3 inputs")


def order_basis(
    basis: BasisSet,
    reference: Callable,
    domain,
    resolution: int = 512,
) -> BasisSet:
    """Sort elements by |surface_area(reference) - surface_area(element)|.

    Ascending, stable, so ties keep their generation order.  For three or
    more input dimensions the surface criterion is unavailable; the basis
    is returned in generation order with a warning.
    """
    box = _domain_box(domain)
    if box.shape[0] >= 3:
        warnings.warn(
            "surface-area ordering unavailable for d >= 3; keeping generation order",
            RuntimeWarning,
            stacklevel=2,
        )
        return basis
    target = surface_area(reference, box, resolution)
    if basis.funcs is not None and box.shape[0] == 1:
        # one pass over the candidate functions instead of one per element;
        # same floating-point path as per-element surface_area calls
        grid = np.linspace(box[0, 0], box[0, 1], resolution)
        G = np.column_stack([f(grid) for f in basis.funcs])
        dg = np.diff(grid)
        areas = np.array([
            np.hypot(dg, np.diff(G @ basis.coef[:, j])).sum()
            for j in range(basis.J)
        ])
    else:
        areas = np.array(
            [surface_area(e, box, resolution) for e in basis.elements]
        )
    order = np.argsort(np.abs(areas - target), kind="stable")
    return basis.take(order)


@dataclass(frozen=True)
class PermutationPlan:
    """Fixed permutations for the sequential-prediction score.

    sigmas are K permutations of range(n); burn_in is the first predicted
    position (1-based), so each pass fits on prefixes of size burn_in - 1
    through n - 1.
    """

    sigmas: tuple
    burn_in: int = 2

    def __post_init__(self):
        if not self.sigmas:
            raise ValueError("need at least one permutation")
        n = len(self.sigmas[0])
        ref = np.arange(n)
        for s in self.sigmas:
            if not np.array_equal(np.sort(np.asarray(s)), ref):
                raise ValueError("each sigma must be a permutation of range(n)")
        if not 2 <= self.burn_in <= n:
            raise ValueError(f"burn_in must be in [2, {n}], got {self.burn_in}")
        object.__setattr__(
            self, "sigmas", tuple(np.asarray(s, dtype=np.intp) for s in self.sigmas)
        )

    @property
    def K(self) -> int:
        return len(self.sigmas)

    @classmethod
    def draw(cls, plan: RngPlan, K: int, n: int, burn_in: int = 2) -> "PermutationPlan":
        if K < 1:
            raise ValueError(f"K must be >= 1, got {K}")
        sigmas = tuple(plan.stream("permutation", k).permutation(n) for k in range(K))
        return cls(sigmas=sigmas, burn_in=burn_in)


def _sequential_scores(
    data: Dataset,
    evals: np.ndarray,
    plan: PermutationPlan,
    bandwidth: float,
) -> np.ndarray:
    """Sequential-prediction score for every truncation size at once."""
    if not (np.isfinite(bandwidth) and bandwidth > 0):
        raise ValueError(f"bandwidth must be positive and finite, got {bandwidth}")
    n, J = evals.shape
    scores = np.zeros(J)
    for sigma in plan.sigmas:
        for i in range(plan.burn_in, n + 1):
            prefix = sigma[: i - 1]
            target = sigma[i - 1]
            fhat = RegressionFn(
                kind="nw",
                x=data.x[prefix],
                y=data.y[prefix],
                bandwidth=float(bandwidth),
                _shift=np.zeros(data.d),
                _scale=np.ones(data.d),
            )
            coeffs = evals.T @ fhat(data.x) / n
            row = evals[target]
            err = data.y[target] - np.cumsum(coeffs * row)
            scores += err * err
    return scores


def sequential_score(
    data: Dataset,
    basis: BasisSet,
    j_prime: int,
    plan: PermutationPlan,
    bandwidth: float,
) -> float:
    """Accumulated error of sequentially predicting permuted responses.

    For each permutation and each position i from burn_in on, a smoother
    with the given bandwidth is fit to the first i - 1 permuted points,
    projected onto the first j_prime basis elements under the
    design-averaged inner product over all n points, and the resulting
    combination predicts the i-th response; squared errors accumulate
    over positions and permutations.
    """
    if not 1 <= j_prime <= basis.J:
        raise ValueError(f"j_prime must be in [1, {basis.J}], got {j_prime}")
    if basis.n != data.n:
        raise ValueError(
            f"basis has {basis.n} rows, data has {data.n}; same design required"
        )
    return float(_sequential_scores(data, basis.evals, plan, bandwidth)[j_prime - 1])


@dataclass(frozen=True)
class BasisSearchResult:
    """Outcome of a truncation sweep: scores per size and the winner."""

    basis: BasisSet
    scores: np.ndarray
    j_opt: int

    @property
    def selected(self) -> BasisSet:
        return self.basis.take(np.arange(self.j_opt))


def select_j_opt(
    data: Dataset,
    basis: BasisSet,
    mode: str = "cv",
    plan: PermutationPlan | None = None,
    bandwidth: float | None = None,
) -> BasisSearchResult:
    """Choose how many leading elements of an ordered basis to keep.

    mode "cv" scores each truncation size by the leave-one-out stacking
    error of the least-squares fit on those columns; mode "sequential"
    uses the permuted sequential-prediction score and needs a
    PermutationPlan and a bandwidth.  Ties go to the smaller size.
    """
    if basis.n != data.n:
        raise ValueError(
            f"basis has {basis.n} rows, data has {data.n}; same design required"
        )
    if mode == "cv":
        scores = np.empty(basis.J)
        for jp in range(1, basis.J + 1):
            fit = fit_linear(basis.evals[:, :jp], data.y)
            held = loo_linear(fit, data.y)
            r = data.y - held
            scores[jp - 1] = r @ r
    elif mode == "sequential":
        if plan is None or bandwidth is None:
            raise ValueError("sequential mode needs a PermutationPlan and a bandwidth")
        scores = _sequential_scores(data, basis.evals, plan, bandwidth)
    else:
        raise ValueError(f"unknown selection mode {mode!r}")
    j_opt = int(np.argmin(scores)) + 1
    return BasisSearchResult(basis=basis, scores=scores, j_opt=j_opt)


def search_basis(
    data: Dataset,
    J: int,
    generator: str = "nw",
    plan: RngPlan | None = None,
    restarts: int = 5,
    mode: str = "cv",
    kernel_spec: KernelSpec | None = None,
    tol: float = 1e-6,
    max_rounds: int = 50,
    K: int = 5,
    burn_in: int = 2,
    domain=None,
    resolution: int = 512,
) -> BasisSearchResult:
    """Restarted basis search: generate, order, sweep; keep the best.

    Runs `restarts` independent generate-order-select passes and returns
    the result with the smallest selected score (ties keep the earliest
    restart).  The ordering reference is the same kind of regressor fit
    to the full data; its bandwidth also drives the sequential score.
    """
    if plan is None:
        raise ValueError("search_basis needs an RngPlan")
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    if domain is None:
        lo = data.x.min(axis=0)
        hi = data.x.max(axis=0)
        flat = lo == hi
        lo[flat] -= 0.5
        hi[flat] += 0.5
        domain = np.column_stack([lo, hi])

    if generator == "nw":
        bandwidth = select_bandwidth_cv(data)
        reference = nw_fit(data, bandwidth)
    else:
        if kernel_spec is None:
            kernel_spec = KernelSpec()
        bandwidth = select_bandwidth_cv(data)
        reference = gp_fit(data, kernel_spec)

    perm = None
    if mode == "sequential":
        perm = PermutationPlan.draw(plan.scoped("select"), K, data.n, burn_in)

    best = None
    for r in range(restarts):
        b = generate_orthonormal_basis(
            data, J, generator, plan.scoped("restart", r), tol, max_rounds, kernel_spec
        )
        b = order_basis(b, reference, domain, resolution)
        res = select_j_opt(data, b, mode=mode, plan=perm, bandwidth=bandwidth)
        if best is None or res.scores[res.j_opt - 1] < best.scores[best.j_opt - 1]:
            best = res
    return best
