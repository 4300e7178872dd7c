"""Empirical check that cross-validated risk tracks posterior risk.

Small conjugate Gaussian linear models with fixed noise and prior scale
are combined into a mixture; for a fixed weight vector the posterior risk
of the stacked action has closed forms (squared, absolute) or a 1-d
quadrature (log utility), while the cross-validated risk is computed by
honest leave-one-out refits.  convergence_experiment measures the gap
between the two over simulated datasets of growing size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.integrate
import scipy.linalg
from scipy.stats import norm

from .core import Dataset, RngPlan

__all__ = [
    "GaussianLinearModel",
    "ModelMixture",
    "LossSpec",
    "GapReport",
    "polynomial_features",
    "posterior_predictive",
    "bayes_point_predictor",
    "plugin_point_predictor",
    "posterior_risk",
    "cv_risk",
    "convergence_experiment",
]


def polynomial_features(degree: int) -> Callable[[np.ndarray], np.ndarray]:
    """Feature map x -> (1, x, ..., x^degree) for univariate designs."""
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")

    def features(x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, 0]
        return np.vander(np.atleast_1d(x), degree + 1, increasing=True)

    return features


@dataclass(frozen=True)
class GaussianLinearModel:
    """Conjugate Gaussian regression: y = features(x) @ beta + noise.

    noise variance sigma2 is known and fixed; beta has the isotropic
    normal prior with variance tau2 per coordinate.  p is the feature
    dimension, label a display name.
    """

    features: Callable[[np.ndarray], np.ndarray]
    p: int
    sigma2: float
    tau2: float
    label: str = ""

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not (np.isfinite(self.tau2) and self.tau2 > 0):
            raise ValueError(f"tau2 must be positive, got {self.tau2}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")

    def phi(self, x) -> np.ndarray:
        out = np.asarray(self.features(x), dtype=np.float64)
        if out.ndim == 1:
            out = out[None, :]
        if out.shape[1] != self.p:
            raise ValueError(
                f"feature map returned {out.shape[1]} columns, model declares p={self.p}"
            )
        return out


@dataclass(frozen=True)
class ModelMixture:
    """Component models with prior probabilities (positive, summing to one)."""

    models: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] != len(self.models):
            raise ValueError("need one prior weight per model")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("prior weights must be positive")
        if abs(w.sum() - 1.0) > 1e-10:
            raise ValueError(f"prior weights sum to {w.sum()!r}, expected 1")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def J(self) -> int:
        return len(self.models)


@dataclass(frozen=True)
class LossSpec:
    """One of the three supported losses: squared, absolute, logutility."""

    kind: str

    def __post_init__(self):
        if self.kind not in ("squared", "absolute", "logutility"):
            raise ValueError(f"unknown loss {self.kind!r}")

    @property
    def pointwise(self) -> bool:
        return self.kind in ("squared", "absolute")


def _as_xy(data):
    """Accept a Dataset, an (x, y) pair, or None (no observations)."""
    if data is None:
        return None, None
    if isinstance(data, Dataset):
        return data.x, data.y
    x, y = data
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if y.shape[0] != x.shape[0]:
        raise ValueError(f"x has {x.shape[0]} rows, y has {y.shape[0]}")
    return x, y


def _posterior_moments(model, A, b):
    """Posterior mean and covariance from accumulated moments
    A = Phi'Phi and b = Phi'y."""
    M = A / model.sigma2 + np.eye(model.p) / model.tau2
    cho = scipy.linalg.cho_factor(M)
    beta = scipy.linalg.cho_solve(cho, b / model.sigma2)
    return beta, cho


def posterior_predictive(model: GaussianLinearModel, data, x_new):
    """Mean and variance of the model's predictive distribution at x_new.

    data may be a Dataset, an (x, y) pair, or None for the prior
    predictive (zero observations).

    Returns
    -------
    (float, float)
        mu = phi(x_new) @ posterior mean of beta,
        s2 = sigma2 + phi(x_new) @ posterior covariance @ phi(x_new).
    """
    x, y = _as_xy(data)
    if x is None:
        A = np.zeros((model.p, model.p))
        b = np.zeros(model.p)
    else:
        Phi = model.phi(x)
        A = Phi.T @ Phi
        b = Phi.T @ y
    beta, cho = _posterior_moments(model, A, b)
    phi = model.phi(x_new)[0]
    mu = float(phi @ beta)
    s2 = model.sigma2 + float(phi @ scipy.linalg.cho_solve(cho, phi))
    return mu, s2


def bayes_point_predictor(model: GaussianLinearModel, data, x_new) -> float:
    """Posterior predictive mean at x_new."""
    mu, _ = posterior_predictive(model, data, x_new)
    return mu


def plugin_point_predictor(model: GaussianLinearModel, data, x_new) -> float:
    """Prediction at x_new from the least-squares (maximum likelihood) fit.

    Requires strictly more observations than features.
    """
    x, y = _as_xy(data)
    if x is None or x.shape[0] <= model.p:
        n = 0 if x is None else x.shape[0]
        raise ValueError(f"plug-in fit needs n > p, got n={n}, p={model.p}")
    Phi = model.phi(x)
    beta, *_ = np.linalg.lstsq(Phi, y, rcond=None)
    return float(model.phi(x_new)[0] @ beta)


def _component_predictives(mixture, data, x_new):
    return np.array(
        [posterior_predictive(mj, data, x_new) for mj in mixture.models]
    )


def _absolute_moment(mu: float, s2: float, a: float) -> float:
    """E|Z - a| for Z ~ Normal(mu, s2)."""
    s = math.sqrt(s2)
    d = (a - mu) / s
    return s * math.sqrt(2.0 / math.pi) * math.exp(-0.5 * d * d) + (a - mu) * (
        2.0 * norm.cdf(d) - 1.0
    )


def posterior_risk(
    mixture: ModelMixture,
    data,
    x_new,
    action,
    loss: LossSpec,
    action_densities: Sequence[tuple] | None = None,
) -> float:
    """Expected loss of the action under the posterior predictive at x_new.

    The predictive is the prior-weighted mixture of the component
    predictives.  For squared and absolute losses the action is a real
    number and the risk is in closed form.  For logutility the action is
    a weight vector over component densities and the risk is the
    quadrature of -log(sum_j w_j p_j(t)) against the predictive; by
    default p_j are the component posterior predictives, but explicit
    (mean, variance) pairs may be passed (e.g. plug-in densities).  A
    weight vector not summing to one is integrated as given, without
    normalization.
    """
    comps = _component_predictives(mixture, data, x_new)
    mus, s2s = comps[:, 0], comps[:, 1]
    pis = mixture.weights

    if loss.kind == "squared":
        a = float(action)
        return float(np.sum(pis * (s2s + (mus - a) ** 2)))
    if loss.kind == "absolute":
        a = float(action)
        return float(
            sum(pi * _absolute_moment(mu, s2, a) for pi, mu, s2 in zip(pis, mus, s2s))
        )

    w = np.asarray(action, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != mixture.J:
        raise ValueError(f"logutility action must be a ({mixture.J},) weight vector")
    if action_densities is None:
        amus, as2s = mus, s2s
    else:
        dens = np.asarray(action_densities, dtype=np.float64)
        amus, as2s = dens[:, 0], dens[:, 1]
    asds = np.sqrt(as2s)
    sds = np.sqrt(s2s)

    def integrand(t):
        mix = np.sum(pis * norm.pdf(t, mus, sds))
        act = np.sum(w * norm.pdf(t, amus, asds))
        if act <= 0.0:
            raise ValueError(f"logutility action density is not positive at t={t}")
        return -math.log(act) * mix

    lo = float(np.min(np.concatenate([mus - 10 * sds, amus - 10 * asds])))
    hi = float(np.max(np.concatenate([mus + 10 * sds, amus + 10 * asds])))
    value, abserr = scipy.integrate.quad(integrand, lo, hi, epsabs=1e-8, limit=200)
    if not np.isfinite(value) or abserr > 1e-6:
        raise RuntimeError(
            f"logutility quadrature did not converge (estimate {value}, error {abserr})"
        )
    return float(value)


def cv_risk(
    models: Sequence[GaussianLinearModel],
    data,
    w: np.ndarray,
    loss: LossSpec,
    predictor: str = "bayes",
) -> float:
    """Leave-one-out risk of the stacked action: (1/n) sum_i loss(y_i, a(y_-i)).

    Point losses compare y_i against sum_j w_j * (model j refit without
    row i, evaluated at x_i); logutility scores -log of the weighted
    predictive density of y_i given the other rows.  predictor selects
    Bayes posterior-predictive refits or plug-in least-squares refits
    (the latter with the model's known noise variance as the density
    scale for logutility).
    """
    if predictor not in ("bayes", "plugin"):
        raise ValueError(f"unknown predictor kind {predictor!r}")
    x, y = _as_xy(data)
    if x is None or x.shape[0] < 2:
        raise ValueError("cv_risk needs at least two rows")
    n = x.shape[0]
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != len(models):
        raise ValueError("need one weight per model")

    mus = np.empty((n, len(models)))
    s2s = np.empty((n, len(models)))
    for j, model in enumerate(models):
        Phi = model.phi(x)
        A = Phi.T @ Phi
        b = Phi.T @ y
        if predictor == "plugin" and n - 1 <= model.p:
            raise ValueError(
                f"plug-in refits need n - 1 > p, got n={n}, p={model.p}"
            )
        for i in range(n):
            phi = Phi[i]
            Ai = A - np.outer(phi, phi)
            bi = b - phi * y[i]
            if predictor == "bayes":
                beta, cho = _posterior_moments(model, Ai, bi)
                mus[i, j] = phi @ beta
                s2s[i, j] = model.sigma2 + phi @ scipy.linalg.cho_solve(cho, phi)
            else:
                beta = scipy.linalg.solve(Ai, bi, assume_a="sym")
                mus[i, j] = phi @ beta
                s2s[i, j] = model.sigma2

    if loss.kind == "squared":
        r = y - mus @ w
        return float(r @ r) / n
    if loss.kind == "absolute":
        return float(np.abs(y - mus @ w).sum()) / n
    dens = np.sum(w * norm.pdf(y[:, None], mus, np.sqrt(s2s)), axis=1)
    if np.any(dens <= 0):
        raise ValueError("logutility weights give a non-positive predictive density")
    return float(-np.log(dens).sum()) / n


@dataclass(frozen=True)
class GapReport:
    """Per-n samples of |posterior risk - CV risk| from one experiment."""

    ns: tuple
    gaps: np.ndarray  # shape (len(ns), reps)
    loss: str
    predictor: str

    def median(self, n: int) -> float:
        return float(np.median(self.gaps[self.ns.index(n)]))

    def quantile(self, n: int, q: float) -> float:
        return float(np.quantile(self.gaps[self.ns.index(n)], q))

    def rms(self, n: int) -> float:
        g = self.gaps[self.ns.index(n)]
        return float(np.sqrt(np.mean(g * g)))

    def summary_rows(self):
        """(n, median, q90, rms) per sample size, in grid order."""
        return [
            (n, self.median(n), self.quantile(n, 0.9), self.rms(n)) for n in self.ns
        ]

    def to_rows(self):
        """(n, rep, gap) triples, grid-major then replicate order."""
        out = []
        for i, n in enumerate(self.ns):
            for rep, gap in enumerate(self.gaps[i]):
                out.append((n, rep, float(gap)))
        return out


def convergence_experiment(
    truth: Callable[[np.ndarray, np.random.Generator], np.ndarray],
    mixture: ModelMixture,
    w: np.ndarray,
    loss: LossSpec,
    predictor: str = "bayes",
    n_grid: Sequence[int] = (50, 200, 800),
    reps: int = 50,
    plan: RngPlan | None = None,
    box: tuple = (-1.0, 1.0),
    x_dim: int = 1,
) -> GapReport:
    """Gap between posterior risk and CV risk across sample sizes.

    For each n in n_grid and each replicate: design points are drawn
    uniformly on the box and fixed, truth(x, rng) generates responses, a
    fresh x_new is drawn, and the absolute difference between the
    posterior risk of the stacked action at x_new and the leave-one-out
    CV risk is recorded.  Streams are labelled by (n, replicate), so the
    report is identical however replicates are scheduled.
    """
    if plan is None:
        raise ValueError("convergence_experiment needs an RngPlan")
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    w = np.asarray(w, dtype=np.float64)
    lo, hi = box
    ns = tuple(int(n) for n in n_grid)

    gaps = np.empty((len(ns), reps))
    for gi, n in enumerate(ns):
        for rep in range(reps):
            rng = plan.stream("simulation", n, rep)
            x = rng.uniform(lo, hi, size=(n, x_dim))
            y = truth(x, rng)
            x_new = rng.uniform(lo, hi, size=x_dim)
            data = (x, y)

            if loss.pointwise:
                point = (
                    bayes_point_predictor
                    if predictor == "bayes"
                    else plugin_point_predictor
                )
                a = float(
                    np.dot(w, [point(mj, data, x_new) for mj in mixture.models])
                )
                pr = posterior_risk(mixture, data, x_new, a, loss)
            else:
                if predictor == "bayes":
                    dens = None
                else:
                    dens = [
                        (plugin_point_predictor(mj, data, x_new), mj.sigma2)
                        for mj in mixture.models
                    ]
                pr = posterior_risk(
                    mixture, data, x_new, w, loss, action_densities=dens
                )
            cr = cv_risk(mixture.models, data, w, loss, predictor)
            gaps[gi, rep] = abs(pr - cr)
    return GapReport(ns=ns, gaps=gaps, loss=loss.kind, predictor=predictor)
