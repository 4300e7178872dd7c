"""Shipped synthetic problems.

make_additive_dataset builds the six-variable additive benchmark used by
the pipeline tests and demos: correlated explanatory variables, each
contributing a multi-scale smooth term, plus Gaussian noise.  The
correlation makes the per-variable predictors overlap, which is what
pushes the best weight total toward one; the fine-scale structure is
what rewards deep bases.

wavy_linear_truth and default_mixture configure the Bayes-risk
convergence experiment: component models that nearly contain the truth,
up to a small smooth departure.
"""

from __future__ import annotations

import numpy as np

from .core import Dataset, RngPlan
from .bayesharness import GaussianLinearModel, ModelMixture, polynomial_features

__all__ = [
    "ADDITIVE_COLUMNS",
    "additive_terms",
    "make_additive_dataset",
    "write_additive_csv",
    "wavy_linear_truth",
    "default_mixture",
]

ADDITIVE_COLUMNS = ("x1", "x2", "x3", "x4", "x5", "x6")


def additive_terms():
    """The six per-variable contribution functions, in column order."""
    return (
        lambda t: 1.00 * np.sin(2.2 * t) + 0.50 * np.sin(6.1 * t),
        lambda t: 0.90 * np.cos(1.7 * t) + 0.50 * np.sin(5.3 * t + 0.4),
        lambda t: 1.10 * np.tanh(1.5 * t) + 0.40 * np.sin(4.7 * t),
        lambda t: 0.80 * np.sin(3.1 * t + 1.0) + 0.50 * np.cos(7.9 * t),
        lambda t: 1.00 * np.cos(2.9 * t + 0.5) + 0.45 * np.sin(6.7 * t + 0.2),
        lambda t: 0.90 * np.sin(1.3 * t) + 0.50 * np.cos(5.9 * t + 1.3),
    )


def make_additive_dataset(
    n: int = 1000,
    seed: int = 0,
    noise: float = 0.4,
    rho: float = 0.95,
) -> Dataset:
    """Six correlated explanatory variables with an additive response.

    Each x_v = rho * z + sqrt(1 - rho^2) * eps_v for a shared standard
    normal factor z, so any one variable carries a shadow of the others'
    contributions.  y = sum_v g_v(x_v) + noise * eps.
    """
    rng = RngPlan(seed).stream("dataset", n)
    z = rng.standard_normal(n)
    x = rho * z[:, None] + np.sqrt(1.0 - rho**2) * rng.standard_normal((n, 6))
    y = sum(g(x[:, v]) for v, g in enumerate(additive_terms()))
    y = y + noise * rng.standard_normal(n)
    return Dataset(x, y)


def write_additive_csv(path, data: Dataset | None = None) -> None:
    """Write the additive benchmark in the header-row CSV layout the CLI reads.

    Floats go out at 17 significant digits, so regenerating the file from
    the same Dataset is byte-stable.
    """
    if data is None:
        data = make_additive_dataset()
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(ADDITIVE_COLUMNS + ("y",)) + "\n")
        for row, yv in zip(data.x, data.y):
            cells = [format(v, ".17g") for v in row] + [format(yv, ".17g")]
            fh.write(",".join(cells) + "\n")


def wavy_linear_truth(
    intercept: float = 1.0,
    slope: float = 0.5,
    wiggle: float = 0.1,
    freq: float = 3.0,
    noise_sd: float = 1.0,
):
    """Truth generator for the convergence experiment.

    Mean intercept + slope * x + wiggle * sin(freq * x): a line plus a
    small smooth departure, so no polynomial component model contains it
    exactly, with Gaussian noise of the given standard deviation.
    Returns a callable truth(x, rng) -> y.
    """

    def truth(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        t = x[:, 0] if x.ndim == 2 else x
        mean = intercept + slope * t + wiggle * np.sin(freq * t)
        return mean + noise_sd * rng.standard_normal(t.shape[0])

    return truth


def default_mixture() -> ModelMixture:
    """Two nested polynomial components with unit noise and a flat-ish prior."""
    linear = GaussianLinearModel(
        features=polynomial_features(1), p=2, sigma2=1.0, tau2=10.0, label="linear"
    )
    quadratic = GaussianLinearModel(
        features=polynomial_features(2), p=3, sigma2=1.0, tau2=10.0, label="quadratic"
    )
    return ModelMixture(models=(linear, quadratic), weights=np.array([0.5, 0.5]))
