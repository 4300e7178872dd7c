"""
Posterior risk, three ways
==========================

Closed-form posterior risks for squared, absolute, and log-density loss,
checked against brute-force Monte Carlo, then the convergence of
cross-validated risk toward posterior risk as data grows.
"""

import numpy as np
from scipy.stats import norm

from mstack import (
    LossSpec,
    RngPlan,
    convergence_experiment,
    default_mixture,
    posterior_predictive,
    posterior_risk,
    wavy_linear_truth,
)

# A two-component mixture conditioned on a handful of observations.
mix = default_mixture()
rng = np.random.default_rng(1)
data = (rng.uniform(-1, 1, 8), rng.normal(size=8))
x_new = 0.3

mus, s2s = zip(*(posterior_predictive(m, data, x_new) for m in mix.models))
print("component predictive means:", np.round(mus, 4))

# Monte Carlo from the same predictive mixture.
N = 200_000
comp = rng.choice(mix.J, size=N, p=mix.weights)
draws = rng.normal(np.array(mus)[comp], np.sqrt(np.array(s2s))[comp])

a = 0.5  # an arbitrary point action
for kind, sample in (
    ("squared", (draws - a) ** 2),
    ("absolute", np.abs(draws - a)),
):
    closed = posterior_risk(mix, data, x_new, a, LossSpec(kind))
    print(f"{kind:>9}: closed {closed:.5f} vs MC {sample.mean():.5f}")

# Log-utility scores a density, here the weighted component mixture.
w = np.array([0.5, 0.5])
closed = posterior_risk(mix, data, x_new, w, LossSpec("logutility"))
dens = sum(
    w[j] * norm.pdf(draws, mus[j], np.sqrt(s2s[j])) for j in range(mix.J)
)
print(f"logutility: closed {closed:.5f} vs MC {(-np.log(dens)).mean():.5f}")

# Does cross-validated risk approach posterior risk?  Median absolute gap
# per sample size over independent replicates, for a truth slightly
# outside both component models.
report = convergence_experiment(
    wavy_linear_truth(),
    mix,
    w=w,
    loss=LossSpec("squared"),
    n_grid=(50, 200, 800),
    reps=20,
    plan=RngPlan(0),
)
print("\n  n    median gap")
for n, med, _q90, _rms in report.summary_rows():
    print(f"{n:>4}    {med:.4f}")
