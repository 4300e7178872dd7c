"""
Data-driven orthonormal bases
=============================

Bootstrap resamples fit by a kernel smoother become basis candidates;
empirical Gram-Schmidt turns the survivors into an orthonormal system,
ordered from flat to wiggly, and cross-validation picks how many to keep.
"""

import numpy as np

from mstack import (
    Dataset,
    PermutationPlan,
    RngPlan,
    generate_orthonormal_basis,
    nw_fit,
    order_basis,
    search_basis,
    select_bandwidth_cv,
    sequential_score,
    surface_area,
)

rng = np.random.default_rng(0)
n = 80
x = np.sort(rng.uniform(0, 1, n))
y = np.sin(2 * np.pi * x) + 0.15 * rng.normal(size=n)
data = Dataset(x, y)

# J orthonormal elements from bootstrap + Nadaraya-Watson + Gram-Schmidt.
basis = generate_orthonormal_basis(data, J=6, plan=RngPlan(0))
gram_dev = np.abs(basis.gram - np.eye(6)).max()
print(f"gram deviation from identity: {gram_dev:.2e}")

# Ordering puts elements whose graph size is closest to a reference
# smoother's first, so the leading columns carry the data-like shapes.
reference = nw_fit(data, select_bandwidth_cv(data))
ordered = order_basis(basis, reference, ((0.0, 1.0),))
ref_area = surface_area(reference, ((0.0, 1.0),))
gaps = [abs(surface_area(e, ((0.0, 1.0),)) - ref_area) for e in ordered.elements]
print("reference surface area:", round(ref_area, 3))
print("distance to reference:", np.round(gaps, 3))
assert gaps == sorted(gaps)

# Truncation choice: search over restarts, score prefixes by CV.
result = search_basis(data, J=6, plan=RngPlan(0), restarts=3)
print(f"selected j_opt = {result.j_opt} of 6")

# The sequential alternative scores permuted one-step-ahead prediction.
seq = search_basis(data, J=6, plan=RngPlan(0), restarts=3, mode="sequential", K=5)
print(f"sequential pick: j_opt = {seq.j_opt}")

# Scores are prefix errors over fixed permutations; later elements must
# earn their keep against the same draws.
perms = PermutationPlan.draw(RngPlan(1), K=5, n=data.n)
scores = [
    sequential_score(data, result.basis, j, perms, bandwidth=0.1)
    for j in range(1, result.basis.J + 1)
]
print("prefix scores:", np.round(scores, 3))
