"""
Sum-constrained stacking weights
================================

Two predictors, one response, and the question the solver answers: how
much total weight should an ensemble be allowed to spend?
"""

import numpy as np

from mstack import LooMatrix, kkt_oracle, solve_sum_to_m, solve_sum_to_one, solve_unconstrained

# A symmetric warm-up with a known answer.  Two orthogonal held-out
# prediction columns, response equal to their sum: sum-to-one must split
# the budget evenly, sum-to-two must recover the generating weights.
p1 = np.array([1.0, 1.0, -1.0, -1.0])
p2 = np.array([1.0, -1.0, 1.0, -1.0])
loo = LooMatrix(np.column_stack([p1, p2]))
y = p1 + p2

print("sum-to-one:", solve_sum_to_one(loo, y).w)   # [0.5 0.5]
print("sum-to-two:", solve_sum_to_m(loo, y, 2.0).w)  # [1. 1.]

# A rougher instance: correlated noisy predictors of a common signal.
rng = np.random.default_rng(7)
n = 400
signal = rng.normal(size=n)
preds = np.column_stack([signal + 0.6 * rng.normal(size=n) for _ in range(3)])
y = signal + 0.3 * rng.normal(size=n)
loo = LooMatrix(preds)

free = solve_unconstrained(loo, y)
print(f"\nunconstrained: w = {np.round(free.w, 3)}, error = {free.q:.2f}")

# Sweep the budget m.  The unconstrained error is a floor for every m,
# and the constrained error is smallest where the constraint plane
# passes nearest the free optimum.
grid = np.linspace(0.25, 1.75, 31)
errors = np.array([solve_sum_to_m(loo, y, m).q for m in grid])
m_opt = grid[np.argmin(errors)]
print(f"best m on the grid: {m_opt:.3f} (error {errors.min():.2f})")
assert np.all(errors >= free.q - 1e-10)

# Each closed-form solution agrees with a brute-force KKT solve.
ref = kkt_oracle(loo, y, m=float(m_opt))
assert np.allclose(solve_sum_to_m(loo, y, float(m_opt)).w, ref.w)
print("closed form matches the KKT oracle")

# Picture: constrained error against m with the unconstrained floor.
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(grid, errors, lw=1.5, label="sum-to-m error")
ax.axhline(free.q, color="gray", ls="--", lw=1, label="unconstrained floor")
ax.axvline(m_opt, color="crimson", lw=0.8)
ax.set_xlabel("total weight m")
ax.set_ylabel("stacking error")
ax.legend()
fig.tight_layout()
fig.savefig("sum_constrained_stacking.svg", metadata={"Date": None})
print("wrote sum_constrained_stacking.svg")
