"""Acceptance gate: one test per release criterion, one printed verdict each.

Run with `pytest tests/test_acceptance.py -v -s` to see the verdict lines;
each test computes its full check first and asserts at the end, so a FAIL
line always reaches the log before pytest reports the failure.
"""

import time
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad as scipy_quad
from scipy.stats import norm

from mstack import (
    BasisRejection,
    Dataset,
    GaussianLinearModel,
    LooMatrix,
    LossSpec,
    ModelMixture,
    RngPlan,
    convergence_experiment,
    default_mixture,
    fit_linear,
    generate_orthonormal_basis,
    gram_schmidt_empirical,
    kkt_oracle,
    loo_linear,
    loo_refit,
    polynomial_features,
    posterior_predictive,
    posterior_risk,
    solve_sum_to_m,
    solve_sum_to_one,
    solve_unconstrained,
    surface_area,
    wavy_linear_truth,
)
from mstack.cli import PipelineConfig, main, run_pipeline

DATA_CSV = Path(__file__).resolve().parent.parent / "data" / "synthetic_additive.csv"


def verdict(num, name, ok, detail):
    print(f"criterion {num:02d} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num:02d} {name}: {detail}"


def random_instance(rng):
    n = int(rng.integers(20, 201))
    J = int(rng.integers(1, 9))
    P = rng.normal(size=(n, J))
    y = rng.normal(size=n)
    return LooMatrix(P), y


def test_01_solver_oracle_equivalence():
    rng = np.random.default_rng(20250816)
    t0 = time.time()
    worst = 0.0
    for _ in range(200):
        loo, y = random_instance(rng)
        m = float(rng.uniform(-2.0, 2.0))
        while m == 0.0:
            m = float(rng.uniform(-2.0, 2.0))
        for sol, ref in (
            (solve_unconstrained(loo, y), kkt_oracle(loo, y)),
            (solve_sum_to_one(loo, y), kkt_oracle(loo, y, m=1.0)),
            (solve_sum_to_m(loo, y, m), kkt_oracle(loo, y, m=m)),
        ):
            rel = np.abs(sol.w - ref.w).max() / max(1.0, np.abs(ref.w).max())
            worst = max(worst, rel)
    dt = time.time() - t0
    verdict(
        1,
        "solver-oracle equivalence",
        worst <= 1e-8 and dt < 5.0,
        f"200 instances, max rel diff {worst:.2e}, {dt:.2f}s",
    )


def test_02_symmetric_two_predictor_example():
    p1 = np.array([1.0, 1.0, -1.0, -1.0])
    p2 = np.array([1.0, -1.0, 1.0, -1.0])
    loo = LooMatrix(np.column_stack([p1, p2]))
    y = p1 + p2
    w1 = solve_sum_to_one(loo, y).w
    w2 = solve_sum_to_m(loo, y, 2.0).w
    err = max(np.abs(w1 - 0.5).max(), np.abs(w2 - 1.0).max())
    verdict(
        2,
        "symmetric two-predictor example",
        err <= 1e-6,
        f"sum-to-one {w1}, sum-to-two {w2}, max dev {err:.2e}",
    )


def test_03_span_invariance():
    rng = np.random.default_rng(3)
    n, J = 80, 5
    P = rng.normal(size=(n, J))
    y = rng.normal(size=n)
    q0 = solve_unconstrained(LooMatrix(P), y).q
    worst = 0.0
    for _ in range(100):
        A = rng.normal(size=(J, J))
        while np.linalg.cond(A) > 1e6:
            A = rng.normal(size=(J, J))
        q1 = solve_unconstrained(LooMatrix(P @ A), y).q
        worst = max(worst, abs(q1 - q0) / max(1.0, abs(q0)))
    verdict(
        3,
        "span invariance",
        worst <= 1e-8,
        f"100 recombinations, max rel change {worst:.2e}",
    )


def test_04_drop_column_monotonicity():
    rng = np.random.default_rng(4)
    violations = 0
    worst_slack = 0.0
    for _ in range(100):
        loo, y = random_instance(rng)
        if loo.J == 1:
            continue
        q_full = solve_unconstrained(loo, y).q
        for j in range(loo.J):
            sub = LooMatrix(np.delete(loo.preds, j, axis=1))
            q_sub = solve_unconstrained(sub, y).q
            slack = q_full - q_sub
            worst_slack = max(worst_slack, slack)
            if slack > 1e-10:
                violations += 1
    verdict(
        4,
        "drop-column monotonicity",
        violations == 0,
        f"100 instances, worst q_full - q_dropped = {worst_slack:.2e}",
    )


def test_05_constraint_ordering():
    rng = np.random.default_rng(5)
    grid = np.concatenate([np.linspace(-2.0, -0.1, 10), np.linspace(0.1, 2.0, 10)])
    violations = 0
    worst = -np.inf
    for _ in range(30):
        loo, y = random_instance(rng)
        q0 = solve_unconstrained(loo, y).q
        tol = 1e-10 * max(1.0, abs(q0))
        for m in grid:
            qm = solve_sum_to_m(loo, y, float(m)).q
            worst = max(worst, q0 - qm)
            if q0 - qm > tol:
                violations += 1
    verdict(
        5,
        "unconstrained never worse",
        violations == 0,
        f"30 instances x 20 grid values, worst q_unc - q_m = {worst:.2e}",
    )


def test_06_loo_shortcut_identity():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(10, 60))
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        held = loo_linear(fit_linear(np.column_stack([np.ones(n), x]), y), y)

        def fitter(xb, yb):
            coef = fit_linear(np.column_stack([np.ones(len(yb)), xb[:, 0]]), yb).coef
            return lambda Q: coef[0] + coef[1] * Q[:, 0]

        refit = loo_refit(fitter, Dataset(x, y), k=1)
        worst = max(worst, np.abs(held - refit).max())
    # leave-k-out paths must run end to end for k in {2, 5}
    data = Dataset(np.arange(20.0), np.arange(20.0) ** 1.5)

    def fitter(xb, yb):
        coef = fit_linear(np.column_stack([np.ones(len(yb)), xb[:, 0]]), yb).coef
        return lambda Q: coef[0] + coef[1] * Q[:, 0]

    for k in (2, 5):
        out = loo_refit(fitter, data, k=k, plan=RngPlan(6))
        assert np.all(np.isfinite(out))
    verdict(
        6,
        "LOO leverage identity",
        worst <= 1e-8,
        f"50 instances, max |shortcut - refit| = {worst:.2e}; k in {{2,5}} ran",
    )


def test_07_gram_schmidt_quality_and_rejection():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        n, J = int(rng.integers(10, 80)), int(rng.integers(1, 8))
        basis = gram_schmidt_empirical(rng.normal(size=(n, J)))
        worst = max(worst, np.abs(basis.gram - np.eye(J)).max())
    rejected = 0
    for _ in range(100):
        n, J = int(rng.integers(5, 40)), int(rng.integers(2, 6))
        V = rng.normal(size=(n, J))
        dup_src = int(rng.integers(0, J - 1))
        V[:, dup_src + 1] = V[:, dup_src] * float(rng.uniform(0.5, 2.0))
        try:
            gram_schmidt_empirical(V)
        except BasisRejection:
            rejected += 1
    verdict(
        7,
        "Gram-Schmidt quality",
        worst <= 1e-8 and rejected == 100,
        f"max |gram - I| = {worst:.2e}; duplicates rejected {rejected}/100",
    )


def test_08_surface_area_oracle():
    sa_sin = surface_area(np.sin, (0.0, np.pi), resolution=10**4)
    ref, _ = scipy_quad(lambda t: np.sqrt(1.0 + np.cos(t) ** 2), 0.0, np.pi)
    sin_err = abs(sa_sin - ref)
    line_err = abs(surface_area(lambda t: 2.0 * t, (0.0, 1.0)) - np.sqrt(5.0))
    verdict(
        8,
        "surface-area oracle",
        sin_err <= 1e-4 and line_err <= 1e-12,
        f"sin vs quadrature {sin_err:.2e}; line {line_err:.2e}",
    )


def test_09_risk_formulas_vs_monte_carlo():
    rng = np.random.default_rng(9)
    N = 10**6
    worst_z = 0.0
    for _ in range(20):
        Jm = int(rng.integers(2, 4))
        models = []
        for _j in range(Jm):
            deg = int(rng.integers(0, 3))
            models.append(
                GaussianLinearModel(
                    features=polynomial_features(deg),
                    p=deg + 1,
                    sigma2=float(rng.uniform(0.3, 2.0)),
                    tau2=float(rng.uniform(0.5, 5.0)),
                )
            )
        pis = rng.dirichlet(np.ones(Jm))
        mix = ModelMixture(models=tuple(models), weights=pis)
        n_obs = int(rng.integers(4, 12))
        data = (rng.uniform(-1, 1, n_obs), rng.normal(size=n_obs))
        x_new = float(rng.uniform(-1, 1))
        comps = [posterior_predictive(mj, data, x_new) for mj in models]
        mus = np.array([c[0] for c in comps])
        sds = np.sqrt([c[1] for c in comps])
        comp = rng.choice(Jm, size=N, p=pis)
        draws = rng.normal(mus[comp], sds[comp])

        a = float(pis @ mus + rng.normal(scale=0.5))
        for loss, sample in (
            ("squared", (draws - a) ** 2),
            ("absolute", np.abs(draws - a)),
        ):
            closed = posterior_risk(mix, data, x_new, a, LossSpec(loss))
            se = sample.std() / np.sqrt(N)
            worst_z = max(worst_z, abs(closed - sample.mean()) / se)

        w = rng.dirichlet(np.ones(Jm))
        closed = posterior_risk(mix, data, x_new, w, LossSpec("logutility"))
        dens = np.zeros(N)
        for j in range(Jm):
            dens += w[j] * norm.pdf(draws, mus[j], sds[j])
        vals = -np.log(dens)
        se = vals.std() / np.sqrt(N)
        worst_z = max(worst_z, abs(closed - vals.mean()) / se)

    # single-Gaussian log risk is the differential entropy
    mix1 = ModelMixture(
        models=(
            GaussianLinearModel(polynomial_features(0), p=1, sigma2=1.0, tau2=1.0),
        ),
        weights=np.array([1.0]),
    )
    data1 = (np.zeros(4), np.array([0.5, -0.5, 1.0, 0.0]))
    _, s2 = posterior_predictive(mix1.models[0], data1, 0.0)
    ent_err = abs(
        posterior_risk(mix1, data1, 0.0, np.array([1.0]), LossSpec("logutility"))
        - 0.5 * np.log(2 * np.pi * np.e * s2)
    )
    verdict(
        9,
        "risk formulas vs Monte Carlo",
        worst_z <= 4.0 and ent_err <= 1e-6,
        f"20 configs x 3 losses, worst |z| = {worst_z:.2f}; entropy dev {ent_err:.2e}",
    )


def test_10_risk_gap_convergence():
    t0 = time.time()
    rows = []
    ok = True
    for loss in ("squared", "absolute", "logutility"):
        for pred in ("bayes", "plugin"):
            rep = convergence_experiment(
                wavy_linear_truth(),
                default_mixture(),
                w=np.array([0.5, 0.5]),
                loss=LossSpec(loss),
                predictor=pred,
                n_grid=(50, 800),
                reps=50,
                plan=RngPlan(0),
            )
            shrinks = rep.median(800) < rep.median(50)
            ok = ok and shrinks
            rows.append(
                f"{loss}/{pred} {rep.median(50):.4f}->{rep.median(800):.4f}"
            )
    dt = time.time() - t0
    verdict(
        10,
        "posterior-vs-CV gap shrinks",
        ok and dt < 600.0,
        f"median gaps n=50->800: {'; '.join(rows)}; {dt:.0f}s",
    )


def test_11_pipeline_qualitative_replication():
    assert DATA_CSV.exists(), f"shipped dataset missing: {DATA_CSV}"
    deep_seeds = 0
    interior_seeds = 0
    t0 = time.time()
    for seed in range(20):
        res = run_pipeline(PipelineConfig(seed=seed, workers=6), DATA_CSV)
        deep_vars = sum(j >= 7 for j in res.j_opt)
        if deep_vars > len(res.j_opt) / 2:
            deep_seeds += 1
        if seed < 10:
            e = res.errors
            if e[0] > e.min() < e[-1]:
                interior_seeds += 1
    dt = time.time() - t0
    verdict(
        11,
        "pipeline qualitative replication",
        deep_seeds >= 14 and interior_seeds >= 8,
        f"deep bases in {deep_seeds}/20 seeds (need 14); "
        f"interior m-minimum in {interior_seeds}/10 (need 8); {dt:.0f}s",
    )


def test_12_byte_identical_reruns(tmp_path):
    rng = np.random.default_rng(12)
    n = 60
    x1 = rng.uniform(0, 1, n)
    x2 = rng.uniform(-1, 1, n)
    y = np.sin(2 * np.pi * x1) + 0.5 * x2**2 + rng.normal(scale=0.1, size=n)
    csv = tmp_path / "d.csv"
    with open(csv, "w") as fh:
        fh.write("x1,x2,y\n")
        for row in zip(x1, x2, y):
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")

    runs = {
        "sweep": ["sweep-m", "--data", str(csv), "--J", "3", "--restarts", "1",
                  "--m-grid", "0.6:1.4:5"],
        "basis": ["gen-basis", "--data", str(csv), "--J", "3", "--restarts", "1"],
        "loo": ["loo", "--data", str(csv), "--k", "2"],
        "bayes": ["verify-bayes", "--reps", "2", "--n-grid", "20,40"],
    }
    mismatches = []
    for label, argv in runs.items():
        outs = []
        for variant in ("a", "b", "w4"):
            out = tmp_path / f"{label}_{variant}"
            extra = ["--workers", "4"] if variant == "w4" and label == "sweep" else []
            code = main(argv + ["--out-dir", str(out)] + extra)
            assert code == 0, f"{label} run failed"
            outs.append(
                {p.name: p.read_bytes() for p in sorted(out.glob("*.tsv"))}
            )
        if not (outs[0] == outs[1] == outs[2]):
            mismatches.append(label)
    verdict(
        12,
        "byte-identical reruns",
        not mismatches,
        "all TSVs identical across reruns and worker counts"
        if not mismatches
        else f"mismatched: {mismatches}",
    )
