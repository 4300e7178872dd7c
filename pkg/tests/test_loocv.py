import numpy as np
import pytest

from mstack import (
    Dataset,
    RngPlan,
    SingularSystemError,
    assemble_loo_matrix,
    fit_linear,
    fold_schedule,
    loo_linear,
    loo_refit,
)


def linear_fitter(xb, yb):
    coef = fit_linear(np.column_stack([np.ones(len(yb)), xb[:, 0]]), yb).coef
    return lambda Q: coef[0] + coef[1] * Q[:, 0]


def intercept_fitter(xb, yb):
    mean = float(np.mean(yb))
    return lambda Q: np.full(Q.shape[0], mean)


class TestFitLinear:
    def test_intercept_only_gives_mean_and_uniform_leverage(self):
        y = np.array([1.0, 2.0, 6.0])
        fit = fit_linear(np.ones((3, 1)), y)
        np.testing.assert_allclose(fit.fitted, 3.0)
        np.testing.assert_allclose(fit.leverages, 1.0 / 3.0, rtol=1e-14)

    def test_exact_line_has_zero_residuals(self):
        x = np.arange(5.0)
        y = 2.0 + 0.5 * x
        fit = fit_linear(np.column_stack([np.ones(5), x]), y)
        np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-13)
        np.testing.assert_allclose(fit.coef, [2.0, 0.5], rtol=1e-13)

    def test_hand_normal_equations(self):
        # n=4 line fit: x = (0,1,2,3), y = (0,1,1,2)
        # slope = cov/var = 0.6, intercept = mean(y) - slope*mean(x) = 0.1
        x = np.array([0.0, 1.0, 2.0, 3.0])
        y = np.array([0.0, 1.0, 1.0, 2.0])
        fit = fit_linear(np.column_stack([np.ones(4), x]), y)
        np.testing.assert_allclose(fit.coef, [0.1, 0.6], rtol=1e-13)

    def test_invariants_on_random_designs(self):
        rng = np.random.default_rng(0)
        for _ in range(15):
            n, p = int(rng.integers(5, 40)), int(rng.integers(1, 4))
            X = np.column_stack([np.ones(n), rng.normal(size=(n, p))])
            y = rng.normal(size=n)
            fit = fit_linear(X, y)
            np.testing.assert_allclose(fit.fitted + fit.residuals, y, rtol=1e-12)
            assert fit.leverages.sum() == pytest.approx(p + 1, rel=1e-8)
            assert np.all(fit.leverages >= 0.0) and np.all(fit.leverages <= 1.0)

    def test_collinear_design_rejected(self):
        X = np.column_stack([np.ones(6), np.ones(6)])
        with pytest.raises(SingularSystemError):
            fit_linear(X, np.arange(6.0))

    def test_square_design_rejected(self):
        with pytest.raises(ValueError, match="more rows than columns"):
            fit_linear(np.eye(3), np.ones(3))


class TestLooLinear:
    def test_intercept_only_hand_value(self):
        # y = (0, 0, 3): held-out prediction for the last point is mean(0, 0) = 0
        y = np.array([0.0, 0.0, 3.0])
        held = loo_linear(fit_linear(np.ones((3, 1)), y), y)
        np.testing.assert_allclose(held, [1.5, 1.5, 0.0], atol=1e-12)

    def test_zero_residual_returns_y(self):
        x = np.arange(6.0)
        y = 1.0 - 2.0 * x
        held = loo_linear(fit_linear(np.column_stack([np.ones(6), x]), y), y)
        np.testing.assert_allclose(held, y, atol=1e-11)

    def test_matches_honest_refits(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            n = int(rng.integers(8, 30))
            x = rng.normal(size=n)
            y = rng.normal(size=n)
            X = np.column_stack([np.ones(n), x])
            held = loo_linear(fit_linear(X, y), y)
            refit = loo_refit(linear_fitter, Dataset(x, y), k=1)
            np.testing.assert_allclose(held, refit, rtol=1e-9, atol=1e-9)

    def test_loo_error_at_least_in_sample(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=20)
        y = rng.normal(size=20)
        fit = fit_linear(np.column_stack([np.ones(20), x]), y)
        held = loo_linear(fit, y)
        assert np.all(np.abs(y - held) >= np.abs(fit.residuals) - 1e-15)

    def test_leverage_one_rejected(self):
        # x = (0, 0, 1): the lone distinct point determines the slope on its
        # own, so its leverage is exactly 1 and the shortcut must refuse
        x = np.array([0.0, 0.0, 1.0])
        y = np.array([1.0, 2.0, 3.0])
        fit = fit_linear(np.column_stack([np.ones(3), x]), y)
        with pytest.raises(ValueError, match="leverage"):
            loo_linear(fit, y)


class TestLooRefit:
    def test_leave_two_out_hand_instance(self):
        # folds {0,1} and {2,3} with intercept fits: predictions swap means
        x = np.arange(4.0)
        y = np.array([1.0, 1.0, 3.0, 3.0])
        schedule = [np.array([0, 1]), np.array([2, 3])]
        out = loo_refit(intercept_fitter, Dataset(x, y), schedule=schedule)
        np.testing.assert_allclose(out, [3.0, 3.0, 1.0, 1.0])

    def test_leave_one_out_intercept_means(self):
        y = np.array([0.0, 3.0, 6.0])
        out = loo_refit(intercept_fitter, Dataset(np.arange(3.0), y), k=1)
        np.testing.assert_allclose(out, [4.5, 3.0, 1.5])

    def test_seeded_schedule_is_deterministic(self):
        data = Dataset(np.arange(10.0), np.arange(10.0) ** 2)
        plan = RngPlan(3)
        a = loo_refit(linear_fitter, data, k=3, plan=plan)
        b = loo_refit(linear_fitter, data, k=3, plan=plan)
        np.testing.assert_array_equal(a, b)

    def test_requires_plan_for_k_above_one(self):
        data = Dataset(np.arange(6.0), np.arange(6.0))
        with pytest.raises(ValueError, match="RngPlan"):
            loo_refit(linear_fitter, data, k=2)

    def test_schedule_must_cover(self):
        data = Dataset(np.arange(4.0), np.arange(4.0))
        with pytest.raises(ValueError, match="cover"):
            loo_refit(intercept_fitter, data, schedule=[np.array([0, 1])])
        with pytest.raises(ValueError, match="repeats"):
            loo_refit(
                intercept_fitter,
                data,
                schedule=[np.array([0, 1]), np.array([1, 2, 3])],
            )


class TestFoldSchedule:
    def test_k_one_is_identity(self):
        sched = fold_schedule(4, 1)
        assert [int(b[0]) for b in sched] == [0, 1, 2, 3]

    def test_blocks_partition_indices(self):
        sched = fold_schedule(11, 3, RngPlan(0))
        flat = np.concatenate(sched)
        assert sorted(flat.tolist()) == list(range(11))
        assert [len(b) for b in sched] == [3, 3, 3, 2]

    def test_bad_k(self):
        with pytest.raises(ValueError, match="fold size"):
            fold_schedule(4, 5, RngPlan(0))


class TestAssemble:
    def test_stacks_columns_in_order(self):
        a = np.array([1.0, 2.0])
        b = np.array([3.0, 4.0])
        lm = assemble_loo_matrix([a, b], k=2)
        np.testing.assert_array_equal(lm.preds, [[1.0, 3.0], [2.0, 4.0]])
        assert lm.k == 2

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError, match="equal length"):
            assemble_loo_matrix([np.ones(3), np.ones(4)])

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="at least one"):
            assemble_loo_matrix([])
