import numpy as np
import pytest

from mstack import (
    Dataset,
    KernelSpec,
    default_bandwidth_grid,
    gp_fit,
    nw_fit,
    select_bandwidth_cv,
)


class TestKernelSpec:
    def test_rbf_matrix_values(self):
        spec = KernelSpec(family="rbf", lengthscale=2.0)
        K = spec.matrix(np.array([[0.0], [2.0]]), np.array([[0.0]]))
        np.testing.assert_allclose(K, [[1.0], [np.exp(-0.5)]], rtol=1e-14)

    def test_poly_matrix_values(self):
        spec = KernelSpec(family="poly", degree=2, offset=1.0)
        K = spec.matrix(np.array([[1.0], [2.0]]), np.array([[3.0]]))
        np.testing.assert_allclose(K, [[16.0], [49.0]], rtol=1e-14)

    def test_noise_clamped_to_floor(self):
        assert KernelSpec(noise=0.0).noise == pytest.approx(1e-10)
        assert KernelSpec(noise=1e-12).noise == pytest.approx(1e-10)

    def test_validation(self):
        with pytest.raises(ValueError, match="family"):
            KernelSpec(family="matern")
        with pytest.raises(ValueError, match="lengthscale"):
            KernelSpec(lengthscale=0.0)
        with pytest.raises(ValueError, match="degree"):
            KernelSpec(family="poly", degree=0)


class TestNadarayaWatson:
    def test_constant_response_reproduced_everywhere(self):
        data = Dataset(np.linspace(0, 1, 9), np.full(9, 4.0))
        fn = nw_fit(data, bandwidth=0.3)
        q = np.linspace(-2, 3, 40)
        np.testing.assert_allclose(fn(q), 4.0, rtol=1e-12)

    def test_single_anchor_returns_its_y_everywhere(self):
        fn = nw_fit((np.array([0.5]), np.array([-3.0])), bandwidth=0.2)
        np.testing.assert_allclose(fn(np.array([-10.0, 0.5, 10.0])), -3.0)

    def test_midpoint_symmetry(self):
        fn = nw_fit(Dataset(np.array([0.0, 1.0]), np.array([0.0, 1.0])), bandwidth=1.0)
        assert fn(0.5) == pytest.approx(0.5, abs=1e-14)

    def test_interpolates_at_tiny_bandwidth(self):
        x = np.array([0.0, 1.0, 2.0])
        y = np.array([3.0, -1.0, 5.0])
        fn = nw_fit(Dataset(x, y), bandwidth=1e-3)
        np.testing.assert_allclose(fn(x), y, atol=1e-10)

    def test_far_query_falls_back_to_nearest_anchor(self):
        x = np.array([0.0, 1.0])
        y = np.array([2.0, 8.0])
        fn = nw_fit(Dataset(x, y), bandwidth=1e-3)
        # at 1e6 the naive weights both underflow; the stabilised form
        # must still return the nearest anchor's value
        assert fn(1e6) == pytest.approx(8.0)
        assert fn(-1e6) == pytest.approx(2.0)

    def test_equidistant_far_query_averages_ties(self):
        x = np.array([-1.0, 1.0])
        y = np.array([0.0, 10.0])
        fn = nw_fit(Dataset(x, y), bandwidth=1e-4)
        assert fn(0.0) == pytest.approx(5.0)

    def test_predictions_within_convex_hull_of_y(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            n = int(rng.integers(5, 40))
            data = Dataset(rng.normal(size=n), rng.normal(size=n))
            fn = nw_fit(data, bandwidth=float(rng.uniform(0.01, 2.0)))
            preds = fn(rng.normal(scale=3.0, size=200))
            assert np.all(preds >= data.y.min() - 1e-9)
            assert np.all(preds <= data.y.max() + 1e-9)

    def test_scalar_query_returns_float(self):
        fn = nw_fit(Dataset(np.arange(4.0), np.arange(4.0)), bandwidth=0.5)
        assert isinstance(fn(1.2), float)

    def test_two_dim_queries(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        fn = nw_fit(Dataset(x, y), bandwidth=0.7)
        single = fn(x[3])
        batch = fn(x[:5])
        assert batch.shape == (5,)
        assert single == pytest.approx(batch[3])

    def test_consistency_on_smooth_target(self):
        # median held-out RMSE must fall as n grows on a smooth signal
        med = []
        for n in (50, 200, 800):
            errs = []
            for seed in range(10):
                rng = np.random.default_rng(seed)
                x = rng.uniform(0, 1, n)
                y = np.sin(2 * np.pi * x) + rng.normal(scale=0.1, size=n)
                data = Dataset(x, y)
                lam = select_bandwidth_cv(data)
                fn = nw_fit(data, lam)
                xt = rng.uniform(0, 1, 500)
                errs.append(np.sqrt(np.mean((fn(xt) - np.sin(2 * np.pi * xt)) ** 2)))
            med.append(np.median(errs))
        assert med[0] > med[1] > med[2]


class TestBandwidthSelection:
    def test_grid_of_one_returns_that_value(self):
        data = Dataset(np.arange(5.0), np.arange(5.0))
        assert select_bandwidth_cv(data, grid=[0.37]) == pytest.approx(0.37)

    def test_default_grid_spans_two_decades_of_median_distance(self):
        x = np.arange(10.0)
        grid = default_bandwidth_grid(x)
        assert len(grid) == 25
        med = np.median([abs(a - b) for i, a in enumerate(x) for b in x[i + 1 :]])
        assert grid[0] == pytest.approx(0.01 * med, rel=1e-12)
        assert grid[-1] == pytest.approx(10.0 * med, rel=1e-12)

    def test_smooth_signal_selects_interior_value(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 1, 100)
        data = Dataset(x, np.sin(2 * np.pi * x))
        grid = default_bandwidth_grid(data.x)
        lam = select_bandwidth_cv(data, grid=grid)
        assert grid[0] < lam < grid[-1]

    def test_pure_noise_selects_largest_value(self):
        # no structure to track: heavy smoothing wins
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 1, 100)
        y = rng.normal(size=100)
        data = Dataset(x, y)
        grid = default_bandwidth_grid(data.x)
        lam = select_bandwidth_cv(data, grid=grid)
        assert lam == pytest.approx(grid[-1])

    def test_ties_break_toward_larger(self):
        # n=2: each LOO prediction is the other anchor's y regardless of the
        # bandwidth, so every grid value ties and the largest must win
        data = Dataset(np.array([0.0, 1.0]), np.array([3.0, 7.0]))
        lam = select_bandwidth_cv(data, grid=[0.1, 1.0, 10.0])
        assert lam == pytest.approx(10.0)

    def test_single_anchor_rejected(self):
        with pytest.raises(ValueError, match="undefined LOO predictions"):
            select_bandwidth_cv((np.array([0.0]), np.array([1.0])))

    def test_empty_grid_rejected(self):
        data = Dataset(np.arange(4.0), np.arange(4.0))
        with pytest.raises(ValueError, match="grid"):
            select_bandwidth_cv(data, grid=[])


class TestGaussianProcess:
    def test_huge_noise_shrinks_to_near_zero(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(-1, 1, 40)
        y = rng.normal(size=40) + 2.0
        spec = KernelSpec(family="rbf", lengthscale=0.5, noise=1e6 * float(np.var(y)))
        fn = gp_fit(Dataset(x, y), spec)
        assert np.max(np.abs(fn(x))) <= 0.01 * np.max(np.abs(y))

    def test_single_anchor_interpolates(self):
        fn = gp_fit(
            (np.array([0.0]), np.array([1.0])),
            KernelSpec(family="rbf", lengthscale=1.0, noise=1e-10),
        )
        assert fn(0.0) == pytest.approx(1.0, abs=1e-6)

    def test_tiny_noise_interpolates_anchors(self):
        rng = np.random.default_rng(4)
        x = np.linspace(0, 1, 7)
        y = rng.normal(size=7)
        fn = gp_fit(Dataset(x, y), KernelSpec(family="rbf", lengthscale=0.15, noise=1e-10))
        np.testing.assert_allclose(fn(x), y, atol=1e-6)

    def test_matches_dense_solve(self):
        # five anchors, moderate noise: compare against a direct linear solve
        x = np.array([0.0, 0.3, 0.9, 1.4, 2.0])
        y = np.array([1.0, -0.5, 0.2, 2.0, -1.0])
        ls, noise = 0.6, 0.05
        fn = gp_fit(Dataset(x, y), KernelSpec(family="rbf", lengthscale=ls, noise=noise))
        D2 = (x[:, None] - x[None, :]) ** 2
        K = np.exp(-D2 / (2 * ls**2))
        alpha = np.linalg.solve(K + noise * np.eye(5), y)
        xq = np.linspace(-0.5, 2.5, 50)
        Kq = np.exp(-((xq[:, None] - x[None, :]) ** 2) / (2 * ls**2))
        np.testing.assert_allclose(fn(xq), Kq @ alpha, rtol=1e-9, atol=1e-9)

    def test_poly_kernel_fits_quadratic(self):
        x = np.linspace(-1, 1, 12)
        y = 1.0 + 2.0 * x + 3.0 * x**2
        spec = KernelSpec(family="poly", degree=2, offset=1.0, noise=1e-8)
        fn = gp_fit(Dataset(x, y), spec)
        xq = np.linspace(-1, 1, 30)
        np.testing.assert_allclose(fn(xq), 1.0 + 2.0 * xq + 3.0 * xq**2, atol=1e-4)

    def test_multivariate_standardization_invariance(self):
        # rescaling one coordinate must not change the fit when anchors are
        # standardized internally
        rng = np.random.default_rng(7)
        x = rng.normal(size=(25, 2))
        y = rng.normal(size=25)
        spec = KernelSpec(family="rbf", lengthscale=1.0, noise=0.1)
        fn_a = gp_fit(Dataset(x, y), spec)
        scaled = x.copy()
        scaled[:, 1] *= 100.0
        fn_b = gp_fit(Dataset(scaled, y), spec)
        q = rng.normal(size=(10, 2))
        q_scaled = q.copy()
        q_scaled[:, 1] *= 100.0
        np.testing.assert_allclose(fn_a(q), fn_b(q_scaled), rtol=1e-9)
