import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from tvqmle.estimate import CovEstimate, fit_curve, fit_local, preliminary_init, sandwich_cov
from tvqmle.exceptions import InsufficientReplications
from tvqmle.inference import (
    Band,
    SelectionMatrix,
    analytic_band_quantile,
    band_from_fit,
    bootstrap_quantile,
    combined_weights,
    constancy_test,
    interior_grid,
    multiplier_sup,
    pointwise_ci,
    psd_sqrt,
    scb,
)
from tvqmle.kernels import fourth_order_moment, kernel_derivative, weight_matrix
from tvqmle.simulate import simulate_dgp


def zero_band(center):
    center = np.asarray(center, dtype=float)[:, None]
    G = center.shape[0]
    return Band(np.linspace(0.3, 0.7, G), center, 1.7, np.zeros((G, 1, 1)), 0.05, 100, 0.3)


@pytest.fixture(scope="module")
def dgp1_curve(dgp1_spec):
    X = simulate_dgp(dgp1_spec, 1000, 8)
    grid = np.linspace(0.3, 0.7, 9)
    curve = fit_curve(dgp1_spec.model, X, grid, 0.3)
    covs = [sandwich_cov(dgp1_spec.model, X, t, 0.3, f.theta) for t, f in zip(grid, curve.fits)]
    return X, curve, covs


class TestSelection:
    def test_from_indices_and_names(self, dgp1_spec):
        C = SelectionMatrix.from_indices(9, [0, 2])
        assert C.k == 2 and C.d == 9
        D = SelectionMatrix.from_names(dgp1_spec.model, ["a1", "B1_11"])
        np.testing.assert_array_equal(C.C, D.C)

    def test_rank(self):
        with pytest.raises(ValueError):
            SelectionMatrix(np.array([[1.0, 0.0], [2.0, 0.0]]))

    def test_psd_sqrt(self, rng):
        A = rng.standard_normal((4, 4))
        S = A @ A.T
        R = psd_sqrt(S)
        np.testing.assert_allclose(R @ R, S, atol=1e-10)
        np.testing.assert_allclose(R, R.T)
        assert np.all(np.isfinite(psd_sqrt(-np.eye(2))))


class TestMultiplierSup:
    def test_zero_draws(self):
        assert multiplier_sup(np.ones((3, 10)), np.zeros(10)) == 0.0

    def test_single_term(self):
        assert multiplier_sup(np.array([[0.7]]), np.array([2.0])) == pytest.approx(1.4)

    def test_stack_equals_loop(self, rng):
        W = rng.standard_normal((5, 40))
        v = rng.standard_normal((6, 40, 2))
        np.testing.assert_allclose(multiplier_sup(W, v), [multiplier_sup(W, x) for x in v], rtol=1e-13)

    def test_dense_grid_mean(self):
        T, h = 1000, 0.3
        coarse = np.linspace(h, 1 - h, 41)
        dense = np.linspace(h, 1 - h, 401)
        v = np.random.default_rng(5).standard_normal((500, T, 1))
        a = multiplier_sup(combined_weights(coarse, h, T), v).mean()
        b = multiplier_sup(combined_weights(dense, h, T), v).mean()
        assert abs(a - b) / b < 0.15

    def test_combined_weights(self):
        T, h = 500, 0.2
        W = combined_weights([0.5], h, T)
        ref = 2 * weight_matrix([0.5], h / math.sqrt(2), T) - weight_matrix([0.5], h, T)
        np.testing.assert_array_equal(W, ref)


class TestBootstrap:
    def test_reproducible_and_monotone(self):
        W = combined_weights(np.linspace(0.3, 0.7, 11), 0.3, 300)
        q1, s1 = bootstrap_quantile(W, 2, [0.10, 0.05, 0.01], 300, 9)
        q2, s2 = bootstrap_quantile(W, 2, [0.10, 0.05, 0.01], 300, 9)
        np.testing.assert_array_equal(s1, s2)
        assert q1[0] <= q1[1] <= q1[2]
        np.testing.assert_allclose(q1, np.quantile(s1, [0.9, 0.95, 0.99]))

    def test_chunking_invariant(self):
        W = combined_weights(np.linspace(0.3, 0.7, 5), 0.3, 200)
        a = bootstrap_quantile(W, 1, 0.05, 200, 4, chunk=250)[1]
        b = bootstrap_quantile(W, 1, 0.05, 200, 4, chunk=250)[1]
        np.testing.assert_array_equal(a, b)

    def test_min_replications(self):
        with pytest.raises(InsufficientReplications):
            bootstrap_quantile(np.ones((2, 5)), 1, 0.05, 99, 0)


class TestBands:
    def test_zero_covariance_band(self, dgp1_curve):
        X, curve, covs = dgp1_curve
        zero = [CovEstimate(c.Sigma_hat, c.Omega_hat, np.zeros_like(c.Sigma_theta)) for c in covs]
        band = band_from_fit(curve, zero, X.shape[0], None, 0.05, 200, 1)
        np.testing.assert_array_equal(band.lower, band.center)
        np.testing.assert_array_equal(band.upper, band.center)

    def test_nesting_and_selection(self, dgp1_curve):
        X, curve, covs = dgp1_curve
        C = SelectionMatrix.from_indices(9, [0])
        b10 = band_from_fit(curve, covs, X.shape[0], C, 0.10, 500, 3)
        b05 = band_from_fit(curve, covs, X.shape[0], C, 0.05, 500, 3)
        assert np.all(b05.lower <= b10.lower) and np.all(b10.upper <= b05.upper)
        assert np.all(b05.lower <= b05.center) and np.all(b05.center <= b05.upper)
        s11 = np.array([c.Sigma_theta[0, 0] for c in covs])
        np.testing.assert_allclose(b05.half_width[:, 0], b05.q_hat * np.sqrt(s11), rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(b05.center[:, 0], curve.bias_corrected[:, 0], rtol=0, atol=0)

    def test_projection_contains_ellipsoid(self, dgp1_curve, rng):
        X, curve, covs = dgp1_curve
        band = band_from_fit(curve, covs, X.shape[0], SelectionMatrix.from_indices(9, [0, 1, 2]), 0.05, 200, 0)
        for _ in range(20):
            d = rng.standard_normal((len(band.grid), 3))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            inner = band.center + 0.999 * band.q_hat * np.einsum("gij,gj->gi", band.sigma_C_sqrt, d)
            assert band.contains_ellipsoid(inner)
            assert band.contains(inner).all()

    def test_band_wider_than_pointwise(self, dgp1_curve):
        X, curve, covs = dgp1_curve
        band = band_from_fit(curve, covs, X.shape[0], None, 0.05, 500, 11)
        lo, up = pointwise_ci(curve, covs, 0.05, X.shape[0])
        assert np.all(band.upper - band.lower >= up - lo)

    def test_pointwise_alpha_one(self, dgp1_curve):
        X, curve, covs = dgp1_curve
        lo, up = pointwise_ci(curve, covs, 1.0, X.shape[0])
        np.testing.assert_array_equal(lo, up)

    def test_pointwise_width_v0(self, dgp1_curve):
        X, curve, covs = dgp1_curve
        ident = [CovEstimate(c.Sigma_hat, c.Omega_hat, np.eye(9)) for c in covs]
        lo, up = pointwise_ci(curve, ident, 0.05, X.shape[0])
        z = 1.959963984540054
        r = 2 ** -0.5
        Kt = lambda u: 2 * math.sqrt(2) * 0.75 * max(0, 1 - 2 * u * u) - 0.75 * max(0, 1 - u * u)  # noqa: E731
        v0 = sum(integrate.quad(lambda u: Kt(u) ** 2, a, b, epsabs=1e-13)[0] for a, b in [(-1, -r), (-r, r), (r, 1)])
        np.testing.assert_allclose(X.shape[0] * 0.3 * ((up - lo) / (2 * z)) ** 2, v0, rtol=1e-10)

    def test_scb_reproducible(self, dgp1_spec):
        X = simulate_dgp(dgp1_spec, 400, 4)
        grid = np.linspace(0, 1, 11)
        C = SelectionMatrix.from_indices(9, [0])
        b1 = scb(dgp1_spec.model, X, grid, 0.3, C, 0.1, 200, 5)
        b2 = scb(dgp1_spec.model, X, grid, 0.3, C, 0.1, 200, 5)
        assert b1.q_hat == b2.q_hat
        np.testing.assert_array_equal(b1.lower, b2.lower)
        np.testing.assert_allclose(b1.grid, grid[interior_grid(grid, 0.3)])
        with pytest.raises(InsufficientReplications):
            scb(dgp1_spec.model, X, grid, 0.3, C, 0.1, 50, 5)


class TestConstancy:
    def test_flat(self):
        assert constancy_test(zero_band([0.2] * 5))[0]

    def test_increasing(self):
        assert not constancy_test(zero_band(np.linspace(0, 1, 5)))[0]


class TestAnalyticQuantile:
    def test_kernel_derivative_energy(self):
        val = integrate.quad(lambda u: kernel_derivative(u) ** 2, -1, 1)[0]
        assert val == pytest.approx(1.5, abs=1e-12)
        assert integrate.quad(lambda u: (-1.5 * u) ** 2, -1, 1)[0] == pytest.approx(1.5, abs=1e-12)

    @given(st.floats(0.02, 0.35), st.integers(1, 4))
    @settings(max_examples=30)
    def test_monotone_in_alpha(self, h, k):
        qs = [analytic_band_quantile(h, k, a) for a in (0.2, 0.1, 0.05, 0.01)]
        assert all(np.diff(qs) > 0)

    def test_against_bootstrap(self):
        T, h = 1000, 0.3
        grid = np.linspace(0, 1, 101)
        W = combined_weights(grid[interior_grid(grid, h)], h, T)
        q = float(bootstrap_quantile(W, 1, 0.05, 2000, 0)[0])
        scaled = q * math.sqrt(T * h / fourth_order_moment(0, squared=True))
        ref = analytic_band_quantile(h, 1, 0.05)
        assert abs(scaled - ref) / ref < 0.25

    def test_guards(self):
        with pytest.raises(ValueError):
            analytic_band_quantile(0.5, 1, 0.05)


def test_pointwise_coverage_a1(dgp1_spec):
    """Pointwise 95% interval for a1(0.5) at T=1000."""
    s = dgp1_spec.model
    h, T, reps = 0.4, 1000, 200
    truth = dgp1_spec.theta(0.5)[0]
    hits = 0
    for r in range(reps):
        X = simulate_dgp(dgp1_spec, T, 7000 + r)
        init = preliminary_init(s, X, h, 0.5)[0]
        f1 = fit_local(s, X, 0.5, h, init)
        f2 = fit_local(s, X, 0.5, h / math.sqrt(2), init)
        cov = sandwich_cov(s, X, 0.5, h, f1.theta)
        center = 2 * f2.theta[0] - f1.theta[0]
        half = 1.959963984540054 * math.sqrt(fourth_order_moment(0, True) * cov.Sigma_theta[0, 0] / (T * h))
        hits += abs(center - truth) <= half
    assert abs(hits / reps - 0.95) <= 0.04
