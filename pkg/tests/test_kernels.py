import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from tvqmle.exceptions import DegenerateDesign
from tvqmle.kernels import (
    EPANECHNIKOV,
    KernelSpec,
    boundary_moments,
    check_bandwidth,
    fourth_order_kernel,
    fourth_order_moment,
    kernel_derivative,
    kernel_eval,
    kernel_moment,
    local_linear_weights,
    weight_matrix,
)


def quad(f, lo=-1.0, hi=1.0, points=None):
    return integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-14, limit=400, points=points)[0]


def epa(u):
    # independent re-statement of the kernel for the oracles below
    return 0.75 * (1 - u * u) if abs(u) <= 1 else 0.0


class TestKernelEval:
    def test_values(self):
        assert kernel_eval(0.0) == 0.75
        assert kernel_eval(1.0) == 0.0
        assert kernel_eval(0.5) == pytest.approx(0.5625, abs=1e-15)
        assert kernel_eval(-1.5) == 0.0

    def test_vectorised(self):
        u = np.linspace(-2, 2, 41)
        np.testing.assert_allclose(kernel_eval(u), [epa(x) for x in u], atol=1e-15)

    def test_integrates_to_one(self):
        assert abs(quad(kernel_eval) - 1.0) < 1e-10

    @given(st.floats(-3, 3))
    def test_symmetric_nonnegative(self, u):
        assert kernel_eval(u) >= 0.0
        assert kernel_eval(u) == kernel_eval(-u)

    def test_derivative(self):
        u = np.linspace(-0.99, 0.99, 23)
        fd = (kernel_eval(u + 1e-6) - kernel_eval(u - 1e-6)) / 2e-6
        np.testing.assert_allclose(kernel_derivative(u), fd, atol=1e-8)

    def test_unknown_shape(self):
        with pytest.raises(ValueError):
            KernelSpec("gaussian")


class TestMoments:
    @pytest.mark.parametrize("k", range(7))
    def test_against_quadrature(self, k):
        assert abs(kernel_moment(k) - quad(lambda u: u**k * epa(u))) < 1e-12
        assert abs(kernel_moment(k, squared=True) - quad(lambda u: u**k * epa(u) ** 2)) < 1e-12

    def test_named_values(self):
        assert kernel_moment(0) == pytest.approx(1.0, abs=1e-14)
        assert kernel_moment(1) == pytest.approx(0.0, abs=1e-14)
        assert abs(kernel_moment(2) - 0.2) < 1e-10
        assert abs(kernel_moment(0, squared=True) - 0.6) < 1e-10

    def test_negative_order(self):
        with pytest.raises(ValueError):
            kernel_moment(-1)


class TestFourthOrder:
    def test_values(self):
        assert fourth_order_kernel(0.0) == pytest.approx(0.75 * (2 * np.sqrt(2) - 1), abs=1e-14)
        assert fourth_order_kernel(0.9) == pytest.approx(-0.1425, abs=1e-14)

    def test_moments(self):
        r = 1 / np.sqrt(2)
        oracle = lambda k: quad(lambda u: u**k * (2 * np.sqrt(2) * epa(np.sqrt(2) * u) - epa(u)), points=[-r, r])  # noqa: E731
        assert abs(oracle(0) - 1.0) < 1e-10
        assert abs(oracle(2)) < 1e-8
        assert abs(fourth_order_moment(0) - 1.0) < 1e-10
        assert abs(fourth_order_moment(2)) < 1e-8
        assert abs(fourth_order_moment(4) - oracle(4)) < 1e-10

    def test_squared_v0(self):
        r = 1 / np.sqrt(2)
        v0 = quad(lambda u: (2 * np.sqrt(2) * epa(np.sqrt(2) * u) - epa(u)) ** 2, points=[-r, r])
        assert abs(fourth_order_moment(0, squared=True) - v0) < 1e-10


class TestBoundaryMoments:
    def test_examples(self):
        assert boundary_moments(0.5, 0.1, 0)[0] == pytest.approx(1.0, abs=1e-14)
        assert boundary_moments(0.0, 0.1, 0)[0] == pytest.approx(0.5, abs=1e-14)
        # int_0^1 u 0.75 (1 - u^2) du = 0.75 (1/2 - 1/4)
        oracle = quad(lambda u: u * epa(u), 0.0, 1.0)
        assert oracle == pytest.approx(0.1875, abs=1e-14)
        assert boundary_moments(0.0, 0.1, 1)[1] == pytest.approx(oracle, abs=1e-14)

    @given(st.floats(0, 1), st.floats(0.02, 0.49), st.integers(0, 4))
    @settings(max_examples=50)
    def test_against_quadrature(self, tau, h, k):
        lo, hi = max(-1, -tau / h), min(1, (1 - tau) / h)
        assert abs(boundary_moments(tau, h, k)[k] - quad(lambda u: u**k * epa(u), lo, hi)) < 1e-12

    def test_bad_tau(self):
        with pytest.raises(ValueError):
            boundary_moments(1.2, 0.1)


class TestLocalLinearWeights:
    def test_interior_equals_kernel(self):
        T, h = 500, 0.2
        w = local_linear_weights(0.5, h, T)
        u = (np.arange(1, T + 1) / T - 0.5) / h
        np.testing.assert_allclose(w.weights, kernel_eval(u) / h, atol=1e-12)
        assert abs(w.bias_factor - 0.2) < 1e-8
        assert abs(w.boundary_moments[1]) < 1e-8

    @pytest.mark.parametrize("tau", [0.0, 0.03, 0.1, 0.5, 0.92, 1.0])
    @pytest.mark.parametrize("T,h", [(200, 0.1), (1000, 0.25), (400, 0.45)])
    def test_reproduces_linear(self, tau, T, h):
        w = local_linear_weights(tau, h, T).weights
        u = (np.arange(1, T + 1) / T - tau) / h
        tol = 5.0 / (T * h)
        assert abs(w.mean() - 1.0) < tol
        assert abs(np.mean(w * u)) < tol

    def test_degenerate(self):
        with pytest.raises(DegenerateDesign):
            local_linear_weights(0.5, 0.05, 10)

    def test_weight_matrix_shape(self):
        W = weight_matrix([0.2, 0.5], 0.1, 100)
        assert W.shape == (2, 100)

    @pytest.mark.parametrize("h", [0.0, -0.1, 0.5, 0.7])
    def test_bandwidth_guard(self, h):
        with pytest.raises(ValueError):
            check_bandwidth(h)


def test_default_kernel_is_epanechnikov():
    assert EPANECHNIKOV.shape == "epanechnikov"
    assert EPANECHNIKOV.support == (-1.0, 1.0)
