import math

import numpy as np
import pytest

from tvqmle.models import garch_volatility
from tvqmle.simulate import (
    CoverageReport,
    DgpSpec,
    coupled_discrepancy,
    coverage_study,
    dgp1,
    dgp2,
    get_dgp,
    simulate_dgp,
    stationary_approx,
)


def frozen(spec, theta):
    theta = np.asarray(theta, dtype=float)
    return DgpSpec(spec.model, lambda tau: theta, spec.groups, spec.burn_in, "frozen")


class TestCurves:
    def test_dgp1_values(self, dgp1_spec):
        th = dgp1_spec.theta(1.0)
        assert th[0] == pytest.approx(0.6)
        assert th[1] == pytest.approx(-0.3)
        th0 = dgp1_spec.theta(0.0)
        assert th0[0] == pytest.approx(0.6 * math.exp(-1))
        assert th0[2] == pytest.approx(0.5 * math.exp(-0.5))
        assert th0[3] == pytest.approx(-0.2)
        th5 = dgp1_spec.theta(0.5)
        assert th5[5] == pytest.approx(0.8)
        np.testing.assert_allclose(th5[6:], [1.7, 0.2, 1.5])

    def test_dgp2_values(self, dgp2_spec):
        th = dgp2_spec.theta(0.0)
        np.testing.assert_allclose(th[:2], [2 * math.exp(-0.5), 3.2])
        np.testing.assert_allclose(th[2:6], [0.45, 0.0125, 0.0125, 0.4])
        np.testing.assert_allclose(th[6:10], [0.3, 0.0, 0.0, 0.3])
        assert th[10] == 0.0
        assert dgp2_spec.theta(1.0)[10] == pytest.approx(0.3 * math.sin(1.0))

    def test_dgp1_restriction(self, dgp1_spec):
        b = dgp1_spec.model.unpack(dgp1_spec.theta(1.0))
        np.testing.assert_allclose(b["A"][0], 0.6 * np.eye(2))
        np.testing.assert_allclose(b["A"][1], -0.3 * np.eye(2))

    def test_lookup(self):
        assert get_dgp("dgp1").name == "dgp1"
        with pytest.raises(ValueError):
            get_dgp("dgp3")


class TestSimulate:
    def test_shape_and_determinism(self, dgp1_spec, dgp2_spec):
        for spec in (dgp1_spec, dgp2_spec):
            a = simulate_dgp(spec, 300, 4)
            assert a.shape == (300, 2)
            np.testing.assert_array_equal(a, simulate_dgp(spec, 300, 4))
            assert not np.array_equal(a, simulate_dgp(spec, 300, 5))

    def test_minimum_length(self, dgp1_spec):
        with pytest.raises(ValueError):
            simulate_dgp(dgp1_spec, 10, 0)
        assert simulate_dgp(dgp1_spec, 10, 0, min_length=1).shape == (10, 2)

    def test_white_noise(self, dgp1_spec):
        spec = frozen(dgp1_spec, [0, 0, 0, 0, 0, 0, 1, 0, 1])
        T = 4000
        X = simulate_dgp(spec, T, 2)
        assert np.all(np.abs(X.mean(axis=0)) < 4 / math.sqrt(T))
        np.testing.assert_allclose(np.cov(X.T), np.eye(2), atol=0.1)

    def test_garch_fixed_point(self, dgp2_spec):
        th = dgp2_spec.theta(0.5)
        b = dgp2_spec.model.unpack(th)
        fixed = b["c0"] / (1 - np.diag(b["C"][0]) - np.diag(b["D"][0]))
        means = []
        for r in range(200):
            x = stationary_approx(dgp2_spec, 0.5, 1000, 100 + r)
            means.append(garch_volatility(dgp2_spec.model, x, th)[100:].mean(axis=0))
        np.testing.assert_allclose(np.mean(means, axis=0), fixed, rtol=0.10)


class TestStationaryApprox:
    def test_frozen_identical(self, dgp1_spec, dgp2_spec):
        for spec in (dgp1_spec, dgp2_spec):
            fs = frozen(spec, spec.theta(0.3))
            x = simulate_dgp(fs, 400, 7)
            np.testing.assert_array_equal(stationary_approx(fs, "diagonal", 400, 7), x)
            np.testing.assert_array_equal(stationary_approx(fs, 0.3, 400, 7), x)

    def test_diagonal_matches_scalar_lanes(self, dgp1_spec):
        T = 200
        diag = stationary_approx(dgp1_spec, "diagonal", T, 3)
        for t in (0, 99, 199):
            np.testing.assert_allclose(diag[t], stationary_approx(dgp1_spec, (t + 1) / T, T, 3)[t], atol=1e-12)

    def test_rate_halves(self, dgp1_spec):
        d500 = np.mean([coupled_discrepancy(dgp1_spec, 500, s) for s in range(100)])
        d1000 = np.mean([coupled_discrepancy(dgp1_spec, 1000, s) for s in range(100)])
        assert 0.5 * 0.7 <= d1000 / d500 <= 0.5 * 1.3

    def test_lipschitz_in_tau(self, dgp1_spec):
        base = stationary_approx(dgp1_spec, 0.5, 2000, 1)
        ratios = []
        for gap in (0.2, 0.1, 0.05, 0.025):
            other = stationary_approx(dgp1_spec, 0.5 + gap, 2000, 1)
            ratios.append(np.mean(np.linalg.norm(base - other, axis=1)) / gap)
        L = max(ratios)
        for gap, r in zip((0.2, 0.1, 0.05, 0.025), ratios):
            assert r * gap <= L * gap + 1e-12
        assert max(ratios) / min(ratios) < 3

    def test_bad_tau(self, dgp1_spec):
        with pytest.raises(ValueError):
            stationary_approx(dgp1_spec, "middle", 100, 0)
        with pytest.raises(ValueError):
            stationary_approx(dgp1_spec, np.zeros(5), 100, 0)


@pytest.fixture(scope="module")
def small_coverage():
    return coverage_study(dgp1(), 200, [0.4], (0.10, 0.05, 1.0), reps=50, R=100, seed=3, G=11)


class TestCoverage:
    def test_report(self, small_coverage):
        rep = small_coverage
        assert isinstance(rep, CoverageReport)
        assert rep.groups == ["alpha1", "alpha2", "B1", "Omega"]
        assert rep.valid
        rows = rep.table()
        assert set(rows[0]) == {"T", "h"} | {f"{g}@{p}%" for g in rep.groups for p in (90, 95, 0)}

    def test_level_ordering(self, small_coverage):
        rep = small_coverage
        for g in rep.groups:
            a90 = rep.indicators[(0.4, g, 0.9)]
            a95 = rep.indicators[(0.4, g, 0.95)]
            assert np.all(a95 >= a90)
            assert rep.coverage[(0.4, g, 0.95)] >= rep.coverage[(0.4, g, 0.9)]

    def test_alpha_one(self, small_coverage):
        for g in small_coverage.groups:
            assert small_coverage.coverage[(0.4, g, 0.0)] == 0.0

    def test_workers_invariant(self, small_coverage):
        rep = coverage_study(dgp1(), 200, [0.4], (0.10, 0.05, 1.0), reps=50, R=100, seed=3, G=11, workers=2)
        assert rep.coverage == small_coverage.coverage
        assert rep.n_dropped == small_coverage.n_dropped

    def test_reps_guard(self):
        with pytest.raises(ValueError):
            coverage_study(dgp2(), 200, [0.4], reps=10)
