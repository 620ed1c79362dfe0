"""Closed-form aggregate for orthonormal designs and the peakedness profile."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ewalasso.model import DataError, NumericalError
from ewalasso.shrinkage import (
    ShrinkageInputs,
    coordinate_variance,
    default_z_grid,
    ewa_closed_form,
    h_closed_form,
    h_curve,
    h_profile,
    psi,
    shrinkage_weight,
)

# frozen: adaptive Gauss quadrature of the defining integrals
# (scipy.integrate.quad, epsabs 1e-14, split at the kink) for the
# one-coordinate posterior with correlation t, penalty lam, temperature tau.
_SCALAR_ORACLE = [
    # (t, lam, tau, mean, variance, h)
    (0.8, 0.5, 0.3, 0.45188992434237635, 0.20354622863751112,
     0.06863752641944548),
    (-2.0, 1.0, 0.05, -1.0000026852205859, 0.0499972705025169,
     2.6852277971861627e-06),
    (3.5, 1.0, 0.2, 2.500000012858876, 0.19999996729207137,
     3.2147190520692703e-08),
]

# frozen: maximum of h(lambda_bar, .) located by golden-section refinement of
# a dense grid, cross-checked against direct quadrature of the defining
# integral at the argmax; all routes agree to <= 1e-12.
_CURVE_MAXIMA = {
    10.0: (0.751786222569, 7.891471044685),
    20.0: (0.840501226660, 16.777016018172),
    40.0: (0.898728193728, 35.455048242303),
    60.0: (0.922549007040, 54.565361410115),
    80.0: (0.936004870573, 73.872529733503),
    100.0: (0.944821925380, 93.295678497837),
}


class TestScalarOracles:
    @pytest.mark.parametrize("t,lam,tau,mean,var,h", _SCALAR_ORACLE)
    def test_moments_match_quadrature(self, t, lam, tau, mean, var, h):
        est = ewa_closed_form(ShrinkageInputs(
            tau=tau, lam=lam, ls_coefficients=np.array([t])))
        assert est.mean[0] == pytest.approx(mean, abs=1e-12)
        assert est.covariance[0, 0] == pytest.approx(var, abs=1e-12)
        assert est.h_value == pytest.approx(h, abs=1e-12)

    @pytest.mark.parametrize("t,lam,tau,mean,var,h", _SCALAR_ORACLE)
    def test_variance_helper_agrees(self, t, lam, tau, mean, var, h):
        assert coordinate_variance(tau, lam, t) == pytest.approx(
            var, abs=1e-12)


class TestPsi:
    def test_known_value_at_zero(self):
        # exp(0) times the upper-tail mass at the median
        assert psi(1.0, 0.0) == pytest.approx(0.5, rel=1e-14)
        assert psi(4.0, 0.0) == pytest.approx(0.5, rel=1e-14)

    def test_large_positive_argument_stays_finite(self):
        val = psi(1.0, 500.0)
        assert np.isfinite(val)
        # Mills-ratio asymptote 1/(sqrt(2 pi) t)
        assert val == pytest.approx(1.0 / (np.sqrt(2 * np.pi) * 500.0),
                                    rel=1e-2)

    def test_overflow_domain_raises(self):
        with pytest.raises(NumericalError):
            psi(1.0, -40.0)

    @given(st.floats(-37.0, 37.0), st.floats(0.1, 5.0))
    @settings(max_examples=100, deadline=None)
    def test_positive_on_supported_domain(self, ratio, v):
        # the supported domain is t/sqrt(v) >= -37.5
        assert psi(v, ratio * np.sqrt(v)) > 0


class TestShrinkageWeight:
    @given(st.floats(0.0, 50.0))
    @settings(max_examples=100, deadline=None)
    def test_weight_in_unit_interval(self, t):
        w = shrinkage_weight(0.1, 1.0, t)
        assert 0.0 <= w <= 1.0

    def test_negative_t_rejected(self):
        with pytest.raises(DataError):
            shrinkage_weight(0.2, 0.8, -1.0)

    def test_monotone_in_t(self):
        grid = np.linspace(0.0, 60.0, 400)
        w = shrinkage_weight(0.2, 0.8, grid)
        assert np.all(np.diff(w) >= -1e-14)

    def test_far_beyond_penalty_saturates(self):
        # once (t - lam)/sqrt(tau) is astronomically large, w = 1 exactly
        assert shrinkage_weight(0.01, 1.0, 50.0) == 1.0

    def test_cold_limit_is_hard_threshold(self):
        assert shrinkage_weight(1e-12, 1.0, 2.0) == pytest.approx(1.0)
        assert shrinkage_weight(1e-12, 1.0, 0.5) == pytest.approx(
            0.5, abs=1e-3)


class TestClosedFormStructure:
    def test_mean_is_odd_in_t(self):
        t = np.array([0.4, 1.2, 2.5])
        a = ewa_closed_form(ShrinkageInputs(0.1, 0.7, t)).mean
        b = ewa_closed_form(ShrinkageInputs(0.1, 0.7, -t)).mean
        np.testing.assert_allclose(a, -b, atol=1e-14)

    def test_shrinks_toward_zero(self):
        t = np.array([0.5, -1.5, 3.0])
        est = ewa_closed_form(ShrinkageInputs(0.2, 0.6, t))
        assert np.all(np.abs(est.mean) <= np.abs(t))
        assert np.all(est.mean * t >= 0)

    def test_cold_limit_matches_soft_threshold(self):
        t = np.array([2.0, -0.3, 0.9])
        est = ewa_closed_form(ShrinkageInputs(1e-10, 0.5, t))
        soft = np.sign(t) * np.maximum(np.abs(t) - 0.5, 0.0)
        np.testing.assert_allclose(est.mean, soft, atol=1e-4)

    def test_h_between_zero_and_p_tau(self):
        rngs = np.linspace(-4, 4, 13)
        est = ewa_closed_form(ShrinkageInputs(0.15, 0.8, rngs))
        assert -1e-12 <= est.h_value <= rngs.size * 0.15 + 1e-12
        assert h_closed_form(ShrinkageInputs(0.15, 0.8, rngs)) == (
            pytest.approx(est.h_value, abs=1e-14))

    def test_covariance_is_diagonal_positive(self):
        t = np.array([0.1, -2.0])
        est = ewa_closed_form(ShrinkageInputs(0.3, 0.5, t))
        assert est.covariance[0, 1] == 0.0
        assert np.all(np.diag(est.covariance) > 0)

    def test_method_label(self):
        est = ewa_closed_form(ShrinkageInputs(0.1, 0.1, np.array([1.0])))
        assert est.method == "closed-form"


class TestHProfile:
    @pytest.mark.parametrize("lambda_bar", sorted(_CURVE_MAXIMA))
    def test_frozen_maxima(self, lambda_bar):
        target, argmax = _CURVE_MAXIMA[lambda_bar]
        assert h_profile(lambda_bar, argmax) == pytest.approx(
            target, abs=1e-9)
        grid = default_z_grid(lambda_bar)
        assert np.max(h_curve(lambda_bar, grid)) == pytest.approx(
            target, abs=1e-6)

    def test_profile_bounded_by_one(self):
        for lambda_bar in (5.0, 10.0, 50.0, 100.0):
            values = h_curve(lambda_bar, default_z_grid(lambda_bar))
            assert np.all(values <= 1.0 + 1e-12)
            assert np.all(values >= -1e-12)

    def test_maxima_increase_toward_one(self):
        maxima = [np.max(h_curve(lb, default_z_grid(lb)))
                  for lb in (10.0, 20.0, 40.0, 60.0, 80.0, 100.0)]
        assert np.all(np.diff(maxima) > 0)
        assert maxima[-1] < 1.0

    def test_vanishes_at_origin(self):
        assert h_profile(10.0, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_grid_spans_twice_lambda_bar(self):
        grid = default_z_grid(7.0, points=101)
        assert grid[0] == 0.0
        assert grid[-1] == pytest.approx(14.0)
        assert grid.size == 101
