"""Quadrature targets, discrete Duhamel sums and large-radius limits."""

import math

import numpy as np
import pytest
from scipy import integrate

from stowave.averages import ball_weights
from stowave.kernels import BALL_VOLUME, GaussianKernel, RieszKernel, tau_beta
from stowave.noise import TorusGrid
from stowave.oracle import (OracleInputError, QuadratureDivergence, _rescaled_double_convolution, additive_l1_limit,
                            discrete_duhamel_covariance, discrete_duhamel_variance, discrete_mode_variance,
                            finite_radius_target, limit_covariance_l1, limit_covariance_riesz, linear_covariance,
                            linear_variance, propagator_energy, spectral_quadrature, time_kernel)
from stowave.stats import EtaCurve, LagCurve, scaling_exponent_fit


def flat_eta(value, times=(0.0, 0.25, 0.5, 0.75, 1.0), stderr=0.0):
    return EtaCurve(list(times), [value] * len(times), [stderr] * len(times))


class TestQuadrature:
    def test_exponential(self):
        value, history = spectral_quadrature(lambda r: np.exp(-r), 1.0)
        assert value == pytest.approx(1.0, rel=1e-8)
        assert history[0][0] == 1.0

    def test_logarithmic_growth_diverges(self):
        with pytest.raises(QuadratureDivergence) as info:
            spectral_quadrature(lambda r: 1.0 / (1.0 + r), 1.0)
        assert info.value.cutoff_history[-1][0] >= 2.0 ** 14

    def test_tail_correction(self):
        value, _ = spectral_quadrature(lambda r: 1.0 / (1.0 + r) ** 2, 1.0, tail=lambda K: 1.0 / (1.0 + K))
        assert value == pytest.approx(1.0, rel=1e-8)

    @pytest.mark.parametrize("rho", [1e-6, 0.05, 0.7, 3.1])
    def test_time_kernel_matches_direct_integral(self, rho):
        t1, t2 = 0.9, 0.6

        def fg(t):
            return t * np.sinc(2.0 * rho * t)

        expected, _ = integrate.quad(lambda r: fg(t1 - r) * fg(t2 - r), 0.0, min(t1, t2), epsabs=0.0, epsrel=1e-12)
        assert float(time_kernel(rho, t1, t2)) == pytest.approx(expected, rel=1e-7)


class TestLinearVariance:
    def test_zero_time(self, gaussian):
        assert linear_variance(2.0, 0.0, gaussian) == 0.0

    def test_quadratic_in_c(self, gaussian):
        assert linear_variance(1.0, 0.5, gaussian, c=2.0) == pytest.approx(4.0 * linear_variance(1.0, 0.5, gaussian))

    def test_covariance_is_symmetric(self, gaussian):
        a = linear_covariance(1.5, 0.4, 0.7, gaussian)
        assert a > 0.0
        assert a == pytest.approx(linear_covariance(1.5, 0.7, 0.4, gaussian), rel=1e-10)

    @pytest.mark.slow
    def test_matches_discrete_scheme(self, gaussian):
        grid = TorusGrid(128, 24.0)
        R, t, dt = 2.0, 0.5, 1.0 / 512
        discrete = discrete_duhamel_variance(grid, gaussian, ball_weights(grid, R), t, dt)
        assert linear_variance(R, t, gaussian) == pytest.approx(discrete, rel=0.02)

    @pytest.mark.slow
    def test_riesz_slope(self):
        riesz = RieszKernel(1.0)
        radii = [4.0, 8.0, 16.0]
        fit = scaling_exponent_fit([(R, linear_variance(R, 1.0, riesz)) for R in radii])
        assert 4.85 <= fit.slope <= 5.15


class TestDiscreteDuhamel:
    def test_zero_time(self, small_grid, gaussian):
        w = ball_weights(small_grid, 2.0)
        assert discrete_duhamel_covariance(small_grid, gaussian, w, 0.0, 0.5, 0.125) == 0.0

    def test_symmetric(self, small_grid, gaussian):
        w = ball_weights(small_grid, 2.0)
        a = discrete_duhamel_covariance(small_grid, gaussian, w, 0.25, 0.5, 0.125)
        b = discrete_duhamel_covariance(small_grid, gaussian, w, 0.5, 0.25, 0.125)
        assert a == pytest.approx(b)

    def test_grid_mismatch(self, small_grid, tiny_grid, gaussian):
        with pytest.raises(OracleInputError):
            discrete_duhamel_variance(small_grid, gaussian, ball_weights(tiny_grid, 1.0), 0.5, 0.125)

    def test_mollifier_only_shrinks(self, small_grid, gaussian):
        w = ball_weights(small_grid, 2.0)
        full = discrete_duhamel_variance(small_grid, gaussian, w, 0.5, 0.125)
        smooth = discrete_duhamel_variance(small_grid, gaussian, w, 0.5, 0.125, mollifier_n=1)
        assert 0.0 < smooth <= full

    def test_mode_variance(self, tiny_grid, gaussian):
        var = discrete_mode_variance(tiny_grid, gaussian, 0.5, 0.125, c=2.0)
        assert var.shape == tiny_grid.half_shape
        assert var[0, 0, 0] == 0.0
        assert var[1, 0, 0] == pytest.approx(4.0 * discrete_mode_variance(tiny_grid, gaussian, 0.5, 0.125)[1, 0, 0])


class TestRieszLimit:
    def test_unit_eta(self):
        t = 0.8
        limit = limit_covariance_riesz(t, t, 1.0, flat_eta(1.0))
        assert limit.value == pytest.approx(tau_beta(1.0) * t ** 3 / 3.0, rel=1e-12)

    def test_unequal_times(self):
        limit = limit_covariance_riesz(0.5, 1.0, 1.0, flat_eta(1.0))
        # ∫₀^½ (½-r)(1-r) dr = 5/48
        assert limit.value == pytest.approx(tau_beta(1.0) * 5.0 / 48.0, rel=1e-12)

    def test_zero_time(self):
        assert limit_covariance_riesz(0.0, 1.0, 1.0, flat_eta(1.0)).value == 0.0

    def test_zero_noise_value(self):
        sigma_one = 1.0 + 0.5 * math.sin(1.0)
        limit = limit_covariance_riesz(1.0, 1.0, 1.0, flat_eta(sigma_one))
        assert limit.value == pytest.approx(21.0552 * sigma_one ** 2 / 3.0, rel=1e-5)

    def test_linear_eta_squared_is_exact(self):
        times = [0.0, 0.5, 1.0]
        values = [math.sqrt(1.0 + r) for r in times]
        limit = limit_covariance_riesz(1.0, 1.0, 2.0, EtaCurve(times, values, [0.0] * 3))
        # ∫₀¹ (1-r)²(1+r) dr = 5/12
        assert limit.value == pytest.approx(tau_beta(2.0) * 5.0 / 12.0, rel=1e-12)

    def test_stderr_propagates(self):
        assert limit_covariance_riesz(1.0, 1.0, 1.0, flat_eta(1.0, stderr=0.01)).stderr > 0.0

    def test_curve_must_cover_the_interval(self):
        with pytest.raises(OracleInputError):
            limit_covariance_riesz(1.0, 1.0, 1.0, flat_eta(1.0, times=(0.0, 0.5)))
        with pytest.raises(OracleInputError):
            limit_covariance_riesz(1.0, 1.0, 1.0, flat_eta(1.0, times=(0.25, 1.0)))


class TestL1Limit:
    def lag(self, radius, integral=0.0, h=0.5):
        return LagCurve(0.5, 0.5, radius, h, np.zeros((4, 4, 4)), integral)

    def test_zero_covariance(self):
        assert limit_covariance_l1(0.5, 0.5, self.lag(3.0)).value == 0.0

    def test_scales_by_unit_ball(self):
        assert limit_covariance_l1(0.5, 0.5, self.lag(3.0, 2.0)).value == pytest.approx(2.0 * BALL_VOLUME)

    def test_radius_must_cover_light_cones(self):
        with pytest.raises(OracleInputError):
            limit_covariance_l1(0.5, 0.5, self.lag(1.5))

    def test_additive_closed_form(self, gaussian):
        limit = additive_l1_limit(1.0, 1.0, gaussian, c=2.0)
        assert limit.value == pytest.approx(BALL_VOLUME * 4.0 * float(gaussian.density_radial(0.0)) / 3.0)
        assert additive_l1_limit(0.0, 1.0, gaussian).value == 0.0

    def test_additive_needs_integrable_kernel(self, riesz):
        with pytest.raises(OracleInputError):
            additive_l1_limit(1.0, 1.0, riesz)

    def test_finite_radius_target(self, small_grid):
        w = ball_weights(small_grid, 3.0)
        delta = np.zeros(small_grid.shape)
        delta[0, 0, 0] = 1.0
        assert finite_radius_target(delta, w) == pytest.approx(float(np.sum(w.weights ** 2)), rel=1e-10)
        flat = np.ones(small_grid.shape)
        assert finite_radius_target(flat, w) == pytest.approx(w.volume ** 2, rel=1e-10)


class TestPropagatorEnergy:
    @pytest.mark.parametrize("t", [0.5, 1.0])
    def test_below_bound(self, gaussian, riesz, t):
        for kernel in (gaussian, riesz):
            energy, bound = propagator_energy(kernel, t)
            assert 0.0 < energy <= bound

    def test_zero_time(self, gaussian):
        energy, bound = propagator_energy(gaussian, 0.0, T=1.0)
        assert energy == 0.0 and bound > 0.0

    def test_inadmissible_kernel(self):
        with pytest.raises(QuadratureDivergence):
            propagator_energy(RieszKernel(2.5), 1.0)


class TestRescaledConvolution:
    @pytest.mark.parametrize("r", [0.0, 0.4])
    def test_large_radius_limit(self, r):
        t1, t2, beta = 1.0, 0.8, 1.0
        value = _rescaled_double_convolution(t1, t2, r, beta, 40.0)
        assert value == pytest.approx(tau_beta(beta) * (t1 - r) * (t2 - r), rel=0.01)
