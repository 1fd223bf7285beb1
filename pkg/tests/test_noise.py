"""Torus grid, Philox seeding, spectral weights and noise increments."""

import math

import numpy as np
import pytest
from scipy import fft

from stowave.kernels import CustomKernel, GaussianKernel
from stowave.noise import (NoiseError, NoiseSampler, SeedPolicy, TorusGrid, lattice_covariance, noise_spectrum,
                           sample_increment, spectral_weights)


class TestTorusGrid:
    def test_spacing_and_shapes(self):
        grid = TorusGrid(16, 8.0)
        assert grid.h == 0.5
        assert grid.shape == (16, 16, 16)
        assert grid.half_shape == (16, 16, 9)
        assert grid.cell_volume == 0.125

    @pytest.mark.parametrize("N", [4, 12, 0])
    def test_rejects_bad_sizes(self, N):
        with pytest.raises(NoiseError):
            TorusGrid(N, 8.0)

    def test_rejects_nonpositive_side(self):
        with pytest.raises(NoiseError):
            TorusGrid(16, 0.0)

    def test_lag_index(self):
        grid = TorusGrid(16, 8.0)
        assert grid.lag_index([0.5, -1.0, 0.0]) == (1, 14, 0)
        with pytest.raises(NoiseError):
            grid.lag_index([0.3, 0.0, 0.0])

    def test_radius_field_is_periodic_distance(self):
        grid = TorusGrid(8, 8.0)
        r = grid.radius_field()
        assert r[0, 0, 0] == 0.0
        assert r[7, 0, 0] == pytest.approx(1.0)
        assert r[4, 0, 0] == pytest.approx(4.0)

    def test_nyquist_factor(self):
        grid = TorusGrid(8, 8.0)
        f = grid.nyquist_factor(half=False)
        assert f[0, 0, 0] == 1.0
        assert f[4, 0, 0] == 0.5
        assert f[4, 4, 4] == 0.125

    def test_record_round_trip(self):
        grid = TorusGrid(32, 12.0)
        assert TorusGrid.from_dict(grid.to_dict()) == grid


class TestSeedPolicy:
    def test_deterministic(self):
        a = SeedPolicy(5).generator(3, 7).standard_normal(10)
        b = SeedPolicy(5).generator(3, 7).standard_normal(10)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        base = SeedPolicy(5).generator(3, 7).standard_normal(4)
        for other in (SeedPolicy(5).generator(4, 7), SeedPolicy(5).generator(3, 8),
                      SeedPolicy(6).generator(3, 7), SeedPolicy(5).generator(3, 7, "synthetic")):
            assert not np.array_equal(base, other.standard_normal(4))

    def test_full_unsigned_range(self):
        SeedPolicy(2 ** 64 - 1).generator(0, 0).random()
        with pytest.raises(NoiseError):
            SeedPolicy(2 ** 64)
        with pytest.raises(NoiseError):
            SeedPolicy(-1)

    def test_unknown_tag(self):
        with pytest.raises(NoiseError):
            SeedPolicy(1).generator(0, 0, "other")


class TestSpectralWeights:
    def test_zero_mode_removed(self, small_grid, gaussian):
        assert spectral_weights(small_grid, gaussian)[0, 0, 0] == 0.0

    def test_riesz_zero_mode_does_not_raise(self, small_grid, riesz):
        w = spectral_weights(small_grid, riesz)
        assert w[0, 0, 0] == 0.0
        assert np.all(np.isfinite(w))

    def test_radial_symmetry(self, small_grid, riesz):
        w = spectral_weights(small_grid, riesz)
        assert w[1, 2, 0] == pytest.approx(w[2, 0, 1])
        assert w[3, 0, 0] == pytest.approx(w[0, 0, 3])

    def test_half_layout_matches_full(self, small_grid, gaussian):
        full = spectral_weights(small_grid, gaussian)
        half = spectral_weights(small_grid, gaussian, half=True)
        assert np.allclose(full[:, :, :small_grid.N // 2 + 1], half)

    def test_sum_approximates_gamma_at_origin(self):
        # L = 16 ≥ 8·scale; the lattice sum misses only the zero-mode cell
        grid = TorusGrid(64, 16.0)
        kernel = GaussianKernel(1.0)
        total = spectral_weights(grid, kernel).sum()
        assert total == pytest.approx(1.0, rel=0.01)

    def test_nonnegative(self, small_grid, riesz, gaussian):
        for kernel in (riesz, gaussian):
            assert np.all(spectral_weights(small_grid, kernel) >= 0.0)

    def test_negative_density_rejected(self, small_grid):
        bad = CustomKernel(lambda r: r, lambda rho: -np.ones_like(rho))
        with pytest.raises(NoiseError):
            spectral_weights(small_grid, bad)


class TestIncrements:
    def test_real_and_deterministic(self, small_grid, gaussian, seed):
        a = sample_increment(small_grid, gaussian, 0.1, seed, path=2, step=3)
        b = sample_increment(small_grid, gaussian, 0.1, seed, path=2, step=3)
        assert a.values.dtype == np.float64
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.spectrum, b.spectrum)

    def test_full_spectrum_is_hermitian(self, small_grid, gaussian, seed):
        sampler = NoiseSampler(small_grid, gaussian, 0.1, seed)
        full = noise_spectrum(sampler, 0, 0, full=True)
        values = fft.ifftn(full)
        assert np.max(np.abs(values.imag)) < 1e-12 * max(1.0, np.max(np.abs(values.real)))
        assert np.allclose(values.real, sampler.increment(0, 0).values, atol=1e-12)

    def test_spectrum_matches_values(self, small_grid, riesz, seed):
        incr = NoiseSampler(small_grid, riesz, 0.05, seed).increment(1, 1)
        assert np.allclose(fft.rfftn(incr.values), incr.spectrum, atol=1e-8)

    def test_zero_mean_in_space(self, small_grid, gaussian, seed):
        incr = NoiseSampler(small_grid, gaussian, 0.1, seed).increment(0, 0)
        assert abs(incr.values.mean()) < 1e-12

    def test_degenerate_kernel_gives_zero_field(self, small_grid, seed):
        flat = CustomKernel(lambda r: np.zeros_like(r), lambda rho: np.zeros_like(rho))
        incr = NoiseSampler(small_grid, flat, 0.1, seed).increment(0, 0)
        assert not np.any(incr.values)

    def test_pointwise_variance_is_weight_sum(self, tiny_grid, gaussian, seed):
        dt = 0.2
        sampler = NoiseSampler(tiny_grid, gaussian, dt, seed)
        draws = np.array([sampler.increment(p, 0).values[0, 0, 0] for p in range(10_000)])
        expected = dt * spectral_weights(tiny_grid, gaussian).sum()
        var = float(np.var(draws, ddof=1))
        stderr = expected * math.sqrt(2.0 / (draws.size - 1))
        assert abs(var - expected) < 5.0 * stderr

    def test_lag_covariance(self, tiny_grid, gaussian, seed):
        dt = 0.2
        sampler = NoiseSampler(tiny_grid, gaussian, dt, seed)
        pairs = np.array([(v[0, 0, 0], v[1, 0, 0]) for v in
                          (sampler.increment(p, 1).values for p in range(10_000))])
        expected = lattice_covariance(tiny_grid, gaussian, dt)[1, 0, 0]
        prod = pairs[:, 0] * pairs[:, 1]
        assert abs(prod.mean() - expected) < 5.0 * prod.std() / math.sqrt(prod.size)

    def test_steps_are_uncorrelated(self, small_grid, gaussian, seed):
        sampler = NoiseSampler(small_grid, gaussian, 0.1, seed)
        correlations = []
        for step in range(20):
            a = sampler.increment(0, step).values.ravel()
            b = sampler.increment(0, step + 1).values.ravel()
            correlations.append(np.dot(a, b) / math.sqrt(np.dot(a, a) * np.dot(b, b)))
        assert abs(np.mean(correlations)) < 0.04
        assert max(abs(c) for c in correlations) < 0.2

    def test_rejects_nonpositive_dt(self, small_grid, gaussian, seed):
        with pytest.raises(NoiseError):
            NoiseSampler(small_grid, gaussian, 0.0, seed)

    def test_lattice_covariance_origin(self, small_grid, riesz):
        cov = lattice_covariance(small_grid, riesz, 0.5)
        assert cov[0, 0, 0] == pytest.approx(0.5 * spectral_weights(small_grid, riesz).sum())
