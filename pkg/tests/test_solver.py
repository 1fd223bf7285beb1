"""Trigonometric, additive and Picard time stepping."""

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy import fft, stats

from stowave.averages import ball_weights
from stowave.kernels import CustomKernel, GaussianKernel
from stowave.noise import NoiseIncrement, SeedPolicy, TorusGrid
from stowave.oracle import discrete_duhamel_variance, discrete_mode_variance
from stowave.solver import (ConstantSigma, CustomSigma, FieldState, LinearSigma, NumericalBlowup, SineShiftSigma,
                            Solver, SolverConfig, SolverConfigError, picard_errors, sigma_from_spec, simulate_path,
                            simulate_picard, step_trig)

SILENT = CustomKernel(lambda r: np.zeros_like(r), lambda rho: np.zeros_like(rho), description="silent")


def make_config(grid, kernel, sigma, mode="trig", dt=0.125, T=0.5, times=(0.0, 0.25, 0.5), n=3):
    return SolverConfig(grid, dt, T, sigma, kernel, mode=mode, snapshot_times=times, picard_iterations=n)


class TestSigma:
    def test_records(self):
        assert sigma_from_spec({"type": "constant", "c": 2}) == ConstantSigma(2.0)
        assert sigma_from_spec({"type": "linear", "a": 0, "b": 1}) == LinearSigma(0.0, 1.0)
        assert sigma_from_spec({"type": "sine_shift", "epsilon": 0.25}) == SineShiftSigma(0.25)
        with pytest.raises(SolverConfigError):
            sigma_from_spec({"type": "cubic"})

    def test_lipschitz_and_value_at_one(self):
        s = SineShiftSigma(0.5)
        assert s.lipschitz == 0.5
        assert s.at_one == pytest.approx(1.0 + 0.5 * math.sin(1.0))
        assert LinearSigma(0.0, 1.0).at_one == 1.0

    def test_clt_admissibility(self):
        SineShiftSigma(0.5).check_clt_admissible()
        with pytest.raises(SolverConfigError):
            ConstantSigma(1.0).check_clt_admissible()
        with pytest.raises(SolverConfigError):
            LinearSigma(-1.0, 1.0).check_clt_admissible()
        with pytest.raises(SolverConfigError):
            CustomSigma(np.sin).check_clt_admissible()

    def test_custom_sigma_has_no_record(self):
        with pytest.raises(SolverConfigError):
            CustomSigma(np.sin, lipschitz=1.0, description="sin").to_spec()


class TestSolverConfig:
    def test_snapshot_steps(self, small_grid, gaussian, sine_sigma):
        cfg = make_config(small_grid, gaussian, sine_sigma)
        assert cfg.steps == 4
        assert cfg.snapshot_steps == [0, 2, 4]

    @pytest.mark.parametrize("kwargs", [
        {"dt": 0.3},
        {"times": (0.5, 0.25)},
        {"times": (0.1,)},
        {"times": (0.75,)},
        {"mode": "implicit"},
    ])
    def test_rejections(self, small_grid, gaussian, sine_sigma, kwargs):
        with pytest.raises(SolverConfigError):
            make_config(small_grid, gaussian, sine_sigma, **kwargs)

    def test_constant_sigma_needs_additive_or_picard(self, small_grid, gaussian):
        with pytest.raises(SolverConfigError):
            make_config(small_grid, gaussian, ConstantSigma(1.0))
        make_config(small_grid, gaussian, ConstantSigma(1.0), mode="additive")
        make_config(small_grid, gaussian, ConstantSigma(1.0), mode="picard")

    def test_picard_iterations_bounded_by_sequence(self, small_grid, gaussian, sine_sigma):
        with pytest.raises(SolverConfigError):
            make_config(small_grid, gaussian, sine_sigma, mode="picard", n=33)

    def test_light_cone(self, small_grid, gaussian, sine_sigma):
        cfg = make_config(small_grid, gaussian, sine_sigma)
        cfg.check_light_cone(5.0)
        with pytest.raises(SolverConfigError):
            cfg.check_light_cone(7.5)


class TestTrigStep:
    def test_constant_field_is_stationary_without_noise(self, small_grid, sine_sigma):
        state = FieldState.initial(small_grid)
        for _ in range(5):
            state = step_trig(state, NoiseIncrement.zeros(small_grid, 0.1), 0.1, sine_sigma)
        assert np.allclose(state.u, 1.0, atol=1e-14)
        assert np.allclose(state.v, 0.0, atol=1e-14)
        assert state.t == pytest.approx(0.5)

    def test_single_mode_energy_is_conserved(self, small_grid, sine_sigma):
        x = np.arange(small_grid.N) * small_grid.h
        u0 = 1.0 + 0.3 * np.cos(2.0 * math.pi * 2.0 * x / small_grid.L)[:, None, None] * np.ones(small_grid.shape)
        state = FieldState(small_grid, 0.0, u0, np.zeros(small_grid.shape))
        omega = 2.0 * math.pi * 2.0 / small_grid.L

        def energy(s):
            u_hat, v_hat = fft.rfftn(s.u)[2, 0, 0], fft.rfftn(s.v)[2, 0, 0]
            return omega ** 2 * abs(u_hat) ** 2 + abs(v_hat) ** 2

        e0 = energy(state)
        for _ in range(37):
            state = step_trig(state, NoiseIncrement.zeros(small_grid, 0.07), 0.07, sine_sigma)
        assert energy(state) == pytest.approx(e0, rel=1e-12)
        # the exact rotation: û(t) = cos(ωt)·û(0)
        assert fft.rfftn(state.u)[2, 0, 0].real == pytest.approx(
            math.cos(omega * 37 * 0.07) * fft.rfftn(u0)[2, 0, 0].real, rel=1e-10)

    def test_grid_mismatch(self, small_grid, tiny_grid, sine_sigma):
        with pytest.raises(SolverConfigError):
            step_trig(FieldState.initial(small_grid), NoiseIncrement.zeros(tiny_grid, 0.1), 0.1, sine_sigma)

    def test_blowup_reports_step(self, tiny_grid, gaussian, seed):
        sigma = CustomSigma(lambda u: np.full_like(u, np.inf), lipschitz=1.0)
        cfg = make_config(tiny_grid, gaussian, sigma)
        with pytest.raises(NumericalBlowup) as info:
            simulate_path(cfg, seed, 0)
        assert info.value.step == 0


class TestPaths:
    def test_zero_snapshot_returns_initial_state(self, small_grid, gaussian, sine_sigma, seed):
        states = simulate_path(make_config(small_grid, gaussian, sine_sigma, times=(0.0,)), seed, 0)
        assert len(states) == 1
        assert states[0].t == 0.0
        assert np.array_equal(states[0].u, np.ones(small_grid.shape))

    def test_silent_noise_keeps_u_at_one(self, small_grid, sine_sigma, seed):
        for state in simulate_path(make_config(small_grid, SILENT, sine_sigma), seed, 0):
            assert np.allclose(state.u, 1.0, atol=1e-13)

    def test_deterministic_and_path_dependent(self, small_grid, gaussian, sine_sigma, seed):
        cfg = make_config(small_grid, gaussian, sine_sigma)
        a = simulate_path(cfg, seed, 3)[-1].u
        b = Solver(cfg, SeedPolicy(seed.master_seed)).simulate_path(3)[-1].u
        c = simulate_path(cfg, seed, 4)[-1].u
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_threads_do_not_change_paths(self, small_grid, gaussian, sine_sigma, seed):
        solver = Solver(make_config(small_grid, gaussian, sine_sigma), seed)
        serial = [solver.simulate_path(p)[-1].u for p in range(6)]
        with ThreadPoolExecutor(max_workers=3) as pool:
            parallel = list(pool.map(lambda p: solver.simulate_path(p)[-1].u, range(6)))
        for a, b in zip(serial, parallel):
            assert np.array_equal(a, b)

    def test_constant_sigma_trig_matches_additive(self, small_grid, gaussian, seed):
        trig = simulate_path(make_config(small_grid, gaussian, LinearSigma(1.0, 0.0)), seed, 1)
        additive = simulate_path(make_config(small_grid, gaussian, ConstantSigma(1.0), mode="additive"), seed, 1)
        for a, b in zip(trig, additive):
            assert np.allclose(a.u, b.u, atol=1e-12)

    def test_picard_mode_rejected_by_simulate_path(self, small_grid, gaussian, sine_sigma, seed):
        with pytest.raises(SolverConfigError):
            simulate_path(make_config(small_grid, gaussian, sine_sigma, mode="picard"), seed, 0)

    def test_additive_mode_variance_matches_lattice_sum(self, tiny_grid, gaussian, seed):
        dt, T, c = 0.125, 0.5, 1.5
        cfg = make_config(tiny_grid, gaussian, ConstantSigma(c), mode="additive", dt=dt, T=T, times=(T,))
        solver = Solver(cfg, seed)
        M = 2000
        modes = [(1, 0, 0), (0, 1, 1), (2, 1, 0)]
        power = np.zeros(len(modes))
        for p in range(M):
            u_hat = fft.rfftn(solver.simulate_path(p)[-1].u) / tiny_grid.N ** 3
            power += [abs(u_hat[k]) ** 2 for k in modes]
        expected = discrete_mode_variance(tiny_grid, gaussian, T, dt, c)
        for i, k in enumerate(modes):
            target = expected[k]
            # |û|² of a circular complex Gaussian is exponential: sd = mean
            assert abs(power[i] / M - target) < 5.0 * target / math.sqrt(M)

    def test_additive_modes_are_gaussian(self, tiny_grid, gaussian, seed):
        dt, T = 0.125, 0.5
        cfg = make_config(tiny_grid, gaussian, ConstantSigma(1.0), mode="additive", dt=dt, T=T, times=(T,))
        solver = Solver(cfg, seed)
        modes = [(1, 0, 0), (0, 1, 1), (2, 1, 0), (1, 1, 1), (0, 0, 2), (3, 0, 1)]
        draws = []
        for p in range(400):
            u_hat = fft.rfftn(solver.simulate_path(p)[-1].u)
            draws.append([part for k in modes for part in (u_hat[k].real, u_hat[k].imag)])
        draws = np.array(draws)
        pooled = ((draws - draws.mean(axis=0)) / draws.std(axis=0)).ravel()
        assert abs(stats.skew(pooled)) < 0.2
        assert abs(stats.kurtosis(pooled)) < 0.4

    def test_halving_dt_moves_additive_variance_under_two_percent(self, gaussian):
        grid = TorusGrid(32, 16.0)
        weights = ball_weights(grid, 2.0, T=1.0)
        coarse = discrete_duhamel_variance(grid, gaussian, weights, 1.0, 1.0 / 64.0)
        fine = discrete_duhamel_variance(grid, gaussian, weights, 1.0, 1.0 / 128.0)
        assert fine > 0.0
        assert abs(coarse - fine) < 0.02 * fine


class TestPicard:
    def test_iterate_zero_is_one(self, small_grid, gaussian, sine_sigma, seed):
        iterates = simulate_picard(make_config(small_grid, gaussian, sine_sigma, mode="picard"), seed, 0)
        assert len(iterates) == 4
        for state in iterates[0]:
            assert np.array_equal(state.u, np.ones(small_grid.shape))

    def test_shapes_and_determinism(self, small_grid, gaussian, sine_sigma, seed):
        cfg = make_config(small_grid, gaussian, sine_sigma, mode="picard")
        a = simulate_picard(cfg, seed, 2)
        b = simulate_picard(cfg, seed, 2)
        assert [len(states) for states in a] == [3, 3, 3, 3]
        for sa, sb in zip(a, b):
            assert np.array_equal(sa[-1].u, sb[-1].u)

    def test_needs_picard_mode(self, small_grid, gaussian, sine_sigma, seed):
        with pytest.raises(SolverConfigError):
            simulate_picard(make_config(small_grid, gaussian, sine_sigma), seed, 0)

    def test_errors_against_self_are_zero(self, small_grid, gaussian, sine_sigma, seed):
        iterates = simulate_picard(make_config(small_grid, gaussian, sine_sigma, mode="picard"), seed, 0)
        assert picard_errors(iterates, iterates[-1])[-1] == 0.0

    def test_first_iterate_variance_matches_mollified_lattice_sum(self, tiny_grid, gaussian, seed):
        dt, T, c = 0.125, 0.5, 1.5
        cfg = make_config(tiny_grid, gaussian, ConstantSigma(c), mode="picard", dt=dt, T=T, times=(T,), n=1)
        solver = Solver(cfg, seed)
        M = 2000
        modes = [(1, 0, 0), (0, 1, 1), (2, 1, 0)]
        power = np.zeros(len(modes))
        for p in range(M):
            u_hat = fft.rfftn(solver.simulate_picard(p)[1][-1].u) / tiny_grid.N ** 3
            power += [abs(u_hat[k]) ** 2 for k in modes]
        expected = discrete_mode_variance(tiny_grid, gaussian, T, dt, c, mollifier_n=1)
        for i, k in enumerate(modes):
            target = expected[k]
            assert abs(power[i] / M - target) < 5.0 * target / math.sqrt(M)

    @pytest.mark.slow
    def test_iterates_approach_trig_scheme(self, seed):
        grid = TorusGrid(32, 16.0)
        kernel = GaussianKernel(1.0)
        sigma = SineShiftSigma(0.5)
        times = tuple(k * 0.125 for k in range(9))
        picard = simulate_picard(make_config(grid, kernel, sigma, mode="picard", dt=1 / 32, T=1.0, times=times, n=5),
                                 seed, 0)
        reference = simulate_path(make_config(grid, kernel, sigma, dt=1 / 32, T=1.0, times=times), seed, 0)
        errors = picard_errors(picard, reference)
        assert all(b < a for a, b in zip(errors[1:], errors[2:]))
        assert errors[5] < 0.25 * errors[1]
