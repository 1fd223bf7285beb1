"""stowave v0.1 - Experiment Runner

Turns an ExperimentConfig into files on disk plus a verdict.

Kinds:
  - simulate          raw ensemble of F_R(t) over all radii and snapshot times
  - clt-scan          W1 / Kolmogorov distance of normalized F_R(T) per radius
  - variance-scan     log-log fit of Var F_R(T) against R
  - covariance-limit  R^{-d}·Cov(F_R(t1), F_R(t2)) against the limit formulas
  - picard-check      sup-grid L² distance of Picard iterates to the trig scheme
  - tightness-scan    E|F_R(T) - F_R(T-d)|² against d
  - oracle-only       quadrature targets and constants, no Monte Carlo

Paths are simulated in fixed blocks of BLOCK_SIZE on a thread pool. Each
block keeps its paths in order and blocks are merged by a fixed pairwise
reduction, so every number written is independent of the thread count.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from .averages import BallConfigError, BallWeights, ball_weights, spatial_average
from .config import ExperimentConfig
from .kernels import (CorrelationKernel, RieszKernel, check_dalang, parseval_pair,
                      riesz_constant, tau_beta, tau_beta_closed_form)
from .noise import SeedPolicy
from .oracle import (QuadratureDivergence, additive_l1_limit, discrete_duhamel_covariance,
                     discrete_duhamel_variance, finite_radius_target, limit_covariance_l1,
                     limit_covariance_riesz, linear_variance, propagator_energy)
from .persistence import RunManifest, RunStore, utc_now, verify_manifest
from .propagator import multiplier_table_rows
from .solver import NumericalBlowup, Solver, SolverConfig
from .stats import (DegenerateEnsemble, Ensemble, EtaAccumulator, FitError, LagAccumulator,
                    covariance_estimate, decay_slope, ergodic_ratios, eta_curve, increment_moment,
                    lag_curve, scaling_exponent_fit, tree_reduce, variance_with_ci,
                    wasserstein1_to_normal)

logger = logging.getLogger("stowave.runner")

BLOCK_SIZE = 16
DALANG_BETAS = (0.5, 1.0, 1.5, 1.9, 2.0, 2.5)


class ExperimentError(Exception):
    """Raised when an experiment cannot be carried out."""
    pass


# ════════════════════════════════════════════════════════
#  CHECKS & OUTCOME
# ════════════════════════════════════════════════════════

@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "value": self.value, "threshold": self.threshold,
                "passed": self.passed, "detail": self.detail}

    def __str__(self):
        mark = "✓" if self.passed else "✗"
        return f"{mark} {self.name}: {self.value:.6g} (threshold {self.threshold:.6g}) {self.detail}".rstrip()


def check_at_most(name: str, value: float, threshold: float, detail: str = "") -> Check:
    return Check(name, float(value), float(threshold), bool(value <= threshold), detail)


def check_at_least(name: str, value: float, threshold: float, detail: str = "") -> Check:
    return Check(name, float(value), float(threshold), bool(value >= threshold), detail)


def relative_gap(measured: float, target: float) -> float:
    if target == 0.0:
        return 0.0 if measured == 0.0 else math.inf
    return abs(measured - target) / abs(target)


@dataclass
class RunOutcome:
    manifest: RunManifest
    summary: dict[str, Any]

    @property
    def checks(self) -> list[Check]:
        return [Check(**c) for c in self.summary.get("checks", [])]

    @property
    def passed(self) -> bool:
        return bool(self.summary.get("passed", False))


# ════════════════════════════════════════════════════════
#  ENSEMBLE SIMULATION
# ════════════════════════════════════════════════════════

@dataclass
class BlockResult:
    """Per-block output; `merge` keeps path order and is associative."""
    first_path: int
    samples: np.ndarray                      # (paths, times, radii)
    eta: list[EtaAccumulator]
    lags: dict[tuple[int, int], LagAccumulator]
    picard_sq: Optional[np.ndarray] = None   # (iterates, times), summed over paths
    dumps: list[tuple[float, np.ndarray]] = field(default_factory=list)

    def merge(self, other: BlockResult) -> BlockResult:
        lags = {key: acc.merge(other.lags[key]) for key, acc in self.lags.items()}
        picard = None
        if self.picard_sq is not None:
            picard = self.picard_sq + other.picard_sq
        return BlockResult(
            self.first_path,
            np.concatenate([self.samples, other.samples], axis=0),
            [a.merge(b) for a, b in zip(self.eta, other.eta)],
            lags,
            picard,
            self.dumps + other.dumps,
        )


class EnsembleSimulator:
    """Runs M paths of one solver configuration and reduces them.

    Usage:
        sim = EnsembleSimulator(solver_config, SeedPolicy(7), radii=[2, 4], threads=4)
        result = sim.run(paths=200, lag_pairs=[(16, 16)])
    """

    def __init__(self, config: SolverConfig, seed: SeedPolicy, radii: list[float], threads: int = 0,
                 dump_first_path: bool = False):
        self.config = config
        self.seed = seed
        self.radii = list(radii)
        self.threads = threads or (os.cpu_count() or 1)
        self.dump_first_path = dump_first_path
        self.solver = Solver(config, seed)
        try:
            self.weights = [ball_weights(config.grid, R, config.T) for R in self.radii]
        except BallConfigError as e:
            raise ExperimentError(str(e)) from e

    def _new_block(self, start: int, count: int, lag_pairs) -> BlockResult:
        n_times = len(self.config.snapshot_times)
        return BlockResult(
            start,
            np.zeros((count, n_times, len(self.radii))),
            [EtaAccumulator() for _ in range(n_times)],
            {pair: LagAccumulator(self.config.grid) for pair in lag_pairs},
        )

    def _run_block(self, start: int, stop: int, lag_pairs: list[tuple[int, int]]) -> BlockResult:
        block = self._new_block(start, stop - start, lag_pairs)
        keep = {i for pair in lag_pairs for i in pair}
        sigma = self.config.sigma
        for p in range(start, stop):
            kept: dict[int, np.ndarray] = {}
            for i, state in enumerate(self.solver.iter_path(p)):
                for r, w in enumerate(self.weights):
                    block.samples[p - start, i, r] = spatial_average(state, w)
                block.eta[i].add(sigma(state.u))
                if i in keep:
                    kept[i] = state.u
                if p == 0 and self.dump_first_path:
                    block.dumps.append((state.t, state.u))
            for pair, acc in block.lags.items():
                acc.add(kept[pair[0]], kept[pair[1]])
        return block

    def _run_picard_block(self, start: int, stop: int) -> BlockResult:
        reference = Solver(_reference_config(self.config), self.seed)
        n_times = len(self.config.snapshot_times)
        block = self._new_block(start, stop - start, [])
        block.picard_sq = np.zeros((self.config.picard_iterations + 1, n_times))
        for p in range(start, stop):
            ref = reference.simulate_path(p)
            for i, (ref_state, iterates) in enumerate(zip(ref, self.solver.iter_picard(p))):
                for m, state in enumerate(iterates):
                    block.picard_sq[m, i] += float(np.mean((state.u - ref_state.u) ** 2))
                for r, w in enumerate(self.weights):
                    block.samples[p - start, i, r] = spatial_average(iterates[-1], w)
                block.eta[i].add(self.config.sigma(iterates[-1].u))
        return block

    def run(self, paths: int, lag_pairs: Optional[list[tuple[int, int]]] = None) -> BlockResult:
        lag_pairs = list(lag_pairs or [])
        bounds = [(s, min(s + BLOCK_SIZE, paths)) for s in range(0, paths, BLOCK_SIZE)]
        picard = self.config.mode == "picard"
        logger.info(f"Simulating {paths} paths in {len(bounds)} blocks on {self.threads} threads "
                    f"({self.config.mode}, {self.config.grid}, {self.config.steps} steps)")

        def work(bound: tuple[int, int]) -> BlockResult:
            if picard:
                return self._run_picard_block(*bound)
            return self._run_block(*bound, lag_pairs)

        try:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                blocks = list(pool.map(work, bounds))
        except NumericalBlowup as e:
            raise ExperimentError(f"Numerical blowup at step {e.step}; reduce dt or the noise strength") from e
        return tree_reduce(blocks, BlockResult.merge)


def _reference_config(config: SolverConfig) -> SolverConfig:
    mode = "additive" if config.sigma.is_constant else "trig"
    return SolverConfig(config.grid, config.dt, config.T, config.sigma, config.kernel, mode,
                        config.snapshot_times, config.picard_iterations, config.mollifiers)


# ════════════════════════════════════════════════════════
#  EXPERIMENT RUNNER
# ════════════════════════════════════════════════════════

class ExperimentRunner:
    """Executes one validated config and writes its run directory."""

    def __init__(self, config: ExperimentConfig):
        self.config = config.validate()
        self.kernel: CorrelationKernel = config.correlation_kernel
        self.sigma = config.sigma_function
        self.tol = config.thresholds
        self.store: Optional[RunStore] = None
        self.checks: list[Check] = []
        self.results: dict[str, Any] = {}
        self._weights: list[BallWeights] = []

    # ── Shared pieces ────────────────────────────────────

    def _simulate(self, lag_pairs: Optional[list[tuple[float, float]]] = None,
                  mode: Optional[str] = None) -> tuple[SolverConfig, BlockResult]:
        cfg = self.config
        solver_config = cfg.solver_config(mode=mode)
        index = self._time_index(solver_config)
        pairs = [(index[self._step(a)], index[self._step(b)]) for a, b in (lag_pairs or [])]
        sim = EnsembleSimulator(solver_config, SeedPolicy(cfg.seed), cfg.radii, cfg.threads, cfg.dump_fields)
        result = sim.run(cfg.paths, pairs)
        self._weights = sim.weights
        self._write_ensemble(solver_config, result)
        if cfg.dump_fields:
            for t, u in result.dumps:
                self.store.write_field(f"fields/path0_step{self._step(t):05d}.field", solver_config.grid, t, u)
        return solver_config, result

    def _step(self, t: float) -> int:
        return int(round(t / self.config.dt))

    def _time_index(self, solver_config: SolverConfig) -> dict[int, int]:
        return {s: i for i, s in enumerate(solver_config.snapshot_steps)}

    def _ensemble(self, solver_config: SolverConfig, result: BlockResult, t: float, r: int) -> Ensemble:
        i = self._time_index(solver_config)[self._step(t)]
        return Ensemble(result.samples[:, i, r], R=self.config.radii[r], t=solver_config.snapshot_times[i],
                        config_hash=self.config.config_hash, seed=self.config.seed)

    def _write_ensemble(self, solver_config: SolverConfig, result: BlockResult):
        rows = []
        for p in range(result.samples.shape[0]):
            for i, t in enumerate(solver_config.snapshot_times):
                for r, R in enumerate(self.config.radii):
                    rows.append((p, R, t, result.samples[p, i, r]))
        self.store.write_csv("ensemble.csv", ["path_index", "R", "t", "value"], rows)

    def _variance_exponent(self) -> tuple[float, float]:
        """Target slope of log Var F_R and its allowed half-width."""
        if isinstance(self.kernel, RieszKernel):
            return 6.0 - self.kernel.beta, self.tol["riesz_slope_halfwidth"]
        lo, hi = self.tol["l1_slope_min"], self.tol["l1_slope_max"]
        return 0.5 * (lo + hi), 0.5 * (hi - lo)

    def _normalizing_power(self) -> float:
        return 6.0 - self.kernel.beta if isinstance(self.kernel, RieszKernel) else 3.0

    # ── simulate ─────────────────────────────────────────

    def run_simulate(self):
        solver_config, result = self._simulate()
        rows = []
        for i, t in enumerate(solver_config.snapshot_times):
            for r, R in enumerate(self.config.radii):
                values = result.samples[:, i, r]
                var = float(np.var(values, ddof=1)) if values.size > 1 else 0.0
                rows.append((R, t, float(values.mean()), var))
        self.store.write_csv("moments.csv", ["R", "t", "mean", "variance"], rows)
        self.results["paths"] = int(result.samples.shape[0])

    # ── clt-scan ─────────────────────────────────────────

    def run_clt_scan(self):
        cfg = self.config
        solver_config, result = self._simulate()
        additive = cfg.mode == "additive"
        rows, w1s, variances = [], [], []
        for r, R in enumerate(cfg.radii):
            e = self._ensemble(solver_config, result, cfg.T, r)
            var, se = variance_with_ci(e)
            report = wasserstein1_to_normal(e)
            w1s.append(report.w1)
            variances.append(var)
            rows.append((R, var, se, report.w1, report.kolmogorov, report.mc_floor, report.kolmogorov_bound))
            logger.info(f"R={R:g}: Var={var:.6g}, {report}")
            if additive:
                self.checks.append(check_at_most(f"additive_w1_R{R:g}", report.w1,
                                                 report.mc_floor + self.tol["additive_w1_margin"]))
        ratios = ergodic_ratios(cfg.radii, variances)
        self.store.write_csv("clt.csv", ["R", "variance", "stderr", "w1", "kolmogorov", "mc_floor",
                                         "kolmogorov_bound", "ergodic_ratio"],
                             [row + (q,) for row, q in zip(rows, ratios)])
        self.checks.append(check_at_most("kolmogorov_within_bound", rows[-1][4], rows[-1][6],
                                         f"R={cfg.radii[-1]:g}"))
        if not additive:
            self.checks.append(check_at_most("w1_largest_radius", w1s[-1], self.tol["w1_max"],
                                             f"R={cfg.radii[-1]:g}"))
        rises = [b - a for a, b in zip(w1s, w1s[1:]) if b > a]
        worst = max(rises, default=0.0)
        allowed = int(self.tol["w1_monotone_violations"])
        self.checks.append(check_at_most("w1_monotone_worst_rise",
                                         worst if len(rises) <= allowed else math.inf,
                                         self.tol["w1_monotone_slack"], f"{len(rises)} rises"))
        self.results["w1"] = w1s
        if len(cfg.radii) >= 3 and all(w > 0.0 for w in w1s):
            self.results["w1_decay"] = decay_slope(cfg.radii, w1s).to_dict()

    # ── variance-scan ────────────────────────────────────

    def run_variance_scan(self):
        cfg = self.config
        solver_config, result = self._simulate()
        additive = cfg.mode == "additive"
        c = self.sigma.at_one
        rows, points = [], []
        variances = []
        for r, R in enumerate(cfg.radii):
            e = self._ensemble(solver_config, result, cfg.T, r)
            var, se = variance_with_ci(e)
            variances.append(var)
            points.append((R, var))
            row = [R, var, se]
            if additive:
                discrete = discrete_duhamel_variance(solver_config.grid, self.kernel, self._weights[r],
                                                     cfg.T, cfg.dt, c)
                continuum = linear_variance(R, cfg.T, self.kernel, c)
                row += [discrete, continuum]
                self.checks.append(check_at_most(f"discrete_oracle_sigmas_R{R:g}",
                                                 abs(var - discrete) / se if se > 0 else 0.0,
                                                 self.tol["additive_discrete_sigmas"]))
                self.checks.append(check_at_most(f"continuum_oracle_rel_R{R:g}", relative_gap(var, continuum),
                                                 self.tol["additive_continuum_rel"]))
            rows.append(row)
        try:
            fit = scaling_exponent_fit(points)
        except FitError as e:
            raise ExperimentError(f"Variance fit failed: {e}") from e
        header = ["R", "variance", "stderr"] + (["discrete_oracle", "continuum_oracle"] if additive else [])
        self.store.write_csv("variance.csv", header, rows)
        target, half = self._variance_exponent()
        self.checks.append(check_at_most("variance_slope_gap", abs(fit.slope - target), half,
                                         f"slope {fit.slope:.4f}, target {target:g}"))
        self.checks.append(check_at_least("variance_fit_r2", fit.r_squared, self.tol["fit_r2_min"]))
        ratios = ergodic_ratios(cfg.radii, variances)
        rises = sum(1 for a, b in zip(ratios, ratios[1:]) if b >= a)
        self.checks.append(check_at_most("ergodic_ratio_rises", rises, 0))
        self.results["fit"] = fit.to_dict()
        self.results["ergodic_ratios"] = ratios

    # ── covariance-limit ─────────────────────────────────

    def run_covariance_limit(self):
        cfg = self.config
        pairs = cfg.pairs
        solver_config, result = self._simulate(lag_pairs=pairs)
        r = len(cfg.radii) - 1
        R = cfg.radii[r]
        power = self._normalizing_power()
        index = self._time_index(solver_config)
        eta_times = list(solver_config.snapshot_times)
        curve = eta_curve(eta_times, result.eta)
        self.store.write_csv("eta.csv", ["t", "eta", "stderr"],
                             list(zip(curve.times, curve.values, curve.stderrs)))
        c = self.sigma.at_one
        rows = []
        for t1, t2 in pairs:
            e1 = self._ensemble(solver_config, result, t1, r)
            e2 = self._ensemble(solver_config, result, t2, r)
            cov, se = covariance_estimate(e1, e2)
            normalized = cov / R ** power
            row = {"t1": t1, "t2": t2, "R": R, "cov": cov, "stderr": se, "normalized": normalized}
            tag = f"({t1:g},{t2:g})"
            if isinstance(self.kernel, RieszKernel):
                limit = limit_covariance_riesz(t1, t2, self.kernel.beta, curve)
                row["limit"] = limit.value
                row["limit_stderr"] = limit.stderr
                self.checks.append(check_at_most(f"riesz_limit_rel{tag}", relative_gap(normalized, limit.value),
                                                 self.tol["covariance_rel"]))
            else:
                i1, i2 = index[self._step(t1)], index[self._step(t2)]
                acc = result.lags[(i1, i2)]
                lag = lag_curve(acc, t1, t2, cfg.default_lag_radius(t1, t2))
                limit = limit_covariance_l1(t1, t2, lag)
                finite = finite_radius_target(acc.covariance(), self._weights[r]) / R ** power
                row.update({"limit": limit.value, "finite_radius_target": finite,
                            "lag_radius": lag.radius, "lag_baseline": lag.baseline,
                            "limit_gap": relative_gap(normalized, limit.value),
                            "finite_radius_gap": relative_gap(normalized, finite)})
                self.checks.append(check_at_most(f"l1_limit_rel{tag}", row["limit_gap"], self.tol["covariance_rel"]))
                self.store.write_csv(f"lag_t{self._step(t1)}_t{self._step(t2)}.csv", ["radius", "covariance"],
                                     lag.profile(solver_config.grid))
                if cfg.mode == "additive":
                    parseval = additive_l1_limit(t1, t2, self.kernel, c)
                    discrete = discrete_duhamel_covariance(solver_config.grid, self.kernel, self._weights[r],
                                                           t1, t2, cfg.dt, c) / R ** power
                    row.update({"parseval_limit": parseval.value, "discrete_target": discrete})
                    self.checks.append(check_at_most(f"additive_lag_vs_parseval_rel{tag}",
                                                     relative_gap(limit.value, parseval.value),
                                                     self.tol["additive_l1_rel"]))
                    self.checks.append(check_at_most(f"additive_measured_vs_parseval_rel{tag}",
                                                     relative_gap(normalized, parseval.value),
                                                     self.tol["additive_l1_rel"]))
                    self.checks.append(check_at_most(f"additive_measured_vs_discrete_rel{tag}",
                                                     relative_gap(normalized, discrete),
                                                     self.tol["additive_l1_rel"]))
            logger.info(f"Cov{tag} at R={R:g}: normalized {normalized:.6g}, limit {row['limit']:.6g}")
            rows.append(row)
        header = sorted({k for row in rows for k in row}, key=lambda k: (k not in ("t1", "t2", "R"), k))
        self.store.write_csv("covariance.csv", header, [[row.get(k, "") for k in header] for row in rows])
        self.results["covariance"] = rows

    # ── picard-check ─────────────────────────────────────

    def run_picard_check(self):
        cfg = self.config
        solver_config = cfg.solver_config(mode="picard")
        sim = EnsembleSimulator(solver_config, SeedPolicy(cfg.seed), cfg.radii, cfg.threads)
        result = sim.run(cfg.paths)
        errors = [math.sqrt(row.max() / cfg.paths) for row in result.picard_sq]
        self.store.write_csv("picard.csv", ["iterate", "error"], list(enumerate(errors)))
        rises = sum(1 for a, b in zip(errors[1:], errors[2:]) if b > a)
        self.checks.append(check_at_most("picard_error_rises", rises, 0))
        n = cfg.picard_iterations
        if n >= 2:
            self.checks.append(check_at_most("picard_last_over_first", errors[n] / errors[1] if errors[1] > 0 else 0.0,
                                             self.tol["picard_ratio"], f"n={n}"))
        logger.info(f"Picard errors: {', '.join(f'{e:.4g}' for e in errors)}")
        self.results["picard_errors"] = errors

    # ── tightness-scan ───────────────────────────────────

    def run_tightness_scan(self):
        cfg = self.config
        solver_config, result = self._simulate()
        increments = sorted(cfg.increment_list)
        rows = []
        moments: dict[float, list[float]] = {}
        for r, R in enumerate(cfg.radii):
            e_t = self._ensemble(solver_config, result, cfg.T, r)
            moments[R] = []
            for d in increments:
                e_s = self._ensemble(solver_config, result, cfg.T - d, r)
                value, se = increment_moment(e_s, e_t)
                moments[R].append(value)
                rows.append((R, d, value, se, value / R ** self._normalizing_power()))
        self.store.write_csv("tightness.csv", ["R", "increment", "moment", "stderr", "normalized"], rows)
        R = cfg.radii[-1]
        try:
            fit = scaling_exponent_fit(list(zip(increments, moments[R])))
        except FitError as e:
            raise ExperimentError(f"Increment fit failed: {e}") from e
        self.checks.append(check_at_least("tightness_slope", fit.slope, self.tol["tightness_slope_min"],
                                          f"R={R:g}"))
        if self.kernel.integrable:
            for R1 in cfg.radii:
                if 2.0 * R1 in moments:
                    q1 = moments[R1][-1] / R1 ** 3
                    q2 = moments[2.0 * R1][-1] / (2.0 * R1) ** 3
                    self.checks.append(check_at_most(f"tightness_ratio_R{R1:g}_R{2 * R1:g}", relative_gap(q2, q1),
                                                     self.tol["tightness_ratio_rel"]))
        self.results["tightness_fit"] = fit.to_dict()

    # ── oracle-only ──────────────────────────────────────

    def run_oracle_only(self):
        cfg = self.config
        kernel = self.kernel
        c = self.sigma.at_one
        try:
            variances = [linear_variance(R, cfg.T, kernel, c) for R in cfg.radii]
        except QuadratureDivergence as e:
            raise ExperimentError(str(e)) from e
        self.store.write_csv("oracle.csv", ["R", "t", "linear_variance"],
                             [(R, cfg.T, v) for R, v in zip(cfg.radii, variances)])
        if len(cfg.radii) >= 3:
            fit = scaling_exponent_fit(list(zip(cfg.radii, variances)))
            target = self._normalizing_power()
            self.checks.append(check_at_most("oracle_slope_gap", abs(fit.slope - target),
                                             self.tol["oracle_slope_halfwidth"],
                                             f"slope {fit.slope:.4f}, target {target:g}"))
            self.results["oracle_fit"] = fit.to_dict()

        lhs, rhs = parseval_pair(kernel)
        self.checks.append(check_at_most("parseval_rel", relative_gap(rhs, lhs), self.tol["parseval_rel"]))
        if isinstance(kernel, RieszKernel):
            beta = kernel.beta
            quad, closed = tau_beta(beta), tau_beta_closed_form(beta)
            self.checks.append(check_at_most("tau_beta_rel", relative_gap(quad, closed), self.tol["tau_rel"]))
            self.checks.append(check_at_most("c_beta_duality", abs(riesz_constant(beta) * riesz_constant(3.0 - beta) - 1.0),
                                             self.tol["parseval_rel"]))
            self.results["tau_beta"] = quad
            self.results["c_beta"] = riesz_constant(beta)

        rows = []
        mismatches = 0
        for beta in DALANG_BETAS:
            report = check_dalang(RieszKernel(beta))
            mismatches += int(report.converged != (beta < 2.0))
            rows.append((beta, report.integral_value, report.converged))
        self.store.write_csv("dalang.csv", ["beta", "integral", "converged"], rows)
        self.checks.append(check_at_most("dalang_grid_mismatches", mismatches, 0))

        energy, bound = propagator_energy(kernel, cfg.T)
        self.checks.append(check_at_most("propagator_energy_over_bound", energy / bound, 1.0))
        self.results["propagator_energy"] = {"energy": energy, "bound": bound}

        if cfg.dump_multipliers:
            grid = cfg.torus
            kmax = math.sqrt(3.0) * grid.N / (2.0 * grid.L)
            self.store.write_csv("multipliers.csv", ["rho", "FG", "Frho_n", "FG_n"],
                                 multiplier_table_rows(cfg.T, 1, kmax))

    # ── Dispatch ─────────────────────────────────────────

    def execute(self) -> RunOutcome:
        cfg = self.config
        self.store = RunStore(cfg.output_dir)
        manifest = RunManifest(cfg.config_hash, __version__, cfg.seed, cfg.kind, started_at=utc_now())
        handler: Callable[[], None] = {
            "simulate": self.run_simulate,
            "clt-scan": self.run_clt_scan,
            "variance-scan": self.run_variance_scan,
            "covariance-limit": self.run_covariance_limit,
            "picard-check": self.run_picard_check,
            "tightness-scan": self.run_tightness_scan,
            "oracle-only": self.run_oracle_only,
        }[cfg.kind]
        logger.info(f"Starting {cfg} → {cfg.output_dir}")
        try:
            handler()
        except (DegenerateEnsemble, QuadratureDivergence) as e:
            raise ExperimentError(f"{cfg.kind}: {e}") from e
        summary = {
            "kind": cfg.kind,
            "config_hash": cfg.config_hash,
            "seed": cfg.seed,
            "version": __version__,
            "kernel": self.kernel.to_spec(),
            "sigma": cfg.sigma,
            "checks": [c.to_dict() for c in self.checks],
            "passed": all(c.passed for c in self.checks),
            "results": self.results,
        }
        self.store.write_json("summary.json", summary)
        manifest.finished_at = utc_now()
        self.store.finalize(manifest)
        logger.info(f"Finished {cfg.kind}: {'PASS' if summary['passed'] else 'FAIL'}")
        return RunOutcome(manifest, summary)


def execute(config: ExperimentConfig) -> RunOutcome:
    return ExperimentRunner(config).execute()


def run(config: ExperimentConfig) -> RunManifest:
    """Execute an experiment and return its manifest."""
    return execute(config).manifest


def report(run_dir: str) -> dict[str, Any]:
    """Verify a finished run directory and return its stored summary."""
    manifest = verify_manifest(run_dir)
    path = Path(run_dir) / "summary.json"
    if "summary.json" not in manifest.files:
        raise ExperimentError(f"{run_dir} has no summary.json in its manifest")
    with open(path, "r", encoding="utf-8") as f:
        summary = json.load(f)
    if summary.get("config_hash") != manifest.config_hash:
        raise ExperimentError(f"{path} belongs to config {summary.get('config_hash', '?')[:12]}, "
                              f"manifest says {manifest.config_hash[:12]}")
    logger.info(f"Verified {manifest}")
    return summary
