"""stowave v0.1 - Experiment Configuration

One JSON file describes one experiment. CLI flags are overrides of its
fields, never a second source of truth.

Example:
    {
      "kind": "clt-scan",
      "kernel": {"type": "gaussian", "scale": 1.0},
      "sigma": {"type": "sine_shift", "epsilon": 0.5},
      "grid": {"N": 64, "L": 24},
      "dt": 0.015625, "T": 1.0,
      "radii": [2, 3, 4, 6, 8],
      "paths": 2000, "seed": 7
    }

Missing keys take the desk-scale defaults below.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional

from .kernels import CorrelationKernel, KernelDomainError, RieszKernel, check_dalang, kernel_from_spec
from .noise import NoiseError, TorusGrid
from .persistence import content_hash
from .solver import SigmaFunction, SolverConfig, SolverConfigError, sigma_from_spec

logger = logging.getLogger("stowave.config")

KINDS = (
    "simulate",
    "clt-scan",
    "variance-scan",
    "covariance-limit",
    "picard-check",
    "tightness-scan",
    "oracle-only",
)

# Kinds whose conclusions rest on the CLT hypotheses
CLT_KINDS = ("clt-scan", "variance-scan", "covariance-limit", "tightness-scan")

# Fields that do not change the numbers a run produces
_UNHASHED = ("output_dir", "threads")

DEFAULT_TOLERANCES: dict[str, float] = {
    "w1_max": 0.10,
    "w1_monotone_slack": 0.01,
    "w1_monotone_violations": 1,
    "additive_w1_margin": 0.02,
    "l1_slope_min": 2.6,
    "l1_slope_max": 3.4,
    "riesz_slope_halfwidth": 0.5,
    "fit_r2_min": 0.98,
    "additive_discrete_sigmas": 3.0,
    "additive_continuum_rel": 0.05,
    "covariance_rel": 0.15,
    "additive_l1_rel": 0.10,
    "picard_ratio": 0.25,
    "tightness_slope_min": 1.7,
    "tightness_ratio_rel": 0.20,
    "oracle_slope_halfwidth": 0.15,
    "tau_rel": 1e-3,
    "parseval_rel": 1e-6,
}


class ConfigError(Exception):
    """A configuration violates a named invariant."""

    def __init__(self, invariant: str, message: str):
        self.invariant = invariant
        super().__init__(f"[{invariant}] {message}")


def _default_snapshots(T: float) -> list[float]:
    return [k * T / 16.0 for k in range(17)]


@dataclass
class ExperimentConfig:
    kind: str = "simulate"
    kernel: dict[str, Any] = field(default_factory=lambda: {"type": "gaussian", "scale": 1.0})
    sigma: dict[str, Any] = field(default_factory=lambda: {"type": "sine_shift", "epsilon": 0.5})
    grid: dict[str, Any] = field(default_factory=lambda: {"N": 64, "L": 24.0})
    dt: float = 1.0 / 64.0
    T: float = 1.0
    snapshot_times: Optional[list[float]] = None
    radii: list[float] = field(default_factory=lambda: [2.0, 3.0, 4.0, 6.0, 8.0])
    paths: int = 2000
    seed: int = 0
    mode: str = "trig"
    picard_iterations: int = 4
    output_dir: str = "runs"
    threads: int = 0
    time_pairs: Optional[list[list[float]]] = None
    increments: Optional[list[float]] = None
    tolerances: dict[str, float] = field(default_factory=dict)
    dump_fields: bool = False
    dump_multipliers: bool = False
    lag_radius: Optional[float] = None

    # ── Codec ────────────────────────────────────────────

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError("keys", f"Unknown config keys: {', '.join(unknown)}")
        cfg = cls(**data)
        cfg._coerce()
        return cfg

    @classmethod
    def from_file(cls, path: str) -> ExperimentConfig:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError("file", f"Config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError("file", f"{path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise ConfigError("file", f"{path} must hold a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, **overrides: Any) -> ExperimentConfig:
        """Copy with the given fields replaced; None values are ignored."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        cfg = replace(self, **changes)
        cfg._coerce()
        return cfg

    def _coerce(self):
        try:
            self.dt = float(self.dt)
            self.T = float(self.T)
            self.paths = int(self.paths)
            self.seed = int(self.seed)
            self.threads = int(self.threads)
            self.picard_iterations = int(self.picard_iterations)
            self.radii = sorted(float(r) for r in self.radii)
            if self.snapshot_times is not None:
                self.snapshot_times = [float(t) for t in self.snapshot_times]
            if self.time_pairs is not None:
                self.time_pairs = [[float(a), float(b)] for a, b in self.time_pairs]
            if self.increments is not None:
                self.increments = [float(d) for d in self.increments]
            if self.lag_radius is not None:
                self.lag_radius = float(self.lag_radius)
        except (TypeError, ValueError) as e:
            raise ConfigError("types", f"Malformed config value: {e}")

    # ── Derived values ───────────────────────────────────

    @property
    def config_hash(self) -> str:
        data = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        return content_hash(data)

    @property
    def torus(self) -> TorusGrid:
        try:
            return TorusGrid.from_dict(self.grid)
        except (KeyError, NoiseError) as e:
            raise ConfigError("grid", str(e))

    @property
    def correlation_kernel(self) -> CorrelationKernel:
        try:
            return kernel_from_spec(self.kernel)
        except (KeyError, KernelDomainError) as e:
            raise ConfigError("kernel", str(e))

    @property
    def sigma_function(self) -> SigmaFunction:
        try:
            return sigma_from_spec(self.sigma)
        except SolverConfigError as e:
            raise ConfigError("sigma", str(e))

    @property
    def thresholds(self) -> dict[str, float]:
        merged = dict(DEFAULT_TOLERANCES)
        merged.update({k: float(v) for k, v in self.tolerances.items()})
        return merged

    @property
    def pairs(self) -> list[tuple[float, float]]:
        if self.time_pairs is not None:
            return [(a, b) for a, b in self.time_pairs]
        return [(self.T / 2, self.T / 2), (self.T / 2, self.T), (self.T, self.T)]

    @property
    def increment_list(self) -> list[float]:
        if self.increments is not None:
            return list(self.increments)
        return [self.T / 16, self.T / 8, self.T / 4, self.T / 2]

    def required_times(self) -> list[float]:
        """Snapshot times the experiment kind needs, merged and sorted."""
        times = set(self.snapshot_times if self.snapshot_times is not None else _default_snapshots(self.T))
        times.add(self.T)
        if self.kind == "covariance-limit":
            for a, b in self.pairs:
                times.update((a, b))
        if self.kind == "tightness-scan":
            times.update(self.T - d for d in self.increment_list)
        rounded = {round(t / self.dt) * self.dt for t in times}
        return sorted(rounded)

    def default_lag_radius(self, t1: float, t2: float) -> float:
        if self.lag_radius is not None:
            return self.lag_radius
        kernel = self.correlation_kernel
        extra = 2.0 * kernel.correlation_length if math.isfinite(kernel.correlation_length) else 0.0
        return min(t1 + t2 + 2.0 + extra, 0.5 * self.torus.L - self.torus.h)

    def solver_config(self, mode: Optional[str] = None, times: Optional[list[float]] = None) -> SolverConfig:
        try:
            return SolverConfig(
                grid=self.torus,
                dt=self.dt,
                T=self.T,
                sigma=self.sigma_function,
                kernel=self.correlation_kernel,
                mode=mode or self.mode,
                snapshot_times=tuple(times if times is not None else self.required_times()),
                picard_iterations=self.picard_iterations,
            )
        except SolverConfigError as e:
            raise ConfigError("solver", str(e))

    # ── Validation ───────────────────────────────────────

    def validate(self) -> ExperimentConfig:
        """Raise ConfigError naming the first violated invariant."""
        if self.kind not in KINDS:
            raise ConfigError("kind", f"Unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.mode not in ("trig", "picard", "additive"):
            raise ConfigError("mode", f"Unknown mode {self.mode!r}")
        unknown_tol = sorted(set(self.tolerances) - set(DEFAULT_TOLERANCES))
        if unknown_tol:
            raise ConfigError("tolerances", f"Unknown tolerance keys: {', '.join(unknown_tol)}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", f"Seed must be an unsigned 64-bit integer, got {self.seed}")
        grid = self.torus
        kernel = self.correlation_kernel
        sigma = self.sigma_function
        if not self.radii or any(r <= 0.0 for r in self.radii):
            raise ConfigError("radii", "Radii must be a nonempty list of positive numbers")
        if self.kind == "oracle-only":
            return self

        if self.paths < 1:
            raise ConfigError("paths", f"Path count must be positive, got {self.paths}")
        need = 2.0 * (max(self.radii) + self.T) + 4.0 * grid.h
        if grid.L < need:
            raise ConfigError("light-cone", f"L={grid.L:g} < 2(R_max + T) + 4h = {need:g}")
        for a, b in self.pairs:
            if not (0.0 <= a <= self.T and 0.0 <= b <= self.T):
                raise ConfigError("time_pairs", f"Pair ({a:g}, {b:g}) outside [0, T]")
        for d in self.increment_list:
            if not 0.0 < d <= self.T:
                raise ConfigError("increments", f"Increment {d:g} outside (0, T]")
        self.solver_config()

        if self.kind in CLT_KINDS:
            if isinstance(kernel, RieszKernel) and not kernel.dalang_admissible:
                raise ConfigError("dalang", f"{kernel} needs β < 2 for the CLT regime")
            if not check_dalang(kernel).converged:
                raise ConfigError("dalang", f"{kernel} fails Dalang's condition")
            if self.mode != "additive":
                try:
                    sigma.check_clt_admissible()
                except SolverConfigError as e:
                    raise ConfigError("sigma", str(e))
            elif sigma.at_one == 0.0:
                raise ConfigError("sigma", "Additive runs need σ(1) ≠ 0")
            if self.kind == "clt-scan" and self.paths < 100:
                raise ConfigError("paths", f"Distance estimates need at least 100 paths, got {self.paths}")
            if self.kind in ("variance-scan",) and len(self.radii) < 3:
                raise ConfigError("radii", "A scaling fit needs at least 3 radii")
        if self.kind == "picard-check" and self.picard_iterations < 1:
            raise ConfigError("picard_iterations", "Picard check needs at least one iterate")
        return self

    def __str__(self):
        return f"{self.kind} [{self.kernel.get('type')}, {self.sigma.get('type')}, N={self.grid.get('N')}, M={self.paths}]"
