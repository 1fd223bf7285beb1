"""stowave v0.1 - Stochastic Wave Solver

Time integration of

    ∂²u/∂t² = Δu + σ(u)·Ẇ,   u(0,·) = 1,  ∂u/∂t(0,·) = 0

on a periodic torus, in mild form, by a stochastic trigonometric scheme:
the linear wave flow is applied exactly per Fourier mode and each slab of
noise enters through the one-step kernel sin(ω dt)/ω, with σ evaluated at
the slab's left endpoint.

Modes:
  - trig      the scheme above
  - additive  σ frozen at the constant c = σ(1); the solution is Gaussian
  - picard    iterates u_0 ≡ 1, u_{m+1} = 1 + G_{m+1} ⋆ σ(u_m)·dW on one
              shared noise path, all advanced in a single time loop

Usage:
    config = SolverConfig(grid, dt=1/64, T=1.0, sigma=SineShiftSigma(0.5),
                          kernel=GaussianKernel(1.0), snapshot_times=(0.5, 1.0))
    states = simulate_path(config, SeedPolicy(7), path_index=0)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Optional

import numpy as np
from scipy import fft

from .kernels import CorrelationKernel
from .noise import NoiseIncrement, NoiseSampler, SeedPolicy, TorusGrid
from .propagator import DEFAULT_SEQUENCE, MollifierSequence, Rotation, mollifier_on_grid, rotation_factors

logger = logging.getLogger("stowave.solver")

MODES = ("trig", "picard", "additive")
_TIME_TOL = 1e-9


class SolverConfigError(Exception):
    """Raised when a solver configuration violates a structural requirement."""
    pass


class NumericalBlowup(Exception):
    """Raised when a field turns non-finite during time stepping."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"Non-finite field after step {step}")


# ════════════════════════════════════════════════════════
#  NONLINEARITY
# ════════════════════════════════════════════════════════

class SigmaFunction:
    """σ with a declared Lipschitz constant."""

    lipschitz: float = math.inf
    is_constant: bool = False

    def __call__(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def at_one(self) -> float:
        return float(self(np.ones(1))[0])

    def to_spec(self) -> dict[str, Any]:
        raise NotImplementedError

    def check_clt_admissible(self):
        if self.is_constant:
            raise SolverConfigError(f"{self} has Lipschitz constant 0; constant σ is only valid in additive/picard oracle runs")
        if not 0.0 < self.lipschitz < math.inf:
            raise SolverConfigError(f"{self} must declare a finite positive Lipschitz constant")
        if self.at_one == 0.0:
            raise SolverConfigError(f"{self} vanishes at u = 1; the spatial averages would be degenerate")


@dataclass(frozen=True)
class ConstantSigma(SigmaFunction):
    c: float = 1.0
    is_constant: bool = field(default=True, init=False)

    @property
    def lipschitz(self) -> float:
        return 0.0

    def __call__(self, u):
        return np.full(np.shape(u), self.c, dtype=float)

    def to_spec(self) -> dict[str, Any]:
        return {"type": "constant", "c": self.c}

    def __str__(self):
        return f"σ ≡ {self.c:g}"


@dataclass(frozen=True)
class LinearSigma(SigmaFunction):
    a: float = 0.0
    b: float = 1.0

    @property
    def lipschitz(self) -> float:
        return abs(self.b)

    def __call__(self, u):
        return self.a + self.b * np.asarray(u, dtype=float)

    def to_spec(self) -> dict[str, Any]:
        return {"type": "linear", "a": self.a, "b": self.b}

    def __str__(self):
        return f"σ(u) = {self.a:g} + {self.b:g}u"


@dataclass(frozen=True)
class SineShiftSigma(SigmaFunction):
    epsilon: float = 0.5

    @property
    def lipschitz(self) -> float:
        return abs(self.epsilon)

    def __call__(self, u):
        return 1.0 + self.epsilon * np.sin(np.asarray(u, dtype=float))

    def to_spec(self) -> dict[str, Any]:
        return {"type": "sine_shift", "epsilon": self.epsilon}

    def __str__(self):
        return f"σ(u) = 1 + {self.epsilon:g}·sin(u)"


@dataclass(frozen=True)
class CustomSigma(SigmaFunction):
    fn: Callable[[np.ndarray], np.ndarray]
    lipschitz: float = math.inf
    description: str = "custom"

    def __call__(self, u):
        return np.asarray(self.fn(np.asarray(u, dtype=float)), dtype=float)

    def to_spec(self) -> dict[str, Any]:
        raise SolverConfigError(f"{self} is code-only and has no config record")

    def __str__(self):
        return f"σ = {self.description}"


def sigma_from_spec(record: dict[str, Any]) -> SigmaFunction:
    kind = str(record.get("type", "")).lower()
    if kind == "constant":
        return ConstantSigma(float(record.get("c", 1.0)))
    if kind == "linear":
        return LinearSigma(float(record.get("a", 0.0)), float(record.get("b", 1.0)))
    if kind in ("sine_shift", "sineshift"):
        return SineShiftSigma(float(record.get("epsilon", 0.5)))
    raise SolverConfigError(f"Unknown sigma type: {record.get('type')!r}")


# ════════════════════════════════════════════════════════
#  STATE & CONFIG
# ════════════════════════════════════════════════════════

@dataclass
class FieldState:
    grid: TorusGrid
    t: float
    u: np.ndarray
    v: np.ndarray

    @classmethod
    def initial(cls, grid: TorusGrid) -> FieldState:
        return cls(grid, 0.0, np.ones(grid.shape), np.zeros(grid.shape))

    def __str__(self):
        return f"FieldState(t={self.t:g}, {self.grid})"


@dataclass(frozen=True)
class SolverConfig:
    grid: TorusGrid
    dt: float
    T: float
    sigma: SigmaFunction
    kernel: CorrelationKernel
    mode: str = "trig"
    snapshot_times: tuple[float, ...] = (1.0,)
    picard_iterations: int = 4
    mollifiers: MollifierSequence = DEFAULT_SEQUENCE

    def __post_init__(self):
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        if self.mode not in MODES:
            raise SolverConfigError(f"Unknown solver mode {self.mode!r}; expected one of {MODES}")
        if not self.dt > 0.0 or not self.T > 0.0:
            raise SolverConfigError(f"dt and T must be positive, got dt={self.dt}, T={self.T}")
        if abs(self.T / self.dt - round(self.T / self.dt)) > _TIME_TOL * max(1.0, self.T / self.dt):
            raise SolverConfigError(f"dt={self.dt:g} does not divide T={self.T:g}")
        if list(self.snapshot_times) != sorted(self.snapshot_times):
            raise SolverConfigError("Snapshot times must be sorted")
        for t in self.snapshot_times:
            if t < -_TIME_TOL or t > self.T + _TIME_TOL:
                raise SolverConfigError(f"Snapshot time {t:g} outside [0, {self.T:g}]")
            ratio = t / self.dt
            if abs(ratio - round(ratio)) > _TIME_TOL * max(1.0, ratio):
                raise SolverConfigError(f"Snapshot time {t:g} is not a multiple of dt={self.dt:g}")
        if self.mode == "picard" and not 0 <= self.picard_iterations <= self.mollifiers.n_max:
            raise SolverConfigError(f"Picard iteration count {self.picard_iterations} out of range")
        if self.sigma.is_constant and self.mode == "trig":
            raise SolverConfigError(f"{self.sigma} violates the positive Lipschitz requirement; use mode 'additive'")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def snapshot_steps(self) -> list[int]:
        return [int(round(t / self.dt)) for t in self.snapshot_times]

    def check_light_cone(self, r_max: float):
        """The ball of radius r_max and its light cone must not wrap around."""
        need = 2.0 * (r_max + self.T) + 4.0 * self.grid.h
        if self.grid.L < need:
            raise SolverConfigError(f"Torus side L={self.grid.L:g} < 2(R+T)+4h = {need:g} for R={r_max:g}")


# ════════════════════════════════════════════════════════
#  TIME STEPPING
# ════════════════════════════════════════════════════════

def _advance(u_hat: np.ndarray, v_hat: np.ndarray, kick: np.ndarray, rot: Rotation) -> tuple[np.ndarray, np.ndarray]:
    w = v_hat + kick
    return rot.cos * u_hat + rot.sin_over_omega * w, rot.cos * w - rot.omega_sin * u_hat


def _require_finite(step: int, *arrays: np.ndarray):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericalBlowup(step)


def step_trig(state: FieldState, incr: NoiseIncrement, dt: float, sigma: SigmaFunction) -> FieldState:
    """One step of the trigonometric scheme on physical-space fields."""
    if incr.grid != state.grid:
        raise SolverConfigError(f"Increment grid {incr.grid} does not match state grid {state.grid}")
    if abs(incr.dt - dt) > _TIME_TOL * dt:
        raise SolverConfigError(f"Increment slab dt={incr.dt:g} does not match step dt={dt:g}")
    grid = state.grid
    rot = rotation_factors(grid, dt)
    kick = fft.rfftn(sigma(state.u) * incr.values)
    u_hat, v_hat = _advance(fft.rfftn(state.u), fft.rfftn(state.v), kick, rot)
    step = int(round(state.t / dt))
    _require_finite(step, u_hat, v_hat)
    return FieldState(grid, state.t + dt,
                      fft.irfftn(u_hat, s=grid.shape), fft.irfftn(v_hat, s=grid.shape))


class Solver:
    """Path generator for one configuration and master seed.

    The noise sampler and rotation factors are built once and shared by
    every path, so one Solver can feed a whole thread pool.
    """

    def __init__(self, config: SolverConfig, seed: SeedPolicy):
        self.config = config
        self.seed = seed
        self.sampler = NoiseSampler(config.grid, config.kernel, config.dt, seed)
        self.rotation = rotation_factors(config.grid, config.dt)

    def _snapshot_plan(self) -> dict[int, int]:
        plan: dict[int, int] = {}
        for s in self.config.snapshot_steps:
            plan[s] = plan.get(s, 0) + 1
        return plan

    def _state(self, u_hat: np.ndarray, v_hat: np.ndarray, step: int) -> FieldState:
        grid = self.config.grid
        if step == 0:
            return FieldState.initial(grid)
        return FieldState(grid, step * self.config.dt,
                          fft.irfftn(u_hat, s=grid.shape), fft.irfftn(v_hat, s=grid.shape))

    # ── Trig / additive ──────────────────────────────────

    def iter_path(self, path: int) -> Iterator[FieldState]:
        """Yield the states at the snapshot times, in order."""
        cfg = self.config
        grid = cfg.grid
        plan = self._snapshot_plan()
        last = max(plan) if plan else 0
        additive = cfg.mode == "additive"
        c = cfg.sigma.at_one

        u_hat = fft.rfftn(np.ones(grid.shape))
        v_hat = np.zeros(grid.half_shape, dtype=complex)
        for j in range(last + 1):
            for _ in range(plan.get(j, 0)):
                yield self._state(u_hat, v_hat, j)
            if j == last:
                break
            incr = self.sampler.increment(path, j)
            if additive:
                kick = c * incr.spectrum
            else:
                u = fft.irfftn(u_hat, s=grid.shape)
                kick = fft.rfftn(cfg.sigma(u) * incr.values)
            u_hat, v_hat = _advance(u_hat, v_hat, kick, self.rotation)
            _require_finite(j, u_hat, v_hat)

    def simulate_path(self, path: int) -> list[FieldState]:
        return list(self.iter_path(path))

    # ── Picard ───────────────────────────────────────────

    def iter_picard(self, path: int) -> Iterator[list[FieldState]]:
        """Yield, per snapshot time, the states of iterates 0..n."""
        cfg = self.config
        grid = cfg.grid
        n = cfg.picard_iterations
        plan = self._snapshot_plan()
        last = max(plan) if plan else 0
        additive = cfg.sigma.is_constant
        ones = np.ones(grid.shape)
        mollifiers = [mollifier_on_grid(grid, m, cfg.mollifiers) for m in range(1, n + 1)]

        u_hats = [fft.rfftn(ones) for _ in range(n)]
        v_hats = [np.zeros(grid.half_shape, dtype=complex) for _ in range(n)]
        for j in range(last + 1):
            for _ in range(plan.get(j, 0)):
                base = FieldState(grid, j * cfg.dt, ones.copy(), np.zeros(grid.shape))
                yield [base] + [self._state(u_hats[m], v_hats[m], j) for m in range(n)]
            if j == last:
                break
            incr = self.sampler.increment(path, j)
            if additive:
                kicks = [mollifiers[m] * (cfg.sigma.at_one * incr.spectrum) for m in range(n)]
            else:
                # iterate m+1 is driven by iterate m at the same left endpoint
                sources = [ones] + [fft.irfftn(u_hats[m], s=grid.shape) for m in range(n - 1)]
                kicks = [mollifiers[m] * fft.rfftn(cfg.sigma(sources[m]) * incr.values) for m in range(n)]
            for m in range(n):
                u_hats[m], v_hats[m] = _advance(u_hats[m], v_hats[m], kicks[m], self.rotation)
                _require_finite(j, u_hats[m], v_hats[m])

    def simulate_picard(self, path: int) -> list[list[FieldState]]:
        """Iterates 0..n, each as a list of snapshot states."""
        per_time = list(self.iter_picard(path))
        n = self.config.picard_iterations
        return [[snap[m] for snap in per_time] for m in range(n + 1)]


def simulate_path(config: SolverConfig, seed: SeedPolicy, path_index: int) -> list[FieldState]:
    if config.mode == "picard":
        raise SolverConfigError("simulate_path runs the trig/additive scheme; use simulate_picard")
    return Solver(config, seed).simulate_path(path_index)


def simulate_picard(config: SolverConfig, seed: SeedPolicy, path_index: int) -> list[list[FieldState]]:
    if config.mode != "picard":
        raise SolverConfigError(f"simulate_picard needs mode 'picard', got {config.mode!r}")
    return Solver(config, seed).simulate_picard(path_index)


# ── Picard diagnostics ───────────────────────────────────

def picard_squared_errors(iterates: list[list[FieldState]], reference: list[FieldState]) -> np.ndarray:
    """Grid-mean squared distance to the reference, shape (iterates, snapshots)."""
    out = np.empty((len(iterates), len(reference)))
    for m, states in enumerate(iterates):
        if len(states) != len(reference):
            raise SolverConfigError("Iterate and reference snapshot counts differ")
        for i, (a, b) in enumerate(zip(states, reference)):
            out[m, i] = float(np.mean((a.u - b.u) ** 2))
    return out


def picard_errors(iterates: list[list[FieldState]], reference: list[FieldState],
                  squared: Optional[np.ndarray] = None) -> list[float]:
    """Per iterate: sup over snapshot times of the grid RMS distance."""
    if squared is None:
        squared = picard_squared_errors(iterates, reference)
    return [float(math.sqrt(row.max())) for row in squared]
