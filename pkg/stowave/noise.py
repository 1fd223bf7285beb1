"""stowave v0.1 - Noise Sampler

Gaussian noise that is white in time and γ-correlated in space, sampled
one time slab at a time on a periodic torus grid.

Each increment is drawn spectrally: a standard normal field w is moved
to Fourier space, scaled per mode by sqrt(dt·λ_k) and transformed back,
so the result is exactly real and has covariance dt·γ_per(x-y), where
γ_per is the lattice-periodized kernel.

Seeding is counter-based. Every (master seed, path, step, stream tag)
quadruple maps injectively onto a Philox key/counter pair, so a draw
depends only on its coordinates and never on worker scheduling.

Usage:
    grid = TorusGrid(N=64, L=24.0)
    sampler = NoiseSampler(grid, GaussianKernel(1.0), dt=1 / 64, seed=SeedPolicy(7))
    incr = sampler.increment(path=0, step=3)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any

import numpy as np
from scipy import fft

from .kernels import CorrelationKernel

logger = logging.getLogger("stowave.noise")

# Philox counter word 3; one independent family of streams per tag
STREAM_TAGS = {
    "noise": 1,
    "mc-floor": 2,
    "synthetic": 3,
}


class NoiseError(Exception):
    """Raised on invalid grids, seeds or increment requests."""
    pass


# ════════════════════════════════════════════════════════
#  TORUS GRID
# ════════════════════════════════════════════════════════

@dataclass(frozen=True)
class TorusGrid:
    """Periodic cube of side L sampled at N points per axis.

    Node i along an axis sits at i·h; the centred coordinate of that node
    is the representative of i·h in [-L/2, L/2).
    """
    N: int
    L: float

    def __post_init__(self):
        if self.N < 8 or self.N & (self.N - 1):
            raise NoiseError(f"Grid size must be a power of two ≥ 8, got N={self.N}")
        if not self.L > 0.0:
            raise NoiseError(f"Torus side must be positive, got L={self.L}")

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.N, self.N, self.N)

    @property
    def half_shape(self) -> tuple[int, int, int]:
        return (self.N, self.N, self.N // 2 + 1)

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    # ── Mode lattice ─────────────────────────────────────

    def mode_indices(self, half: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer wave vectors, broadcastable, for the full or rfft layout."""
        k = np.fft.fftfreq(self.N, d=1.0 / self.N)
        kz = np.fft.rfftfreq(self.N, d=1.0 / self.N) if half else k
        return k[:, None, None], k[None, :, None], kz[None, None, :]

    def frequency_norm(self, half: bool = True) -> np.ndarray:
        """|k|/L per mode."""
        if half:
            return self._frequency_norm_half
        return self._frequency_norm_full

    @cached_property
    def _frequency_norm_half(self) -> np.ndarray:
        return self._build_norm(True)

    @cached_property
    def _frequency_norm_full(self) -> np.ndarray:
        return self._build_norm(False)

    def _build_norm(self, half: bool) -> np.ndarray:
        kx, ky, kz = self.mode_indices(half)
        norm = np.sqrt(kx ** 2 + ky ** 2 + kz ** 2) / self.L
        norm.setflags(write=False)
        return norm

    def nyquist_factor(self, half: bool = True) -> np.ndarray:
        """0.5 per axis whose index sits on the Nyquist plane, else 1."""
        factors = [np.where(np.abs(k) == self.N // 2, 0.5, 1.0) for k in self.mode_indices(half)]
        return factors[0] * factors[1] * factors[2]

    # ── Physical coordinates ─────────────────────────────

    def centered_axis(self) -> np.ndarray:
        return np.fft.fftfreq(self.N, d=1.0 / self.N) * self.h

    def radius_field(self) -> np.ndarray:
        """Periodic distance of every node from the origin node."""
        x = self.centered_axis()
        return np.sqrt(x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2)

    def lag_index(self, lag) -> tuple[int, int, int]:
        """Grid offset for a physical lag vector; lags must be multiples of h."""
        steps = np.asarray(lag, dtype=float) / self.h
        rounded = np.rint(steps)
        if steps.shape != (3,) or np.any(np.abs(steps - rounded) > 1e-9):
            raise NoiseError(f"Lag {tuple(np.asarray(lag).tolist())} is not a multiple of h={self.h:g}")
        return tuple(int(i) % self.N for i in rounded)

    def to_dict(self) -> dict[str, Any]:
        return {"N": self.N, "L": self.L}

    @classmethod
    def from_dict(cls, data: dict) -> TorusGrid:
        return cls(N=int(data["N"]), L=float(data["L"]))

    def __str__(self):
        return f"Torus(N={self.N}, L={self.L:g}, h={self.h:g})"


# ════════════════════════════════════════════════════════
#  SEEDING
# ════════════════════════════════════════════════════════

@dataclass(frozen=True)
class SeedPolicy:
    """Injective map (path, step, tag) → Philox stream.

    key = master_seed, counter = [0, path, step, tag code]. Word 0 is left
    free for the generator's own draws, which never reach 2⁶⁴ blocks.
    """
    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise NoiseError(f"Master seed must be an unsigned 64-bit integer, got {self.master_seed}")

    def generator(self, path: int, step: int, tag: str = "noise") -> np.random.Generator:
        if tag not in STREAM_TAGS:
            raise NoiseError(f"Unknown stream tag: {tag!r}")
        if path < 0 or step < 0:
            raise NoiseError(f"Stream coordinates must be nonnegative, got path={path}, step={step}")
        counter = np.array([0, path, step, STREAM_TAGS[tag]], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=int(self.master_seed), counter=counter))


# ════════════════════════════════════════════════════════
#  SPECTRAL WEIGHTS
# ════════════════════════════════════════════════════════

def spectral_weights(grid: TorusGrid, kernel: CorrelationKernel, half: bool = False) -> np.ndarray:
    """λ_k = L⁻³ · density(|k|/L), zero mode removed, Nyquist planes halved."""
    norm = grid.frequency_norm(half)
    weights = np.zeros(norm.shape)
    nonzero = norm > 0.0
    weights[nonzero] = kernel.density_radial(norm[nonzero]) / grid.L ** 3
    weights *= grid.nyquist_factor(half)
    if np.any(weights < 0.0):
        raise NoiseError(f"{kernel} produced a negative spectral weight")
    return weights


@dataclass
class NoiseIncrement:
    """One slab of noise: real values on the grid and their rfftn spectrum."""
    grid: TorusGrid
    dt: float
    values: np.ndarray
    spectrum: np.ndarray

    @classmethod
    def zeros(cls, grid: TorusGrid, dt: float) -> NoiseIncrement:
        return cls(grid, dt, np.zeros(grid.shape), np.zeros(grid.half_shape, dtype=complex))

    def __str__(self):
        return f"NoiseIncrement({self.grid}, dt={self.dt:g})"


class NoiseSampler:
    """Draws increments for one (grid, kernel, dt, seed) combination.

    Weights are computed once; `increment` is pure in (path, step) and safe
    to call from several threads.
    """

    def __init__(self, grid: TorusGrid, kernel: CorrelationKernel, dt: float, seed: SeedPolicy):
        if not dt > 0.0:
            raise NoiseError(f"Time step must be positive, got dt={dt}")
        self.grid = grid
        self.kernel = kernel
        self.dt = float(dt)
        self.seed = seed
        self.weights = spectral_weights(grid, kernel, half=True)
        # irfftn carries 1/N³; rescale so the field covariance is dt·Σλ
        self._amplitude = np.sqrt(self.dt * self.weights) * grid.N ** 1.5
        self._amplitude.setflags(write=False)
        logger.debug(f"{kernel} on {grid}: Σλ = {float(spectral_weights(grid, kernel).sum()):.6g}")

    def white(self, path: int, step: int) -> np.ndarray:
        rng = self.seed.generator(path, step, "noise")
        return rng.standard_normal(self.grid.shape)

    def increment(self, path: int, step: int) -> NoiseIncrement:
        spectrum = self._amplitude * fft.rfftn(self.white(path, step))
        values = fft.irfftn(spectrum, s=self.grid.shape)
        return NoiseIncrement(self.grid, self.dt, values, spectrum)


def noise_spectrum(sampler: NoiseSampler, path: int, step: int, full: bool = False) -> np.ndarray:
    """Spectrum of one increment.

    With full=True, the complete fftn layout is returned so that ifftn of it
    can be inspected for an imaginary residue.
    """
    if not full:
        return sampler.increment(path, step).spectrum
    grid = sampler.grid
    amplitude = np.sqrt(sampler.dt * spectral_weights(grid, sampler.kernel)) * grid.N ** 1.5
    return amplitude * fft.fftn(sampler.white(path, step))


def sample_increment(
    grid: TorusGrid,
    kernel: CorrelationKernel,
    dt: float,
    seed: SeedPolicy,
    path: int,
    step: int,
) -> NoiseIncrement:
    return NoiseSampler(grid, kernel, dt, seed).increment(path, step)


def lattice_covariance(grid: TorusGrid, kernel: CorrelationKernel, dt: float) -> np.ndarray:
    """Exact covariance field dt·Σ_k λ_k e^{2πik·x/L} implied by the weights."""
    return dt * fft.ifftn(spectral_weights(grid, kernel)).real * grid.N ** 3
