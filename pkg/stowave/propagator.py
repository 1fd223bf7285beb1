"""stowave v0.1 - Wave Propagator Multipliers

Fourier multipliers of the 3D wave fundamental solution and of its
mollified versions G_n = ρ_n * G.

    FG(t)(ξ)   = sin(2πt|ξ|) / (2π|ξ|)          (t at ξ = 0)
    Fρ_n(ξ)    = Fρ(ξ / a_n),   default a_n = 2ⁿ
    FG_n(t)(ξ) = Fρ_n(ξ) · FG(t)(ξ)

ρ is the normalized bump c·exp(-1/(1-|x|²)) on the unit ball. Its radial
transform has no closed form; it is tabulated once on a log-spaced radius
grid and read back through a cubic spline.

Grid-level arrays (rotation factors, mollifier factors) are cached per
(grid, parameter) key behind a lock and handed out read-only.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft, integrate
from scipy.interpolate import CubicSpline

from .noise import TorusGrid

logger = logging.getLogger("stowave.propagator")

# Bump transform table
TABLE_KMAX = 32.0
TABLE_KMIN = 1e-3
TABLE_POINTS = 4096
_GAUSS_NODES = 512


class PropagatorError(Exception):
    """Raised on invalid times, mollifier indices or sequences."""
    pass


# ════════════════════════════════════════════════════════
#  FUNDAMENTAL SOLUTION
# ════════════════════════════════════════════════════════

def fourier_G_radial(t: float, rho) -> np.ndarray:
    """FG(t) as a function of |ξ|; np.sinc supplies the ξ = 0 limit."""
    if t < 0.0:
        raise PropagatorError(f"Wave multiplier needs t ≥ 0, got {t}")
    rho = np.asarray(rho, dtype=float)
    return t * np.sinc(2.0 * t * rho)


def fourier_G(t: float, xi) -> float:
    return float(fourier_G_radial(t, np.linalg.norm(np.asarray(xi, dtype=float))))


@dataclass(frozen=True)
class WaveMultiplier:
    t: float

    def __post_init__(self):
        if self.t < 0.0:
            raise PropagatorError(f"Wave multiplier needs t ≥ 0, got {self.t}")

    def __call__(self, rho) -> np.ndarray:
        return fourier_G_radial(self.t, rho)

    def on_grid(self, grid: TorusGrid) -> np.ndarray:
        return _CACHE.wave(grid, self.t)


def fourier_indicator_ball_radial(R: float, rho) -> np.ndarray:
    """F1_{B_R} as a function of |ξ|, with a series near the origin."""
    if not R > 0.0:
        raise PropagatorError(f"Ball radius must be positive, got {R}")
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    z = 2.0 * math.pi * R * rho
    out = np.empty_like(z)
    small = z < 1e-3
    zs = z[small]
    out[small] = 1.0 / 3.0 - zs ** 2 / 30.0 + zs ** 4 / 840.0
    zl = z[~small]
    out[~small] = (np.sin(zl) - zl * np.cos(zl)) / zl ** 3
    return 4.0 * math.pi * R ** 3 * out


def fourier_indicator_ball(R: float, xi) -> float:
    rho = float(np.linalg.norm(np.asarray(xi, dtype=float)))
    return float(fourier_indicator_ball_radial(R, rho)[0])


# ════════════════════════════════════════════════════════
#  BUMP MOLLIFIER
# ════════════════════════════════════════════════════════

def bump_profile(r) -> np.ndarray:
    """Unnormalized exp(-1/(1-r²)) on [0, 1), zero elsewhere."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def _bump_mass() -> float:
    value, _ = integrate.quad(lambda r: 4.0 * math.pi * r * r * float(bump_profile(r)), 0.0, 1.0,
                              epsabs=0.0, epsrel=1e-13, limit=200)
    return value


BUMP_NORMALIZER = 1.0 / _bump_mass()


def bump_transform_quad(k: float) -> float:
    """Fρ(k) by fresh oscillatory quadrature (sine-weighted QAWO)."""
    k = abs(float(k))
    if k < TABLE_KMIN:
        value, _ = integrate.quad(lambda r: 4.0 * math.pi * r * r * float(bump_profile(r)) * float(np.sinc(2.0 * k * r)),
                                  0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
        return BUMP_NORMALIZER * value
    value, _ = integrate.quad(lambda r: r * float(bump_profile(r)), 0.0, 1.0,
                              weight="sin", wvar=2.0 * math.pi * k, epsabs=1e-14, limit=400)
    return BUMP_NORMALIZER * 2.0 * value / k


class BumpTransform:
    """Tabulated radial transform of the normalized bump.

    Built lazily on first use; the spline is immutable afterwards. Values
    beyond TABLE_KMAX are taken as zero.
    """

    def __init__(self, kmax: float = TABLE_KMAX, points: int = TABLE_POINTS):
        self.kmax = kmax
        self.points = points
        self._spline: Optional[CubicSpline] = None
        self._lock = threading.Lock()

    def _build(self) -> CubicSpline:
        nodes, weights = np.polynomial.legendre.leggauss(_GAUSS_NODES)
        r = 0.5 * (nodes + 1.0)
        w = 0.5 * weights * 4.0 * math.pi * r * r * bump_profile(r) * BUMP_NORMALIZER
        radii = np.concatenate(([0.0], np.geomspace(TABLE_KMIN, self.kmax, self.points)))
        values = np.sinc(2.0 * radii[:, None] * r[None, :]) @ w
        logger.debug(f"Bump transform tabulated at {radii.size} radii up to k={self.kmax:g}")
        return CubicSpline(radii, values)

    @property
    def spline(self) -> CubicSpline:
        if self._spline is None:
            with self._lock:
                if self._spline is None:
                    self._spline = self._build()
        return self._spline

    def __call__(self, k) -> np.ndarray:
        k = np.abs(np.asarray(k, dtype=float))
        values = self.spline(np.minimum(k, self.kmax))
        return np.where(k < self.kmax, values, 0.0)


BUMP = BumpTransform()


@dataclass(frozen=True)
class MollifierSequence:
    """Scales a_1 < a_2 < ... of ρ_n(x) = a_n³ρ(a_n x).

    The default dyadic sequence a_n = 2ⁿ satisfies Σ 1/a_n = 1.
    """
    a: tuple[float, ...] = field(default_factory=lambda: tuple(2.0 ** n for n in range(1, 33)))

    def __post_init__(self):
        if not self.a or any(x <= 0.0 for x in self.a):
            raise PropagatorError("Mollifier scales must be positive")
        if any(b <= a for a, b in zip(self.a, self.a[1:])):
            raise PropagatorError("Mollifier scales must be strictly increasing")

    @classmethod
    def dyadic(cls, n_max: int = 32) -> MollifierSequence:
        return cls(tuple(2.0 ** n for n in range(1, n_max + 1)))

    @property
    def n_max(self) -> int:
        return len(self.a)

    def scale(self, n: int) -> float:
        if not 1 <= n <= self.n_max:
            raise PropagatorError(f"Mollifier index must lie in [1, {self.n_max}], got {n}")
        return self.a[n - 1]

    def support_radius(self, n: int, t: float) -> float:
        return t + 1.0 / self.scale(n)


DEFAULT_SEQUENCE = MollifierSequence()


def fourier_rho_radial(n: int, rho, seq: MollifierSequence = DEFAULT_SEQUENCE) -> np.ndarray:
    return BUMP(np.asarray(rho, dtype=float) / seq.scale(n))


def fourier_rho(n: int, xi, seq: MollifierSequence = DEFAULT_SEQUENCE) -> float:
    return float(fourier_rho_radial(n, np.linalg.norm(np.asarray(xi, dtype=float)), seq))


def fourier_G_n_radial(n: int, t: float, rho, seq: MollifierSequence = DEFAULT_SEQUENCE) -> np.ndarray:
    return fourier_rho_radial(n, rho, seq) * fourier_G_radial(t, rho)


def fourier_G_n(n: int, t: float, xi, seq: MollifierSequence = DEFAULT_SEQUENCE) -> float:
    return float(fourier_G_n_radial(n, t, np.linalg.norm(np.asarray(xi, dtype=float)), seq))


@dataclass(frozen=True)
class MollifiedMultiplier:
    n: int
    t: float
    seq: MollifierSequence = DEFAULT_SEQUENCE

    def __call__(self, rho) -> np.ndarray:
        return fourier_G_n_radial(self.n, self.t, rho, self.seq)

    def table(self, radii) -> tuple[np.ndarray, np.ndarray]:
        radii = np.asarray(radii, dtype=float)
        return radii, fourier_rho_radial(self.n, radii, self.seq)


# ════════════════════════════════════════════════════════
#  GRID MULTIPLIERS
# ════════════════════════════════════════════════════════

@dataclass(frozen=True)
class Rotation:
    """Per-mode factors of the exact linear wave flow over one step."""
    cos: np.ndarray
    sin_over_omega: np.ndarray
    omega_sin: np.ndarray


class MultiplierCache:
    """Grid arrays keyed by (kind, grid, parameters).

    Fill is idempotent: a racing thread computes the same array and the
    first stored value wins.
    """

    def __init__(self):
        self._store: dict[tuple, object] = {}
        self._lock = threading.Lock()

    def _get(self, key: tuple, build):
        with self._lock:
            if key in self._store:
                return self._store[key]
        value = build()
        with self._lock:
            return self._store.setdefault(key, value)

    def wave(self, grid: TorusGrid, t: float) -> np.ndarray:
        def build():
            arr = fourier_G_radial(t, grid.frequency_norm(half=True))
            arr.setflags(write=False)
            return arr
        return self._get(("wave", grid, float(t)), build)

    def rotation(self, grid: TorusGrid, dt: float) -> Rotation:
        def build():
            omega = 2.0 * math.pi * grid.frequency_norm(half=True)
            cos = np.cos(omega * dt)
            sin_over_omega = fourier_G_radial(dt, grid.frequency_norm(half=True))
            omega_sin = omega * np.sin(omega * dt)
            for arr in (cos, sin_over_omega, omega_sin):
                arr.setflags(write=False)
            return Rotation(cos, sin_over_omega, omega_sin)
        return self._get(("rotation", grid, float(dt)), build)

    def mollifier(self, grid: TorusGrid, n: int, seq: MollifierSequence) -> np.ndarray:
        def build():
            arr = np.asarray(fourier_rho_radial(n, grid.frequency_norm(half=True), seq))
            arr.setflags(write=False)
            return arr
        return self._get(("mollifier", grid, int(n), seq), build)

    def clear(self):
        with self._lock:
            self._store.clear()


_CACHE = MultiplierCache()


def rotation_factors(grid: TorusGrid, dt: float) -> Rotation:
    return _CACHE.rotation(grid, dt)


def mollifier_on_grid(grid: TorusGrid, n: int, seq: MollifierSequence = DEFAULT_SEQUENCE) -> np.ndarray:
    return _CACHE.mollifier(grid, n, seq)


def mollified_kernel_field(n: int, t: float, grid: TorusGrid,
                           seq: MollifierSequence = DEFAULT_SEQUENCE) -> np.ndarray:
    """G_n(t, ·) sampled on the grid nodes (inverse transform of its multiplier).

    Node values are densities, so Σ values · h³ = FG_n(t)(0) = t.
    """
    multiplier = _CACHE.wave(grid, t) * _CACHE.mollifier(grid, n, seq)
    return fft.irfftn(multiplier, s=grid.shape) / grid.cell_volume


def multiplier_table_rows(t: float, n: int, kmax: float, points: int = 257,
                          seq: MollifierSequence = DEFAULT_SEQUENCE) -> list[list[float]]:
    """Rows (|ξ|, FG, Fρ_n, FG_n) on an even radius grid, for CSV dumps."""
    radii = np.linspace(0.0, kmax, points)
    g = fourier_G_radial(t, radii)
    r = fourier_rho_radial(n, radii, seq)
    return [[float(a), float(b), float(c), float(b * c)] for a, b, c in zip(radii, g, r)]
