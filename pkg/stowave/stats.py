"""stowave v0.1 - Ensemble Statistics

Estimators over per-path samples of F_R(t) and over pooled fields:

  - normalization and distance to N(0,1) (quantile-coupled W1, Kolmogorov)
  - variance / paired covariance / increment moments with standard errors
  - log-log scaling fits
  - η(r) = E[σ(u(r,·))] pooled over paths and grid points
  - lag covariance of u between two times, by FFT cross-correlation

Streaming accumulators (EtaAccumulator, LagAccumulator) are merged in a
fixed pairwise order by `tree_reduce`, so pooled results do not depend on
how paths were scheduled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Callable, Optional, Sequence, TypeVar

import numpy as np
from scipy import fft
from scipy.stats import norm

from .noise import NoiseError, SeedPolicy, TorusGrid

logger = logging.getLogger("stowave.stats")

MC_FLOOR_TRIALS = 32
MC_FLOOR_SEED = 0x5EED
MIN_DISTANCE_SAMPLES = 100
KOLMOGOROV_ROUNDING = 1e-12

T = TypeVar("T")


class DegenerateEnsemble(Exception):
    """Raised when an ensemble is too small or has zero spread."""
    pass


class UnpairedEnsembles(Exception):
    """Raised when two ensembles do not share the same paths and radius."""
    pass


class FitError(Exception):
    """Raised when a scaling fit gets unusable points."""
    pass


class LagError(Exception):
    """Raised on off-grid lags or mismatched lag accumulators."""
    pass


# ════════════════════════════════════════════════════════
#  ENSEMBLES
# ════════════════════════════════════════════════════════

@dataclass
class Ensemble:
    """One F_R(t) sample per path, with provenance."""
    samples: np.ndarray
    R: float = 0.0
    t: float = 0.0
    config_hash: str = ""
    seed: int = 0
    path_indices: Optional[np.ndarray] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise DegenerateEnsemble(f"Ensemble needs at least 2 samples, got {self.samples.size}")
        if self.path_indices is None:
            self.path_indices = np.arange(self.samples.size)
        else:
            self.path_indices = np.asarray(self.path_indices, dtype=np.int64)

    @property
    def M(self) -> int:
        return int(self.samples.size)

    @property
    def meta(self) -> dict[str, Any]:
        return {"R": self.R, "t": self.t, "config_hash": self.config_hash, "seed": self.seed}

    def __str__(self):
        return f"Ensemble(R={self.R:g}, t={self.t:g}, M={self.M})"


def normalize(e: Ensemble) -> Ensemble:
    """Centre by the sample mean and divide by the (ddof=0) standard deviation."""
    std = float(np.std(e.samples))
    if not std > 0.0:
        raise DegenerateEnsemble(f"{e} has zero variance; σ(1) = 0 or no noise reached the ball")
    return replace(e, samples=(e.samples - e.samples.mean()) / std)


# ════════════════════════════════════════════════════════
#  DISTANCE TO THE STANDARD NORMAL
# ════════════════════════════════════════════════════════

@dataclass
class DistanceReport:
    w1: float
    kolmogorov: float
    M: int
    mc_floor: float

    @property
    def kolmogorov_bound(self) -> float:
        """2√W1 plus the 1/(2M) step of the empirical CDF, which dominates the Kolmogorov distance."""
        return 2.0 * math.sqrt(self.w1) + 0.5 / self.M + KOLMOGOROV_ROUNDING

    @property
    def bound_holds(self) -> bool:
        return self.kolmogorov <= self.kolmogorov_bound

    def to_dict(self) -> dict[str, Any]:
        return {
            "w1": self.w1,
            "kolmogorov": self.kolmogorov,
            "M": self.M,
            "mc_floor": self.mc_floor,
            "kolmogorov_bound": self.kolmogorov_bound,
        }

    def __str__(self):
        return f"W1={self.w1:.4f} (floor {self.mc_floor:.4f}), dKol={self.kolmogorov:.4f}, M={self.M}"


@lru_cache(maxsize=64)
def _normal_quantiles(M: int) -> np.ndarray:
    q = norm.ppf((np.arange(1, M + 1) - 0.5) / M)
    q.setflags(write=False)
    return q


def _w1_sorted(x: np.ndarray) -> float:
    return float(np.mean(np.abs(np.sort(x) - _normal_quantiles(x.size))))


def _kolmogorov(x: np.ndarray) -> float:
    xs = np.sort(x)
    M = xs.size
    cdf = norm.cdf(xs)
    upper = np.arange(1, M + 1) / M - cdf
    lower = cdf - np.arange(0, M) / M
    return float(min(1.0, max(upper.max(), lower.max())))


@lru_cache(maxsize=64)
def mc_floor(M: int, normalized: bool = True, trials: int = MC_FLOOR_TRIALS, seed: int = MC_FLOOR_SEED) -> float:
    """Mean W1 shown by genuine N(0,1) samples of size M, processed the same way."""
    policy = SeedPolicy(seed)
    total = 0.0
    for trial in range(trials):
        z = policy.generator(trial, M, "mc-floor").standard_normal(M)
        if normalized:
            z = (z - z.mean()) / z.std()
        total += _w1_sorted(z)
    return total / trials


def wasserstein1_to_normal(e: Ensemble, normalized: bool = False) -> DistanceReport:
    """W1 and Kolmogorov distance of the samples to N(0,1).

    `normalized=True` means the samples are already standardized and are
    used as they are; otherwise they are normalized first.
    Either way the floor is the one for standardized samples.
    """
    if e.M < MIN_DISTANCE_SAMPLES:
        raise DegenerateEnsemble(f"Distance estimates need M ≥ {MIN_DISTANCE_SAMPLES}, got {e.M}")
    x = e.samples if normalized else normalize(e).samples
    return DistanceReport(
        w1=_w1_sorted(x),
        kolmogorov=_kolmogorov(x),
        M=e.M,
        mc_floor=mc_floor(e.M, normalized=True),
    )


# ════════════════════════════════════════════════════════
#  MOMENTS
# ════════════════════════════════════════════════════════

def variance_with_ci(e: Ensemble) -> tuple[float, float]:
    """Unbiased variance and its fourth-moment standard error."""
    x = e.samples
    n = x.size
    d = x - x.mean()
    s2 = float(np.sum(d * d) / (n - 1))
    m4 = float(np.mean(d ** 4))
    var_of_s2 = (m4 - (n - 3) / (n - 1) * s2 * s2) / n
    return s2, math.sqrt(max(var_of_s2, 0.0))


def _check_paired(e1: Ensemble, e2: Ensemble):
    if e1.M != e2.M or not np.array_equal(e1.path_indices, e2.path_indices):
        raise UnpairedEnsembles(f"{e1} and {e2} are not drawn on the same paths")
    if e1.R != e2.R:
        raise UnpairedEnsembles(f"Radii differ: {e1.R:g} vs {e2.R:g}")


def covariance_estimate(e1: Ensemble, e2: Ensemble) -> tuple[float, float]:
    """Sample covariance of paired (F_R(t₁), F_R(t₂)) with standard error."""
    _check_paired(e1, e2)
    n = e1.M
    prod = (e1.samples - e1.samples.mean()) * (e2.samples - e2.samples.mean())
    cov = float(prod.sum() / (n - 1))
    return cov, float(np.std(prod, ddof=1) / math.sqrt(n))


def increment_moment(e_s: Ensemble, e_t: Ensemble) -> tuple[float, float]:
    """E|F_R(t) - F_R(s)|² with standard error."""
    _check_paired(e_s, e_t)
    sq = (e_t.samples - e_s.samples) ** 2
    return float(sq.mean()), float(np.std(sq, ddof=1) / math.sqrt(sq.size))


# ════════════════════════════════════════════════════════
#  SCALING FITS
# ════════════════════════════════════════════════════════

@dataclass
class ScalingFit:
    radii: list[float]
    values: list[float]
    slope: float
    intercept: float
    r_squared: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "radii": list(self.radii),
            "values": list(self.values),
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
        }

    def __str__(self):
        return f"slope {self.slope:.4f} (r²={self.r_squared:.4f}) over {len(self.radii)} points"


def scaling_exponent_fit(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Least-squares line through (log R, log value)."""
    if len(points) < 3:
        raise FitError(f"Scaling fit needs at least 3 points, got {len(points)}")
    radii = np.array([p[0] for p in points], dtype=float)
    values = np.array([p[1] for p in points], dtype=float)
    if np.any(np.diff(radii) <= 0.0):
        raise FitError("Radii must be strictly increasing")
    if np.any(radii <= 0.0) or np.any(values <= 0.0):
        raise FitError("Scaling fit needs positive radii and values")
    lx, ly = np.log(radii), np.log(values)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return ScalingFit(radii.tolist(), values.tolist(), float(slope), float(intercept), min(1.0, max(0.0, r2)))


def decay_slope(radii: Sequence[float], w1_values: Sequence[float]) -> ScalingFit:
    """Fitted log-log decay of W1 along the radius ladder (diagnostic only)."""
    return scaling_exponent_fit(list(zip(radii, w1_values)))


def ergodic_ratios(radii: Sequence[float], variances: Sequence[float]) -> list[float]:
    """σ̂_R / |B_R| per radius; decreasing when spatial averages self-average."""
    return [math.sqrt(max(v, 0.0)) / (4.0 * math.pi * r ** 3 / 3.0) for r, v in zip(radii, variances)]


# ════════════════════════════════════════════════════════
#  DETERMINISTIC REDUCTION
# ════════════════════════════════════════════════════════

def tree_reduce(items: Sequence[T], op: Callable[[T, T], T]) -> T:
    """Pairwise reduction in a fixed order: ((a·b)·(c·d))·..."""
    if not items:
        raise ValueError("tree_reduce of an empty sequence")
    level = list(items)
    while len(level) > 1:
        nxt = [op(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


# ════════════════════════════════════════════════════════
#  η(r)
# ════════════════════════════════════════════════════════

@dataclass
class EtaAccumulator:
    """Running sums of per-path spatial means of σ(u(r,·))."""
    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def add(self, sigma_field: np.ndarray):
        m = float(np.mean(sigma_field))
        self.count += 1
        self.total += m
        self.total_sq += m * m

    def merge(self, other: EtaAccumulator) -> EtaAccumulator:
        return EtaAccumulator(self.count + other.count, self.total + other.total, self.total_sq + other.total_sq)

    @property
    def value(self) -> float:
        if self.count == 0:
            raise DegenerateEnsemble("η estimate over an empty ensemble")
        return self.total / self.count

    @property
    def stderr(self) -> float:
        if self.count < 2:
            return 0.0
        mean = self.value
        var = (self.total_sq - self.count * mean * mean) / (self.count - 1)
        return math.sqrt(max(var, 0.0) / self.count)


def eta_estimate(fields, sigma) -> float:
    """Mean of σ(u(r,x)) over all paths and all grid points."""
    acc = EtaAccumulator()
    for state in fields:
        acc.add(sigma(state.u))
    return acc.value


@dataclass
class EtaCurve:
    times: list[float]
    values: list[float]
    stderrs: list[float]

    def to_dict(self) -> dict[str, Any]:
        return {"times": self.times, "values": self.values, "stderrs": self.stderrs}


def eta_curve(times: Sequence[float], accumulators: Sequence[EtaAccumulator]) -> EtaCurve:
    return EtaCurve([float(t) for t in times], [a.value for a in accumulators], [a.stderr for a in accumulators])


# ════════════════════════════════════════════════════════
#  LAG COVARIANCE
# ════════════════════════════════════════════════════════

@dataclass
class LagAccumulator:
    """Sums of Σ_x a(x+lag)·b(x)/N³ and of the spatial means of a and b."""
    grid: TorusGrid
    count: int = 0
    cross: Optional[np.ndarray] = None
    mean_a: float = 0.0
    mean_b: float = 0.0

    def add(self, a: np.ndarray, b: np.ndarray):
        if a.shape != self.grid.shape or b.shape != self.grid.shape:
            raise LagError(f"Field shapes {a.shape}, {b.shape} do not match {self.grid}")
        corr = fft.irfftn(fft.rfftn(a) * np.conj(fft.rfftn(b)), s=self.grid.shape) / self.grid.N ** 3
        self.cross = corr if self.cross is None else self.cross + corr
        self.mean_a += float(a.mean())
        self.mean_b += float(b.mean())
        self.count += 1

    def merge(self, other: LagAccumulator) -> LagAccumulator:
        if other.grid != self.grid:
            raise LagError("Cannot merge lag sums from different grids")
        if self.cross is None:
            return other
        if other.cross is None:
            return self
        return LagAccumulator(self.grid, self.count + other.count, self.cross + other.cross,
                              self.mean_a + other.mean_a, self.mean_b + other.mean_b)

    def covariance(self) -> np.ndarray:
        """Cov(u(t₁, x+lag), u(t₂, x)) for every grid lag, centred by pooled means."""
        if self.count == 0 or self.cross is None:
            raise DegenerateEnsemble("Lag covariance over an empty ensemble")
        return self.cross / self.count - (self.mean_a / self.count) * (self.mean_b / self.count)


def spatial_covariance_lag(fields_t1, fields_t2, lags) -> list[float]:
    """Pooled lag covariance between paired field ensembles at the given lags."""
    fields_t1, fields_t2 = list(fields_t1), list(fields_t2)
    if not fields_t1 or len(fields_t1) != len(fields_t2):
        raise LagError("Lag covariance needs two nonempty ensembles of equal size")
    grid = fields_t1[0].grid
    acc = LagAccumulator(grid)
    for s1, s2 in zip(fields_t1, fields_t2):
        acc.add(s1.u, s2.u)
    cov = acc.covariance()
    out = []
    for lag in lags:
        try:
            idx = grid.lag_index(lag)
        except NoiseError as e:
            raise LagError(str(e)) from e
        out.append(float(cov[idx]))
    return out


@dataclass
class LagCurve:
    """Lag covariance truncated to |lag| ≤ radius, with its lattice integral.

    `baseline` is the mean covariance over lags beyond the radius. The
    integral is taken of Cov - baseline, which undoes the constant offset
    left by the missing zero mode of the noise.
    """
    t1: float
    t2: float
    radius: float
    h: float
    covariance: np.ndarray = field(repr=False)
    integral: float = 0.0
    baseline: float = 0.0

    def profile(self, grid: TorusGrid, bins: int = 32) -> list[tuple[float, float]]:
        """Shell-averaged covariance against |lag|, for reporting."""
        r = grid.radius_field()
        edges = np.linspace(0.0, self.radius, bins + 1)
        rows = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            mask = (r >= lo) & (r < hi)
            if mask.any():
                rows.append((float(0.5 * (lo + hi)), float(self.covariance[mask].mean())))
        return rows


def lag_curve(acc: LagAccumulator, t1: float, t2: float, radius: float, subtract_baseline: bool = True) -> LagCurve:
    grid = acc.grid
    if 2.0 * radius > grid.L:
        raise LagError(f"Truncation radius {radius:g} exceeds half the torus side {grid.L / 2:g}")
    cov = acc.covariance()
    inside = grid.radius_field() <= radius
    baseline = float(cov[~inside].mean()) if subtract_baseline and (~inside).any() else 0.0
    integral = float((cov[inside] - baseline).sum() * grid.cell_volume)
    logger.debug(f"Lag integral ({t1:g},{t2:g}) within {radius:g}: {integral:.6g}, baseline {baseline:.3g}")
    return LagCurve(float(t1), float(t2), float(radius), grid.h, cov, integral, baseline)
