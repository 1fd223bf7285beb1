"""stowave v0.1 - Quadrature Oracles

Deterministic targets the Monte Carlo measurements are compared against.

Continuum (spectral radial quadrature, additive noise σ ≡ c):
    linear_covariance(R, t1, t2)  c² ∫ μ(dξ) |F1_{B_R}|² ∫₀^{t1∧t2} FG(t1-r)FG(t2-r) dr
    linear_variance(R, t)         the diagonal t1 = t2 = t
    additive_l1_limit(t1, t2)     |B₁| c² f(0) ∫₀^{t1∧t2} (t1-r)(t2-r) dr
    propagator_energy(t)          ∫ μ(dξ) |FG(t)(ξ)|² and its Dalang bound

Discrete (exact in expectation for the additive trig scheme on the torus):
    discrete_duhamel_covariance / discrete_duhamel_variance

Large-radius limits of R^{-d}·Cov(F_R(t1), F_R(t2)):
    limit_covariance_riesz  τ_β ∫₀^{t1∧t2} (t1-r)(t2-r) η²(r) dr,  d = 6-β
    limit_covariance_l1     |B₁| ∫ Cov(u(t1,x), u(t2,0)) dx,     d = 3

The time integral of FG(t1-r)FG(t2-r) is done in closed form, so every
continuum target reduces to one radial integral in |ξ|.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np
from scipy import fft, integrate

from .averages import BallWeights
from .kernels import BALL_VOLUME, CorrelationKernel, check_dalang, riesz_constant, tau_beta
from .noise import TorusGrid, spectral_weights
from .propagator import (DEFAULT_SEQUENCE, MollifierSequence, fourier_G_radial,
                         fourier_indicator_ball_radial, fourier_rho_radial)
from .stats import EtaCurve, LagCurve

logger = logging.getLogger("stowave.oracle")

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_PANEL_CHUNK = 1 << 15
_START_CUTOFF = 8.0
_MAX_CUTOFF = 2.0 ** 14


class QuadratureDivergence(Exception):
    """Raised when a radial integral keeps growing past the largest cutoff."""

    def __init__(self, cutoff_history: list[tuple[float, float]], message: str = ""):
        self.cutoff_history = cutoff_history
        last = cutoff_history[-1] if cutoff_history else (float("nan"), float("nan"))
        super().__init__(message or f"Radial quadrature not converged at cutoff {last[0]:g} (value {last[1]:.6g})")


class OracleInputError(Exception):
    """Raised when oracle inputs do not cover what the formula needs."""
    pass


@dataclass
class LimitCovariance:
    case: str
    t1: float
    t2: float
    value: float
    stderr: float = 0.0
    inputs: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"case": self.case, "t1": self.t1, "t2": self.t2,
                "value": self.value, "stderr": self.stderr, "inputs": self.inputs}

    def __str__(self):
        return f"{self.case} limit Cov({self.t1:g}, {self.t2:g}) = {self.value:.6g} ± {self.stderr:.2g}"


# ════════════════════════════════════════════════════════
#  RADIAL QUADRATURE
# ════════════════════════════════════════════════════════

def _gauss_panels(f: Callable[[np.ndarray], np.ndarray], a: float, b: float, width: float) -> float:
    count = max(1, int(math.ceil((b - a) / width)))
    edges = np.linspace(a, b, count + 1)
    total = 0.0
    for lo in range(0, count, _PANEL_CHUNK):
        left = edges[lo:min(lo + _PANEL_CHUNK, count)]
        right = edges[lo + 1:min(lo + _PANEL_CHUNK, count) + 1]
        half = 0.5 * (right - left)
        mid = 0.5 * (right + left)
        x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        total += float(np.sum(half[:, None] * _GL_WEIGHTS[None, :] * f(x)))
    return total


def spectral_quadrature(
    f: Callable[[np.ndarray], np.ndarray],
    oscillation_scale: float,
    rtol: float = 1e-5,
    tail: Optional[Callable[[float], float]] = None,
) -> tuple[float, list[tuple[float, float]]]:
    """∫₀^∞ f(ρ) dρ for a vectorized integrand oscillating at frequency ~scale.

    Adaptive quad on [0, 1] absorbs integrable singularities at the origin;
    beyond that, fixed Gauss-Legendre panels of width 1/(4·scale) run up to
    doubling cutoffs until two consecutive doublings each move the value
    by less than rtol relative. `tail(K)`, when given, estimates ∫_K^∞ f and
    is added to the value at every cutoff.
    """
    head, _ = integrate.quad(lambda r: float(f(np.array([r]))[0]), 0.0, 1.0,
                             limit=1000, epsabs=0.0, epsrel=1e-10)
    width = 1.0 / (4.0 * max(oscillation_scale, 1.0))
    cutoff = _START_CUTOFF
    total = head + _gauss_panels(f, 1.0, cutoff, width)
    value = total + (tail(cutoff) if tail else 0.0)
    history = [(1.0, head), (cutoff, value)]
    quiet = 0
    while cutoff < _MAX_CUTOFF:
        total += _gauss_panels(f, cutoff, 2.0 * cutoff, width)
        cutoff *= 2.0
        previous, value = value, total + (tail(cutoff) if tail else 0.0)
        history.append((cutoff, value))
        quiet = quiet + 1 if abs(value - previous) <= rtol * abs(value) else 0
        if quiet >= 2 or value == 0.0:
            return value, history
    raise QuadratureDivergence(history)


def time_kernel(rho, t1: float, t2: float) -> np.ndarray:
    """∫₀^{t1∧t2} FG(t1-r)(ρ)·FG(t2-r)(ρ) dr, closed form with a series near ρ = 0."""
    rho = np.asarray(rho, dtype=float)
    m = min(t1, t2)
    d = abs(t1 - t2)
    s = t1 + t2
    omega = 2.0 * math.pi * rho
    small = omega * max(s, 1e-300) < 1e-3
    polynomial = t1 * t2 * m - s * m * m / 2.0 + m ** 3 / 3.0
    w = np.where(small, 1.0, omega)
    closed = (m * np.cos(w * d) - (np.sin(w * s) - np.sin(w * d)) / (2.0 * w)) / (2.0 * w * w)
    return np.where(small, polynomial, closed)


# ════════════════════════════════════════════════════════
#  ADDITIVE CONTINUUM TARGETS
# ════════════════════════════════════════════════════════

def linear_covariance(R: float, t1: float, t2: float, kernel: CorrelationKernel,
                      c: float = 1.0, rtol: float = 1e-5) -> float:
    """Cov(F_R(t1), F_R(t2)) for the additive equation σ ≡ c on ℝ³."""
    if min(t1, t2) <= 0.0 or c == 0.0:
        return 0.0

    def integrand(rho):
        f1 = fourier_indicator_ball_radial(R, rho.ravel()).reshape(rho.shape)
        return 4.0 * math.pi * rho * rho * kernel.density_radial(rho) * f1 * f1 * time_kernel(rho, t1, t2)

    value, history = spectral_quadrature(integrand, max(R, t1, t2), rtol)
    logger.debug(f"Linear Cov R={R:g} ({t1:g},{t2:g}) {kernel}: {value:.8g} after {len(history)} cutoffs")
    return c * c * value


def linear_variance(R: float, t: float, kernel: CorrelationKernel, c: float = 1.0, rtol: float = 1e-5) -> float:
    """Var F_R(t) for the additive equation σ ≡ c on ℝ³."""
    return linear_covariance(R, t, t, kernel, c, rtol)


def additive_l1_limit(t1: float, t2: float, kernel: CorrelationKernel, c: float = 1.0) -> LimitCovariance:
    """|B₁|∫Cov(u(t1,x), u(t2,0))dx for σ ≡ c and an integrable kernel."""
    if not kernel.integrable:
        raise OracleInputError(f"{kernel} is not integrable; the R³ limit does not apply")
    m = max(0.0, min(t1, t2))
    time_part = t1 * t2 * m - (t1 + t2) * m * m / 2.0 + m ** 3 / 3.0
    value = BALL_VOLUME * c * c * float(kernel.density_radial(0.0)) * time_part
    return LimitCovariance("L1-additive", t1, t2, value, 0.0, {"kernel": str(kernel), "c": c})


def propagator_energy(kernel: CorrelationKernel, t: float, T: Optional[float] = None) -> tuple[float, float]:
    """∫ μ(dξ)|FG(t)(ξ)|² and the bound (1 + 2T²)·∫⟨ξ⟩⁻² μ(dξ)."""
    T = t if T is None else T
    report = check_dalang(kernel)
    if not report.converged:
        raise QuadratureDivergence(report.cutoff_history, f"{kernel} fails Dalang's condition")
    bound = (1.0 + 2.0 * T * T) * report.integral_value
    if t <= 0.0:
        return 0.0, bound

    def integrand(rho):
        g = fourier_G_radial(t, rho)
        return 4.0 * math.pi * rho * rho * kernel.density_radial(rho) * g * g

    def tail(cutoff: float) -> float:
        # sin² averages to 1/2 far out: 4πρ²·f·(1/2)/(2πρ)² = f/(2π)
        value, _ = integrate.quad(lambda r: float(kernel.density_radial(r)), cutoff, math.inf, limit=200)
        return value / (2.0 * math.pi)

    energy, _ = spectral_quadrature(integrand, max(t, 1.0), rtol=1e-4, tail=tail)
    return energy, bound


def _rescaled_double_convolution(t1: float, t2: float, r: float, beta: float, R: float) -> float:
    """R^{β-6}∫∫ φ_{t1}(x) φ_{t2}(y) |x-y|^{-β} dx dy with φ_t = 1_{B_R} * G(t-r).

    Tends to τ_β (t1-r)(t2-r) as R → ∞.
    """
    c_beta = riesz_constant(beta)
    a, b = t1 - r, t2 - r

    def integrand(q):
        f1 = fourier_indicator_ball_radial(1.0, q.ravel()).reshape(q.shape)
        return (4.0 * math.pi * c_beta * q ** (beta - 1.0) * f1 * f1
                * fourier_G_radial(a, q / R) * fourier_G_radial(b, q / R))

    value, _ = spectral_quadrature(integrand, max(1.0, max(a, b) / R))
    return value


# ════════════════════════════════════════════════════════
#  DISCRETE ADDITIVE SCHEME
# ════════════════════════════════════════════════════════

def discrete_duhamel_covariance(
    grid: TorusGrid,
    kernel: CorrelationKernel,
    weights: BallWeights,
    t1: float,
    t2: float,
    dt: float,
    c: float = 1.0,
    mollifier_n: Optional[int] = None,
    seq: MollifierSequence = DEFAULT_SEQUENCE,
) -> float:
    """E[F_R(t1)F_R(t2)] produced by the additive trig scheme on this grid.

    c² dt Σ_k |Ŵ_k|² λ_k Σ_{j<m} FG(t1-t_j)FG(t2-t_j) |Fρ_n|², with Ŵ the DFT
    of the ball weights and m the number of slabs before t1 ∧ t2.
    """
    if weights.grid != grid:
        raise OracleInputError(f"Ball weights on {weights.grid}, oracle on {grid}")
    m = int(round(min(t1, t2) / dt))
    if m <= 0:
        return 0.0
    rho = grid.frequency_norm(half=False)
    lam = spectral_weights(grid, kernel)
    w_hat = fft.fftn(weights.weights)
    spectral = np.abs(w_hat) ** 2 * lam
    if mollifier_n is not None:
        spectral = spectral * fourier_rho_radial(mollifier_n, rho, seq) ** 2
    time_sum = np.zeros(rho.shape)
    for j in range(m):
        tj = j * dt
        time_sum += fourier_G_radial(t1 - tj, rho) * fourier_G_radial(t2 - tj, rho)
    return float(c * c * dt * np.sum(spectral * time_sum))


def discrete_duhamel_variance(
    grid: TorusGrid,
    kernel: CorrelationKernel,
    weights: BallWeights,
    t: float,
    dt: float,
    c: float = 1.0,
    mollifier_n: Optional[int] = None,
    seq: MollifierSequence = DEFAULT_SEQUENCE,
) -> float:
    return discrete_duhamel_covariance(grid, kernel, weights, t, t, dt, c, mollifier_n, seq)


def discrete_mode_variance(grid: TorusGrid, kernel: CorrelationKernel, t: float, dt: float,
                           c: float = 1.0, mollifier_n: Optional[int] = None,
                           seq: MollifierSequence = DEFAULT_SEQUENCE) -> np.ndarray:
    """Var of the normalized rfftn coefficient û_k/N³ at time t (additive scheme)."""
    m = int(round(t / dt))
    rho = grid.frequency_norm(half=True)
    lam = spectral_weights(grid, kernel, half=True)
    if mollifier_n is not None:
        lam = lam * fourier_rho_radial(mollifier_n, rho, seq) ** 2
    total = np.zeros(rho.shape)
    for j in range(m):
        total += fourier_G_radial(t - j * dt, rho) ** 2
    return c * c * dt * lam * total


# ════════════════════════════════════════════════════════
#  LIMIT COVARIANCES
# ════════════════════════════════════════════════════════

def limit_covariance_riesz(t1: float, t2: float, beta: float, eta: EtaCurve) -> LimitCovariance:
    """τ_β ∫₀^{t1∧t2} (t1-r)(t2-r) η²(r) dr with η² piecewise linear between samples.

    The product with the quadratic weight is integrated exactly segment by
    segment; the η standard errors are propagated linearly.
    """
    m = min(t1, t2)
    tau = tau_beta(beta)
    inputs = {"beta": beta, "tau_beta": tau, "eta_times": list(eta.times)}
    if m <= 0.0:
        return LimitCovariance("riesz", t1, t2, 0.0, 0.0, inputs)
    times = np.asarray(eta.times, dtype=float)
    values = np.asarray(eta.values, dtype=float)
    errors = np.asarray(eta.stderrs, dtype=float)
    if times.size < 2 or np.any(np.diff(times) <= 0.0):
        raise OracleInputError("η curve needs at least two strictly increasing sample times")
    if times[0] > 1e-9 or times[-1] < m - 1e-9:
        raise OracleInputError(f"η curve covers [{times[0]:g}, {times[-1]:g}], need [0, {m:g}]")

    nodes, gl_w = np.polynomial.legendre.leggauss(2)
    gains = np.zeros(times.size)
    for i in range(times.size - 1):
        a, b = times[i], times[i + 1]
        hi = min(b, m)
        if hi <= a:
            break
        half = 0.5 * (hi - a)
        r = 0.5 * (hi + a) + half * nodes
        p = (t1 - r) * (t2 - r) * gl_w * half
        gains[i] += float(np.sum(p * (b - r) / (b - a)))
        gains[i + 1] += float(np.sum(p * (r - a) / (b - a)))
    value = tau * float(np.sum(gains * values ** 2))
    stderr = tau * math.sqrt(float(np.sum((2.0 * gains * values * errors) ** 2)))
    return LimitCovariance("riesz", t1, t2, value, stderr, inputs)


def limit_covariance_l1(t1: float, t2: float, lag: LagCurve, h: Optional[float] = None) -> LimitCovariance:
    """|B₁| h³ Σ_{|lag| ≤ radius} Cov(lag) from a measured lag curve."""
    h = lag.h if h is None else h
    need = t1 + t2 + 2.0 * h
    if lag.radius < need - 1e-12:
        raise OracleInputError(f"Lag truncation radius {lag.radius:g} < t1 + t2 + 2h = {need:g}")
    return LimitCovariance("L1", t1, t2, BALL_VOLUME * lag.integral, 0.0,
                           {"lag_radius": lag.radius, "baseline": lag.baseline})


def finite_radius_target(lag_covariance: np.ndarray, weights: BallWeights) -> float:
    """Σ_lag Cov(lag)·(w ⋆ w)(lag): the exact Cov(F_R(t1), F_R(t2)) implied by a lag field."""
    w_hat = fft.rfftn(weights.weights)
    overlap = fft.irfftn(w_hat * np.conj(w_hat), s=weights.grid.shape)
    return float(np.sum(lag_covariance * overlap))
