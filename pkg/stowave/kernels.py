"""stowave v0.1 - Correlation Kernels

Spatial correlations γ of the driving noise and their spectral measures μ,
under the transform convention

    Fφ(ξ) = ∫ exp(-2πi ξ·x) φ(x) dx

Kernels:
  - RieszKernel(beta)      γ(x) = |x|^-β, μ(dξ) = c_β |ξ|^(β-3) dξ
  - GaussianKernel(scale)  γ(x) = exp(-|x|²/2s²), closed-form transform
  - CustomKernel           user-supplied radial γ and radial spectral density

Every kernel here is radial, so all quadratures reduce to one dimension.
Record form (experiment config):

    {"type": "riesz", "beta": 1.0}
    {"type": "gaussian", "scale": 1.0}
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import integrate, special

logger = logging.getLogger("stowave.kernels")

BALL_VOLUME = 4.0 * math.pi / 3.0

# Quadrature settings shared by the radial integrals below
_QUAD_LIMIT = 400
_QUAD_EPSREL = 1e-10


class KernelDomainError(ValueError):
    """Raised when a kernel or constant is evaluated outside its domain."""
    pass


# ════════════════════════════════════════════════════════
#  KERNEL TYPES
# ════════════════════════════════════════════════════════

class CorrelationKernel:
    """Base class for radial correlation kernels.

    Subclasses provide the radial profile of γ and the radial Lebesgue
    density of μ. Both accept numpy arrays.
    """

    description: str = ""
    integrable: bool = False
    correlation_length: float = math.inf

    def gamma_radial(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def density_radial(self, rho: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_spec(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class RieszKernel(CorrelationKernel):
    beta: float
    description: str = "riesz"

    def __post_init__(self):
        if not 0.0 < self.beta < 3.0:
            raise KernelDomainError(f"Riesz exponent must lie in (0, 3), got {self.beta}")

    @property
    def dalang_admissible(self) -> bool:
        return self.beta < 2.0

    def gamma_radial(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0.0):
            raise KernelDomainError("Riesz kernel is singular at the origin")
        return r ** (-self.beta)

    def density_radial(self, rho):
        rho = np.asarray(rho, dtype=float)
        if np.any(rho <= 0.0):
            raise KernelDomainError("Riesz spectral density diverges at ξ = 0")
        return riesz_constant(self.beta) * rho ** (self.beta - 3.0)

    def to_spec(self) -> dict[str, Any]:
        return {"type": "riesz", "beta": self.beta}

    def __str__(self):
        return f"Riesz(β={self.beta:g})"


@dataclass(frozen=True)
class GaussianKernel(CorrelationKernel):
    scale: float = 1.0
    description: str = "gaussian"
    integrable: bool = field(default=True, init=False)

    def __post_init__(self):
        if not self.scale > 0.0:
            raise KernelDomainError(f"Gaussian scale must be positive, got {self.scale}")

    @property
    def correlation_length(self) -> float:
        return self.scale

    @property
    def l1_norm(self) -> float:
        return (2.0 * math.pi * self.scale ** 2) ** 1.5

    def gamma_radial(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(-(r ** 2) / (2.0 * self.scale ** 2))

    def density_radial(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.l1_norm * np.exp(-2.0 * math.pi ** 2 * self.scale ** 2 * rho ** 2)

    def to_spec(self) -> dict[str, Any]:
        return {"type": "gaussian", "scale": self.scale}

    def __str__(self):
        return f"Gaussian(s={self.scale:g})"


@dataclass(frozen=True)
class CustomKernel(CorrelationKernel):
    """Kernel given by user callables on radii.

    `gamma` and `density` take arrays of radii |x| and |ξ|. The integrability
    flag is declared, not checked.
    """
    gamma: Callable[[np.ndarray], np.ndarray]
    density: Callable[[np.ndarray], np.ndarray]
    integrable: bool = False
    correlation_length: float = math.inf
    description: str = "custom"

    def gamma_radial(self, r):
        return np.asarray(self.gamma(np.asarray(r, dtype=float)), dtype=float)

    def density_radial(self, rho):
        return np.asarray(self.density(np.asarray(rho, dtype=float)), dtype=float)

    def to_spec(self) -> dict[str, Any]:
        raise KernelDomainError(f"{self} is code-only and has no config record")

    def __str__(self):
        return f"Custom({self.description})"


def kernel_from_spec(record: dict[str, Any]) -> CorrelationKernel:
    """Build a kernel from its tagged config record."""
    kind = str(record.get("type", "")).lower()
    if kind == "riesz":
        return RieszKernel(float(record["beta"]))
    if kind == "gaussian":
        return GaussianKernel(float(record.get("scale", 1.0)))
    raise KernelDomainError(f"Unknown kernel type: {record.get('type')!r}")


# ════════════════════════════════════════════════════════
#  POINT EVALUATION
# ════════════════════════════════════════════════════════

def gamma_eval(kernel: CorrelationKernel, x) -> float:
    """γ(x) for a 3-vector x."""
    r = float(np.linalg.norm(np.asarray(x, dtype=float)))
    return float(kernel.gamma_radial(r))


def spectral_density(kernel: CorrelationKernel, xi) -> float:
    """Lebesgue density of μ at the 3-vector ξ."""
    rho = float(np.linalg.norm(np.asarray(xi, dtype=float)))
    return float(kernel.density_radial(rho))


def riesz_constant(beta: float) -> float:
    """c_β with F(|·|^-β) = c_β |ξ|^(β-3).

    Grows without bound as β → 3⁻ through the pole of Γ((3-β)/2).
    """
    if not 0.0 < beta < 3.0:
        raise KernelDomainError(f"c_β is defined for β in (0, 3), got {beta}")
    return math.pi ** (beta - 1.5) * special.gamma((3.0 - beta) / 2.0) / special.gamma(beta / 2.0)


# ════════════════════════════════════════════════════════
#  DALANG'S CONDITION
# ════════════════════════════════════════════════════════

@dataclass
class DalangReport:
    integral_value: float
    converged: bool
    cutoff_history: list[tuple[float, float]] = field(default_factory=list)

    def __str__(self):
        state = "converged" if self.converged else "divergent"
        return f"Dalang ∫<ξ>^-2 μ(dξ) ≈ {self.integral_value:.6g} [{state}, {len(self.cutoff_history)} cutoffs]"


def _radial_quad(f: Callable[[float], float], a: float, b: float) -> float:
    value, _err = integrate.quad(f, a, b, limit=_QUAD_LIMIT, epsabs=0.0, epsrel=_QUAD_EPSREL)
    return value


def check_dalang(
    kernel: CorrelationKernel,
    rtol: float = 0.01,
    start_cutoff: float = 1.0,
    max_doublings: int = 48,
) -> DalangReport:
    """Radial quadrature of ∫<ξ>^-2 μ(dξ) over balls of doubling radius.

    Converged means the last two doublings each moved the value by less
    than `rtol` relative.
    """
    def integrand(rho: float) -> float:
        return 4.0 * math.pi * rho * rho / (1.0 + rho * rho) * float(kernel.density_radial(rho))

    cutoff = start_cutoff
    value = _radial_quad(integrand, 0.0, cutoff)
    history = [(cutoff, value)]
    quiet = 0
    for _ in range(max_doublings):
        increment = _radial_quad(integrand, cutoff, 2.0 * cutoff)
        cutoff *= 2.0
        previous, value = value, value + increment
        history.append((cutoff, value))
        if value > 0.0 and abs(value - previous) < rtol * abs(value):
            quiet += 1
        else:
            quiet = 0
        if quiet >= 2:
            logger.debug(f"{kernel}: Dalang integral converged at cutoff {cutoff:g}")
            return DalangReport(value, True, history)
    logger.debug(f"{kernel}: Dalang integral still moving at cutoff {cutoff:g}")
    return DalangReport(value, False, history)


# ════════════════════════════════════════════════════════
#  BALL CONSTANTS
# ════════════════════════════════════════════════════════

def ball_distance_density(r):
    """Density ψ of |x-y| for x, y ranging over the unit ball (unnormalized).

    ψ(r) = 4πr² · |B₁ ∩ (B₁ + r e)| on [0, 2], so ∫ψ = |B₁|².
    """
    r = np.asarray(r, dtype=float)
    lens = math.pi * (4.0 + r) * (2.0 - r) ** 2 / 12.0
    return np.where((r >= 0.0) & (r <= 2.0), 4.0 * math.pi * r ** 2 * lens, 0.0)


def tau_beta(beta: float) -> float:
    """τ_β = ∫∫_{B₁×B₁} |x-y|^-β dx dy via the distance density."""
    if not 0.0 < beta < 3.0:
        raise KernelDomainError(f"τ_β diverges unless β in (0, 3), got {beta}")
    return _radial_quad(lambda r: float(ball_distance_density(r)) * r ** (-beta), 0.0, 2.0)


def tau_beta_closed_form(beta: float) -> float:
    if not 0.0 <= beta < 3.0:
        raise KernelDomainError(f"τ_β diverges unless β in (0, 3), got {beta}")
    return (math.pi ** 2 / 3.0) * (
        16.0 * 2.0 ** (3.0 - beta) / (3.0 - beta)
        - 12.0 * 2.0 ** (4.0 - beta) / (4.0 - beta)
        + 2.0 ** (6.0 - beta) / (6.0 - beta)
    )


def parseval_pair(kernel: CorrelationKernel, width: float = 1.0) -> tuple[float, float]:
    """Both sides of ∫γφ dx = ∫Fφ dμ for φ(x) = exp(-π|x|²/w²).

    Fφ(ξ) = w³ exp(-π w² |ξ|²). Agreement validates the transform pair
    (c_β for Riesz, the closed form for Gaussian).
    """
    w = float(width)

    def physical(r: float) -> float:
        return 4.0 * math.pi * r * r * float(kernel.gamma_radial(r)) * math.exp(-math.pi * r * r / (w * w))

    def spectral(rho: float) -> float:
        return 4.0 * math.pi * rho * rho * w ** 3 * math.exp(-math.pi * w * w * rho * rho) * float(kernel.density_radial(rho))

    lhs = _radial_quad(physical, 0.0, 1.0) + _radial_quad(physical, 1.0, math.inf)
    rhs = _radial_quad(spectral, 0.0, 1.0) + _radial_quad(spectral, 1.0, math.inf)
    return lhs, rhs
