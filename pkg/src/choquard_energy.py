"""Nonlocal term, energy quotient and Nehari operations of the Choquard problem

    -Delta u - lambda u = [(-Delta)^{-alpha/2} |u|^p] |u|^{p-2} u   in B^N.
"""

from __future__ import annotations

import logging
import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import gamma

from src.errors import DomainError, NumericError
from src.green_kernel import KernelSpec
from src.heat_kernel import DEFAULT_OPTIONS, HeatEvalOptions, diagonal_constant
from src.radial_field import RadialConvolution, RadialProfile, green_convolution

LOGGER = logging.getLogger("hyperchoq.choquard_energy")

_CRITICAL_RTOL = 1e-12


class ExponentClass(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    INVALID = "invalid"


def spectral_bottom(dim: int) -> float:
    return (dim - 1) ** 2 / 4.0


def lower_exponent(dim: int, alpha: float) -> float:
    return (dim + alpha) / dim


def critical_exponent(dim: int, alpha: float) -> float:
    """2*_alpha = (N+alpha)/(N-2)."""
    return (dim + alpha) / (dim - 2)


def validate_exponents(dim: int, alpha: float, p: float) -> ExponentClass:
    """Place p against (N+alpha)/N and (N+alpha)/(N-2)."""
    if dim < 3 or not 0.0 < alpha < dim:
        return ExponentClass.INVALID
    upper = critical_exponent(dim, alpha)
    if math.isclose(p, upper, rel_tol=_CRITICAL_RTOL):
        return ExponentClass.CRITICAL
    if lower_exponent(dim, alpha) < p < upper:
        return ExponentClass.SUBCRITICAL
    return ExponentClass.INVALID


class ProblemSpec(BaseModel):
    """(N, alpha, p, lambda) with p subcritical and lambda below the spectrum."""

    dim: int = Field(..., ge=3, description="Dimension N.")
    alpha: float = Field(..., description="Order of the Riesz-type potential, 0 < alpha < N.")
    p: float = Field(..., description="Nonlinearity exponent.")
    lam: float = Field(0.0, description="Linear shift lambda < (N-1)^2/4.")

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _check_ranges(self) -> "ProblemSpec":
        if not 0.0 < self.alpha < self.dim:
            raise ValueError(f"alpha must satisfy 0 < alpha < N={self.dim}, got {self.alpha}.")
        kind = validate_exponents(self.dim, self.alpha, self.p)
        if kind is ExponentClass.CRITICAL:
            raise ValueError(
                f"p={self.p:g} is the critical exponent (N+alpha)/(N-2) = "
                f"{critical_exponent(self.dim, self.alpha):g}; only subcritical p is supported."
            )
        if kind is ExponentClass.INVALID:
            raise ValueError(
                f"p={self.p:g} lies outside the subcritical range "
                f"({lower_exponent(self.dim, self.alpha):g}, {critical_exponent(self.dim, self.alpha):g})."
            )
        bottom = spectral_bottom(self.dim)
        if not self.lam < bottom:
            raise ValueError(
                f"lambda={self.lam:g} must be below the bottom of the spectrum (N-1)^2/4 = {bottom:g}."
            )
        return self

    @property
    def kernel(self) -> KernelSpec:
        return KernelSpec(dim=self.dim, alpha=self.alpha)

    @property
    def sobolev_exponent(self) -> float:
        """q = 2Np/(N+alpha), the Lebesgue exponent controlling J."""
        return 2.0 * self.dim * self.p / (self.dim + self.alpha)


def _check_grid(u: RadialProfile, spec: ProblemSpec) -> None:
    if u.grid.dim != spec.dim:
        raise DomainError(f"Profile dimension {u.grid.dim} does not match N={spec.dim}.")


def operator_for(u: RadialProfile, spec: ProblemSpec, options: HeatEvalOptions = DEFAULT_OPTIONS) -> RadialConvolution:
    _check_grid(u, spec)
    return green_convolution(u.grid, spec.kernel, options)


def power_profile(values: np.ndarray, p: float) -> np.ndarray:
    """|u|^p."""
    try:
        with np.errstate(over="raise", invalid="raise"):
            return np.abs(values) ** p
    except FloatingPointError as exc:
        raise NumericError(f"|u|^{p:g} overflowed.") from exc


def odd_power(values: np.ndarray, exponent: float) -> np.ndarray:
    """sign(u) |u|^exponent, zero where u = 0."""
    return np.sign(values) * power_profile(values, exponent)


def lambda_form(u: RadialProfile, lam: float) -> float:
    """||u||_lambda^2 = u^T K u - lambda u^T M u (may be negative off the coercive range)."""
    values = u.grid.dirichlet(u.values)
    return u.grid.stiffness_form(values) - lam * float(np.sum(u.grid.weights * values**2))


def nonlocal_term(u: RadialProfile, spec: ProblemSpec, options: HeatEvalOptions = DEFAULT_OPTIONS) -> float:
    """J(u) = <k * |u|^p, |u|^p> on the grid.

    Raises:
        NumericError: |u|^p or the double sum overflows.
    """
    operator = operator_for(u, spec, options)
    g = power_profile(u.grid.dirichlet(u.values), spec.p)
    value = operator.bilinear(g, g)
    if not math.isfinite(value):
        raise NumericError("The nonlocal term is not finite.")
    return max(value, 0.0)


def _quotient_parts(
    u: RadialProfile, spec: ProblemSpec, options: HeatEvalOptions
) -> tuple[float, float]:
    if u.is_zero():
        raise DomainError("The energy quotient is undefined for the zero profile.")
    form = lambda_form(u, spec.lam)
    nonlocal_value = nonlocal_term(u, spec, options)
    if nonlocal_value <= 0.0:
        raise DomainError("The nonlocal term vanishes; the energy quotient is undefined.")
    return form, nonlocal_value


def energy_quotient(u: RadialProfile, spec: ProblemSpec, options: HeatEvalOptions = DEFAULT_OPTIONS) -> float:
    """I(u) = ||u||_lambda^2 / J(u)^{1/p}; invariant under u -> c u."""
    form, nonlocal_value = _quotient_parts(u, spec, options)
    return form / nonlocal_value ** (1.0 / spec.p)


def nehari_scale(u: RadialProfile, spec: ProblemSpec, options: HeatEvalOptions = DEFAULT_OPTIONS) -> float:
    """t* with ||t* u||_lambda^2 = J(t* u)."""
    form, nonlocal_value = _quotient_parts(u, spec, options)
    if form <= 0.0:
        raise DomainError("||u||_lambda^2 must be positive to reach the Nehari manifold.")
    return (form / nonlocal_value) ** (1.0 / (2.0 * spec.p - 2.0))


def nehari_project(u: RadialProfile, spec: ProblemSpec, options: HeatEvalOptions = DEFAULT_OPTIONS) -> RadialProfile:
    return u.scaled(nehari_scale(u, spec, options))


def nehari_defect(u: RadialProfile, spec: ProblemSpec, options: HeatEvalOptions = DEFAULT_OPTIONS) -> float:
    """|‖u‖_λ² - J(u)| / ‖u‖_λ²."""
    form, nonlocal_value = _quotient_parts(u, spec, options)
    return abs(form - nonlocal_value) / abs(form)


def weak_residual(u: RadialProfile, spec: ProblemSpec, options: HeatEvalOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """Nodal weak residual A_lambda u - M (k * |u|^p) |u|^{p-2} u; zero at the Dirichlet node."""
    grid = u.grid
    values = grid.dirichlet(u.values)
    operator = operator_for(u, spec, options)
    potential = operator.apply(power_profile(values, spec.p))
    linear = grid.stiffness_apply(values) - spec.lam * grid.weights * values
    residual = linear - grid.weights * potential * odd_power(values, spec.p - 1.0)
    residual[-1] = 0.0
    return residual


def el_residual(u: RadialProfile, spec: ProblemSpec, options: HeatEvalOptions = DEFAULT_OPTIONS) -> float:
    """Dual norm of the weak residual relative to the dual norm of A_lambda u.

    Both are measured in the H^{-1} norm induced by A_lambda, so the value is
    the relative residual of the Euler-Lagrange equation.
    """
    if u.is_zero():
        raise DomainError("The Euler-Lagrange residual needs a non-zero profile.")
    residual = weak_residual(u, spec, options)
    solved = u.grid.solve_shifted(residual, spec.lam)
    dual = math.sqrt(max(float(residual @ solved), 0.0))
    scale = math.sqrt(max(lambda_form(u, spec.lam), 0.0))
    if scale == 0.0:
        raise DomainError("||u||_lambda vanishes; the residual cannot be normalised.")
    return dual / scale


def residual_component(
    u: RadialProfile,
    direction: RadialProfile,
    spec: ProblemSpec,
    options: HeatEvalOptions = DEFAULT_OPTIONS,
) -> float:
    """<R(u), phi> / (||u||_lambda ||phi||_lambda) along a single test direction phi."""
    residual = weak_residual(u, spec, options)
    phi = direction.grid.dirichlet(direction.values)
    scale = math.sqrt(max(lambda_form(u, spec.lam), 0.0) * max(lambda_form(direction, spec.lam), 0.0))
    if scale == 0.0:
        raise DomainError("Residual components need non-zero u and phi.")
    return float(residual @ phi) / scale


# -- Constants ------------------------------------------------------------------


def hls_constant(dim: int, alpha: float, s: float, c_heat: float) -> float:
    """C~ = (s/(s-1))^{1-alpha/N} 2N C^{alpha/N} / (alpha (N - s alpha) Gamma(alpha/2)).

    Raises:
        DomainError: Unless 1 < s < N/alpha and C > 0.
    """
    if not 0.0 < alpha < dim:
        raise DomainError(f"alpha must satisfy 0 < alpha < N={dim}, got {alpha}.")
    if not 1.0 < s < dim / alpha:
        raise DomainError(f"s must satisfy 1 < s < N/alpha = {dim / alpha:g}, got {s}.")
    if not c_heat > 0.0:
        raise DomainError(f"The heat-kernel constant must be positive, got {c_heat}.")
    return (
        (s / (s - 1.0)) ** (1.0 - alpha / dim)
        * 2.0
        * dim
        * c_heat ** (alpha / dim)
        / (alpha * (dim - s * alpha) * float(gamma(alpha / 2.0)))
    )


def hls_target_exponent(dim: int, alpha: float, s: float) -> float:
    """Ns/(N - s alpha)."""
    return dim * s / (dim - s * alpha)


def sharp_hls_constant(dim: int, lam: float) -> float:
    """pi^{lam/2} Gamma(N/2 - lam/2) / Gamma(N - lam/2) (Gamma(N/2)/Gamma(N))^{-1 + lam/N}."""
    if not 0.0 < lam < dim:
        raise DomainError(f"lam must lie in (0, N={dim}), got {lam}.")
    return float(
        math.pi ** (lam / 2.0)
        * gamma(dim / 2.0 - lam / 2.0)
        / gamma(dim - lam / 2.0)
        * (gamma(dim / 2.0) / gamma(dim)) ** (-1.0 + lam / dim)
    )


def nonlocal_constant(dim: int, alpha: float, options: HeatEvalOptions = DEFAULT_OPTIONS) -> float:
    """C(N, alpha) with J(u) <= C ||u||_{2Np/(N+alpha)}^{2p}: C~ at s = 2N/(N+alpha)."""
    s = 2.0 * dim / (dim + alpha)
    return hls_constant(dim, alpha, s, diagonal_constant(dim, options))


def energy_lower_bound(
    spec: ProblemSpec, sobolev_constant: float, options: HeatEvalOptions = DEFAULT_OPTIONS
) -> float:
    """C(N, alpha)^{-1/p} S_{lambda, q}: a floor for I over all profiles."""
    if not sobolev_constant > 0.0:
        raise DomainError("The Sobolev constant must be positive.")
    return nonlocal_constant(spec.dim, spec.alpha, options) ** (-1.0 / spec.p) * sobolev_constant
