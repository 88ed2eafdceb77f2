"""Green kernel k_{alpha,N} of (-Delta_{B^N})^{-alpha/2}.

k_{alpha,N}(rho) = (1/Gamma(alpha/2)) int_0^inf p_{t,N}(rho) t^{alpha/2-1} dt,
computed in the variable u = log t with a trapezoid rule. The error estimate
comes from the full sum; the t < 1 and t >= 1 parts are reported alongside it
when a tolerance is missed.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar
from scipy.special import gamma

from src.errors import DomainError, NumericError, UnsupportedError
from src.heat_kernel import (
    DEFAULT_OPTIONS,
    HeatEvalOptions,
    heat_kernel,
    heat_radial_derivative,
    log_sinh,
)
from src.quadrature import SplitIntegral, log_time_integral

LOGGER = logging.getLogger("hyperchoq.green_kernel")

_CUTOFF_EXPONENT = 64.0
TABLE_RHO_MIN = 1e-6
_TABLE_START_NODES = 65
_TABLE_MAX_REFINEMENTS = 6
_TAIL_SAMPLE_MAX = 41.0
_TAIL_MARGIN = 1.05


class KernelSpec(BaseModel):
    """The (N, alpha) pair selecting a Green kernel."""

    dim: int = Field(..., ge=2, description="Dimension N of the ball.")
    alpha: float = Field(..., description="Order alpha, 0 < alpha < N.")

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _check_alpha(self) -> "KernelSpec":
        if not (0.0 < self.alpha < self.dim):
            raise ValueError(f"alpha must satisfy 0 < alpha < N={self.dim}, got {self.alpha}.")
        return self


def riesz_constant(dim: int, alpha: float) -> float:
    """Gamma((N-alpha)/2) / (Gamma(alpha/2) pi^{N/2} 2^alpha)."""
    return float(gamma((dim - alpha) / 2.0) / (gamma(alpha / 2.0) * math.pi ** (dim / 2.0) * 2.0**alpha))


def green_closed_form_3_2(rho: np.ndarray | float) -> np.ndarray | float:
    """k_{2,3}(rho) = e^{-rho} / (4 pi sinh rho)."""
    rho = np.asarray(rho, dtype=float)
    value = np.exp(-rho) / (4.0 * math.pi * np.sinh(rho))
    return float(value) if np.ndim(value) == 0 else value


def _regularizer(spec: KernelSpec, rho: np.ndarray) -> np.ndarray:
    """log k minus this is smooth in log rho over (0, inf)."""
    return -(spec.dim - 1) * rho + (spec.alpha - spec.dim) * np.log(rho / (1.0 + rho))


@dataclass(slots=True)
class GreenTable:
    """Spline of the regularised log-kernel on log-spaced distances."""

    spec: KernelSpec
    rho_min: float
    rho_max: float
    spline: CubicSpline
    nodes: int
    tolerance: float

    def __call__(self, rho: np.ndarray | float) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        x = np.log(np.clip(rho, self.rho_min, self.rho_max))
        with np.errstate(divide="ignore"):
            return np.exp(self.spline(x) + _regularizer(self.spec, rho))


class GreenKernel:
    """Evaluation, radial derivative and memo tables for one KernelSpec."""

    def __init__(self, spec: KernelSpec, options: HeatEvalOptions = DEFAULT_OPTIONS) -> None:
        self.spec = spec
        self.options = options
        self.heat = heat_kernel(spec.dim, options)
        self._norm = 1.0 / float(gamma(spec.alpha / 2.0))
        self._tables: dict[tuple[float, float], GreenTable] = {}
        self._lock = threading.Lock()
        self._tail_constant: float | None = None

    def _u_bounds(self, rho: float) -> tuple[float, float]:
        # e^{-E(t)} with E = (N-1)^2 t/4 + rho^2/(4t) drops 64 e-folds below its peak.
        b = (self.spec.dim - 1) ** 2 / 4.0
        peak = math.sqrt(b) * rho
        c = peak + _CUTOFF_EXPONENT
        t_hi = (c + math.sqrt(max(c * c - b * rho * rho, 0.0))) / (2.0 * b)
        t_lo = rho * rho / (4.0 * b * t_hi)
        return math.log(t_lo) - 1.0, math.log(t_hi) + 1.0

    def _integrate(self, rho: float, values) -> SplitIntegral:
        u_lo, u_hi = self._u_bounds(rho)
        exponent = self.spec.alpha / 2.0 - 1.0

        def integrand(t: np.ndarray) -> np.ndarray:
            return values(t) * t**exponent * self._norm

        result = log_time_integral(integrand, u_lo, u_hi, tolerance=self.options.quad_tolerance)
        if not math.isfinite(result.value) or result.relative_error > self.options.quad_tolerance:
            raise NumericError(
                f"Green-kernel t-integral at rho={rho:g} reached relative error "
                f"{result.relative_error:.3g} (t<1: {result.lower_error:.3g}, "
                f"t>=1: {result.upper_error:.3g}).",
                achieved_tolerance=result.relative_error,
            )
        return result

    def evaluate_split(self, rho: float) -> SplitIntegral:
        rho = _check_positive(rho)
        return self._integrate(rho, lambda t: self.heat.over_times(t, rho))

    def evaluate(self, rho: float) -> float:
        return self.evaluate_split(rho).value

    def derivative(self, rho: float) -> float:
        rho = _check_positive(rho)
        if self.spec.dim % 2:
            dim = self.spec.dim
            options = self.options
            return self._integrate(
                rho, lambda t: heat_radial_derivative(dim, t, rho, options)
            ).value
        h = max(1e-4, 1e-3 * rho)
        if rho <= 2.0 * h:
            h = rho / 4.0
        f = self.evaluate
        return (-f(rho + 2 * h) + 8 * f(rho + h) - 8 * f(rho - h) + f(rho - 2 * h)) / (12.0 * h)

    def table(self, rho_max: float, tolerance: float | None = None) -> GreenTable:
        """Memo table on [TABLE_RHO_MIN, rho_max]; built once, then shared."""
        tolerance = self.options.quad_tolerance if tolerance is None else tolerance
        key = (float(rho_max), float(tolerance))
        with self._lock:
            cached = self._tables.get(key)
            if cached is None:
                cached = self._build_table(float(rho_max), float(tolerance))
                self._tables[key] = cached
        return cached

    def _build_table(self, rho_max: float, tolerance: float) -> GreenTable:
        x = np.linspace(math.log(TABLE_RHO_MIN), math.log(rho_max), _TABLE_START_NODES)
        phi = self._regularised_values(x)
        for level in range(_TABLE_MAX_REFINEMENTS + 1):
            spline = CubicSpline(x, phi)
            mid = 0.5 * (x[:-1] + x[1:])
            mid_phi = self._regularised_values(mid)
            worst = float(np.max(np.abs(spline(mid) - mid_phi)))
            merged_x = np.concatenate([x, mid])
            order = np.argsort(merged_x)
            x = merged_x[order]
            phi = np.concatenate([phi, mid_phi])[order]
            if worst < tolerance:
                break
            LOGGER.debug("Table refinement %s for %s: error %.3g", level, self.spec, worst)
        else:
            LOGGER.warning(
                "Kernel table for N=%s alpha=%s stopped at interpolation error %.3g.",
                self.spec.dim,
                self.spec.alpha,
                worst,
            )
        LOGGER.info("Built kernel table N=%s alpha=%s with %s nodes.", self.spec.dim, self.spec.alpha, x.size)
        return GreenTable(self.spec, TABLE_RHO_MIN, rho_max, CubicSpline(x, phi), x.size, tolerance)

    def _regularised_values(self, x: np.ndarray) -> np.ndarray:
        rho = np.exp(x)
        values = np.array([self.evaluate(float(r)) for r in rho])
        return np.log(values) - _regularizer(self.spec, rho)

    def tail_constant(self) -> float:
        """sup_{rho >= 1} k(rho) sinh(rho)^{N-alpha} with a 5% margin.

        The supremum runs over the smallest admissible rho0, so the bound is
        tight at rho0 = 1 and grows loose further out by the factor
        C / sup_{rho >= rho0} k sinh^{N-alpha} (e^{rho0-1} for N=3, alpha=2).
        Sampled on [1, 41], past which the product decays exponentially for
        alpha >= 1; an interior maximum is refined with a bounded search.
        """
        if self.spec.alpha < 1.0:
            raise UnsupportedError(
                f"No large-distance bound is available for alpha={self.spec.alpha} < 1."
            )
        if self._tail_constant is None:
            exponent = self.spec.dim - self.spec.alpha

            def log_scaled(r: float) -> float:
                return math.log(self.evaluate(r)) + exponent * float(log_sinh(r))

            rho = np.linspace(1.0, _TAIL_SAMPLE_MAX, 41)
            samples = np.array([log_scaled(float(r)) for r in rho])
            best = int(np.argmax(samples))
            peak = float(samples[best])
            if 0 < best < rho.size - 1:
                refined = minimize_scalar(
                    lambda r: -log_scaled(r),
                    bounds=(float(rho[best - 1]), float(rho[best + 1])),
                    method="bounded",
                    options={"xatol": 1e-6},
                )
                peak = max(peak, -float(refined.fun))
            self._tail_constant = _TAIL_MARGIN * math.exp(peak)
            LOGGER.debug("Tail constant for %s: %.6g", self.spec, self._tail_constant)
        return self._tail_constant


def _check_positive(rho: float) -> float:
    rho = float(rho)
    if not math.isfinite(rho) or rho <= 0.0:
        raise DomainError(f"The Green kernel needs rho > 0, got {rho}.")
    return rho


@lru_cache(maxsize=32)
def green_kernel(spec: KernelSpec, options: HeatEvalOptions = DEFAULT_OPTIONS) -> GreenKernel:
    return GreenKernel(spec, options)


def green_eval(spec: KernelSpec, rho: float, options: HeatEvalOptions = DEFAULT_OPTIONS) -> float:
    """k_{alpha,N}(rho) for rho > 0.

    Raises:
        DomainError: rho <= 0.
        NumericError: The t-integral missed ``options.quad_tolerance``.
    """
    return green_kernel(spec, options).evaluate(rho)


def green_derivative(spec: KernelSpec, rho: float, options: HeatEvalOptions = DEFAULT_OPTIONS) -> float:
    """d/drho k_{alpha,N}: exact identity for odd N, finite differences for even N."""
    return green_kernel(spec, options).derivative(rho)


def green_tail_bound(spec: KernelSpec, rho0: float, options: HeatEvalOptions = DEFAULT_OPTIONS) -> float:
    """Upper bound C (sinh rho0)^{-(N-alpha)} for k on [rho0, inf).

    Raises:
        DomainError: rho0 < 1.
        UnsupportedError: alpha < 1.
    """
    rho0 = float(rho0)
    if not math.isfinite(rho0) or rho0 < 1.0:
        raise DomainError(f"Tail bounds start at rho0 >= 1, got {rho0}.")
    constant = green_kernel(spec, options).tail_constant()
    return constant * math.exp(-(spec.dim - spec.alpha) * float(log_sinh(rho0)))
