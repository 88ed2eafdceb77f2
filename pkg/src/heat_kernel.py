"""Heat kernel of the hyperbolic space B^N.

Odd dimensions N = 2m+1 use the exact image of e^{-rho^2/4t} under the
operator (-(1/sinh rho) d/drho)^m, stored as a sparse polynomial in
(rho, 1/t, coth rho, csch rho) with rational coefficients. Even dimensions
integrate the same image for m = N/2 along r >= rho after the substitution
w^2 = cosh r - cosh rho.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import quad_vec

from src.errors import DomainError, NumericError
from src.quadrature import gauss_legendre_on

LOGGER = logging.getLogger("hyperchoq.heat_kernel")

Monomial = tuple[int, int, int, int]  # powers of rho, 1/t, coth rho, csch rho

SERIES_RADIUS = 1e-2
SERIES_ORDER = 12
# sinh(rho/2)^2 and sinh(rho + 1/2) stay finite in double precision up to here.
_EVEN_RHO_LIMIT = 700.0
_LOG_TINY = math.log(np.finfo(float).tiny)
_ENVELOPE_LOG_MARGIN = 20.0
_TAIL_EXPONENT = 40.0
_T_CHUNK = 16


class HeatEvalOptions(BaseModel):
    """Accuracy knobs for every quadrature-based kernel evaluation."""

    quad_tolerance: float = Field(
        1e-10, gt=0.0, le=1e-2, description="Relative quadrature tolerance."
    )
    max_subdivisions: int = Field(
        200, ge=1, description="Maximum adaptive subintervals per integral."
    )

    model_config = ConfigDict(extra="forbid", frozen=True)


DEFAULT_OPTIONS = HeatEvalOptions()


# -- Exact polynomial recurrence -----------------------------------------------


def _add(terms: dict[Monomial, Fraction], key: Monomial, value: Fraction) -> None:
    total = terms.get(key, Fraction(0)) + value
    if total:
        terms[key] = total
    else:
        terms.pop(key, None)


def apply_radial_operator(terms: Mapping[Monomial, Fraction]) -> dict[Monomial, Fraction]:
    """One application of -(1/sinh) d/drho to g(rho, 1/t) e^{-rho^2/4t}.

    Returns the new g. Uses d coth = -csch^2 and d csch = -coth csch, so the
    variable set stays closed.
    """
    result: dict[Monomial, Fraction] = {}
    for (a, b, k, l), coefficient in terms.items():
        if a:
            _add(result, (a - 1, b, k, l + 1), -a * coefficient)
        if k:
            _add(result, (a, b, k - 1, l + 3), k * coefficient)
        if l:
            _add(result, (a, b, k + 1, l + 1), l * coefficient)
        _add(result, (a + 1, b + 1, k, l + 1), coefficient / 2)
    return result


def _power_series_reciprocal(series: list[Fraction], degree: int) -> list[Fraction]:
    inverse = [Fraction(0)] * (degree + 1)
    inverse[0] = 1 / series[0]
    for n in range(1, degree + 1):
        acc = sum(
            (series[j] * inverse[n - j] for j in range(1, min(n, len(series) - 1) + 1)),
            Fraction(0),
        )
        inverse[n] = -acc / series[0]
    return inverse


def _power_series_product(left: list[Fraction], right: list[Fraction], degree: int) -> list[Fraction]:
    out = [Fraction(0)] * (degree + 1)
    for i, a in enumerate(left[: degree + 1]):
        if not a:
            continue
        for j, b in enumerate(right[: degree + 1 - i]):
            if b:
                out[i + j] += a * b
    return out


@lru_cache(maxsize=8)
def _scaled_hyperbolic_series(degree: int) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
    """Power series of x coth x and x csch x up to x^degree."""
    sinh_over_x = [Fraction(0)] * (degree + 1)
    cosh = [Fraction(0)] * (degree + 1)
    for n in range(0, degree + 1, 2):
        sinh_over_x[n] = Fraction(1, math.factorial(n + 1))
        cosh[n] = Fraction(1, math.factorial(n))
    x_csch = _power_series_reciprocal(sinh_over_x, degree)
    x_coth = _power_series_product(cosh, x_csch, degree)
    return tuple(x_coth), tuple(x_csch)


@dataclass(frozen=True, slots=True)
class OddKernelPolynomial:
    """The m-fold operator image, g with (-(1/sinh) d)^m e^{-rho^2/4t} = g e^{-rho^2/4t}."""

    power: int
    terms: Mapping[Monomial, Fraction]
    _float_terms: tuple[tuple[Monomial, float], ...] = field(repr=False, compare=False)
    _series: tuple[tuple[int, int, float], ...] = field(repr=False, compare=False)

    @classmethod
    def build(cls, power: int) -> "OddKernelPolynomial":
        if power < 0:
            raise DomainError("Operator power must be non-negative.")
        terms: dict[Monomial, Fraction] = {(0, 0, 0, 0): Fraction(1)}
        for _ in range(power):
            terms = apply_radial_operator(terms)
        series = _laurent_expansion(terms, power)
        return cls(
            power,
            dict(terms),
            tuple((key, float(value)) for key, value in sorted(terms.items())),
            tuple((p, b, float(c)) for (p, b), c in sorted(series.items())),
        )

    @property
    def dimension(self) -> int:
        return 2 * self.power + 1

    def evaluate(self, rho: np.ndarray | float, inv_t: np.ndarray | float) -> np.ndarray:
        """Evaluate g(rho, 1/t); rho below SERIES_RADIUS uses the expansion at 0."""
        rho_arr, tau_arr = np.broadcast_arrays(
            np.asarray(rho, dtype=float), np.asarray(inv_t, dtype=float)
        )
        out = np.empty(rho_arr.shape, dtype=float)
        near = rho_arr < SERIES_RADIUS
        if np.any(near):
            out[near] = self._evaluate_series(rho_arr[near], tau_arr[near])
        if np.any(~near):
            out[~near] = self._evaluate_direct(rho_arr[~near], tau_arr[~near])
        return out

    def _evaluate_direct(self, rho: np.ndarray, tau: np.ndarray) -> np.ndarray:
        csch = np.exp(-log_sinh(rho))
        coth = 1.0 / np.tanh(rho)
        total = np.zeros_like(rho)
        for (a, b, k, l), coefficient in self._float_terms:
            total += coefficient * rho**a * tau**b * coth**k * csch**l
        return total

    def _evaluate_series(self, rho: np.ndarray, tau: np.ndarray) -> np.ndarray:
        total = np.zeros_like(rho)
        for p, b, coefficient in self._series:
            total += coefficient * rho**p * tau**b
        return total


def _laurent_expansion(terms: Mapping[Monomial, Fraction], power: int) -> dict[tuple[int, int], Fraction]:
    degree = SERIES_ORDER + 2 * power + 2
    x_coth, x_csch = _scaled_hyperbolic_series(degree)
    expansion: dict[tuple[int, int], Fraction] = {}
    for (a, b, k, l), coefficient in terms.items():
        product: list[Fraction] = [Fraction(1)] + [Fraction(0)] * degree
        for _ in range(k):
            product = _power_series_product(product, list(x_coth), degree)
        for _ in range(l):
            product = _power_series_product(product, list(x_csch), degree)
        shift = a - k - l
        for j, c in enumerate(product):
            p = j + shift
            if c and p <= SERIES_ORDER:
                key = (p, b)
                expansion[key] = expansion.get(key, Fraction(0)) + coefficient * c
    expansion = {key: value for key, value in expansion.items() if value}
    singular = [key for key in expansion if key[0] < 0]
    if singular:
        raise NumericError(f"Series at rho = 0 kept singular terms {singular}.")
    return expansion


@lru_cache(maxsize=16)
def odd_kernel_polynomial(power: int) -> OddKernelPolynomial:
    """Cached polynomial for operator power ``power`` (odd N = 2 power + 1)."""
    return OddKernelPolynomial.build(power)


def log_sinh(x: np.ndarray | float) -> np.ndarray:
    """log(sinh x) for x > 0 without overflow."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return x + np.log1p(-np.exp(-2.0 * x)) - math.log(2.0)


def log_cosh(x: np.ndarray | float) -> np.ndarray:
    x = np.abs(np.asarray(x, dtype=float))
    return x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0)


# -- Kernel evaluation ---------------------------------------------------------


def _check_dimension(dim: int) -> int:
    if int(dim) != dim or dim < 2:
        raise DomainError(f"Dimension must be an integer >= 2, got {dim}.")
    return int(dim)


def _check_times(t: np.ndarray | float) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError("Time t must be finite and > 0.")
    return arr


def _check_radii(rho: np.ndarray | float) -> np.ndarray:
    arr = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0):
        raise DomainError("Distance rho must be finite and >= 0.")
    return arr


class HeatKernel:
    """p_{t,N}(rho) for a fixed dimension N."""

    def __init__(self, dim: int, options: HeatEvalOptions = DEFAULT_OPTIONS) -> None:
        self.dim = _check_dimension(dim)
        self.options = options
        self.power = self.dim // 2
        self.polynomial = odd_kernel_polynomial(self.power)
        self.spectral_bottom = (self.dim - 1) ** 2 / 4.0
        if self.dim % 2:
            self._log_prefactor = -(self.power + 1) * math.log(2.0) - (self.power + 0.5) * math.log(math.pi)
        else:
            self._log_prefactor = -(self.power + 0.5) * math.log(2.0 * math.pi)

    @property
    def is_odd(self) -> bool:
        return bool(self.dim % 2)

    def evaluate(self, t: float, rho: float) -> float:
        return float(self.over_times(np.asarray([t]), float(rho))[0])

    def profile(self, t: float, rho: np.ndarray) -> np.ndarray:
        """Values on an array of distances at a single time."""
        t_arr = _check_times(t)
        rho_arr = _check_radii(rho)
        if self.is_odd:
            return self.odd_values(t_arr, rho_arr)
        flat = np.atleast_1d(rho_arr).ravel()
        values = np.array([self._even_values(np.atleast_1d(t_arr), r)[0] for r in flat])
        return values.reshape(np.shape(rho_arr))

    def over_times(self, t: np.ndarray, rho: float) -> np.ndarray:
        """Values at one distance for an array of times."""
        t_arr = np.atleast_1d(_check_times(t))
        rho = float(_check_radii(rho))
        if self.is_odd:
            return self.odd_values(t_arr, rho)
        return self._even_values(t_arr, rho)

    def odd_values(
        self, t: np.ndarray | float, rho: np.ndarray | float, *, decay: float | None = None
    ) -> np.ndarray:
        """Closed-form odd-N values; ``decay`` overrides the e^{-(N-1)^2 t/4} rate."""
        rate = self.spectral_bottom if decay is None else decay
        t_arr = np.asarray(t, dtype=float)
        rho_arr = np.asarray(rho, dtype=float)
        g = self.polynomial.evaluate(rho_arr, 1.0 / t_arr)
        exponent = self._log_prefactor - 0.5 * np.log(t_arr) - rate * t_arr - rho_arr**2 / (4.0 * t_arr)
        return g * np.exp(exponent)

    # -- even dimensions --

    def _even_values(self, t: np.ndarray, rho: float) -> np.ndarray:
        if rho > _EVEN_RHO_LIMIT:
            return self._beyond_range(t, rho)
        order = np.argsort(t)
        result = np.empty_like(t)
        for start in range(0, t.size, _T_CHUNK):
            chunk = order[start : start + _T_CHUNK]
            result[chunk] = self._even_chunk(t[chunk], rho)
        return result

    def _beyond_range(self, t: np.ndarray, rho: float) -> np.ndarray:
        bound = log_heat_envelope(self.dim, t, rho) + _ENVELOPE_LOG_MARGIN
        if np.all(bound < _LOG_TINY):
            LOGGER.warning(
                "p_{t,%s}(%g) underflows double precision for t in [%g, %g]; returning 0.",
                self.dim,
                rho,
                float(np.min(t)),
                float(np.max(t)),
            )
            return np.zeros_like(t)
        raise NumericError(
            f"Even-dimension heat kernel at rho={rho:g} lies beyond the evaluable range "
            f"rho <= {_EVEN_RHO_LIMIT:g} but does not underflow.",
        )

    def _even_chunk(self, t: np.ndarray, rho: float) -> np.ndarray:
        tau = 1.0 / t
        poly = self.polynomial
        span = math.sqrt(4.0 * _TAIL_EXPONENT * float(t.max()))
        near_width = min(1.0, span)
        sinh_half_rho_sq = math.sinh(0.5 * rho) ** 2

        def near(w: float) -> np.ndarray:
            r = 2.0 * math.asinh(math.sqrt(sinh_half_rho_sq + 0.5 * w * w))
            return 2.0 * poly.evaluate(r, tau) * np.exp(-r * r * tau / 4.0)

        w_max = math.sqrt(2.0 * math.sinh(rho + 0.5 * near_width) * math.sinh(0.5 * near_width))
        integral = self._adaptive(near, 0.0, w_max)

        if span > near_width:
            log_cosh_rho = float(log_cosh(rho))

            def far(r: float) -> np.ndarray:
                ls = float(log_sinh(r))
                gap = 1.0 / math.tanh(r) - math.exp(log_cosh_rho - ls)
                log_ratio = 0.5 * ls - 0.5 * math.log(gap)
                return poly.evaluate(r, tau) * np.exp(log_ratio - r * r * tau / 4.0)

            integral = integral + self._adaptive(far, rho + near_width, rho + span)

        exponent = self._log_prefactor - 0.5 * np.log(t) - self.spectral_bottom * t
        return np.exp(exponent) * integral

    def _adaptive(self, func, lower: float, upper: float) -> np.ndarray:
        tolerance = self.options.quad_tolerance
        value, error, info = quad_vec(
            func,
            lower,
            upper,
            epsrel=tolerance,
            norm="max",
            limit=self.options.max_subdivisions,
            full_output=True,
        )
        scale = float(np.max(np.abs(value))) if np.size(value) else 0.0
        achieved = error / scale if scale > 0 else 0.0
        if info.status != 0 or not np.all(np.isfinite(value)):
            raise NumericError(
                f"Even-dimension heat quadrature did not converge (achieved {achieved:.3g}, "
                f"requested {tolerance:.3g}).",
                achieved_tolerance=achieved,
            )
        return np.asarray(value, dtype=float)


@lru_cache(maxsize=32)
def heat_kernel(dim: int, options: HeatEvalOptions = DEFAULT_OPTIONS) -> HeatKernel:
    return HeatKernel(dim, options)


def heat_eval(dim: int, t: float, rho: float, options: HeatEvalOptions = DEFAULT_OPTIONS) -> float:
    """Evaluate p_{t,N}(rho).

    Raises:
        DomainError: For t <= 0, rho < 0 or N < 2.
        NumericError: When the even-dimension quadrature fails.
    """
    return heat_kernel(_check_dimension(dim), options).evaluate(float(_check_times(t)), rho)


def log_heat_envelope(dim: int, t: np.ndarray | float, r: np.ndarray | float) -> np.ndarray:
    """log h_N(t, r); finite where h_N itself underflows."""
    t_arr = np.asarray(t, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    return (
        -0.5 * dim * np.log(4.0 * math.pi * t_arr)
        - (dim - 1) ** 2 * t_arr / 4.0
        - (dim - 1) * r_arr / 2.0
        - r_arr**2 / (4.0 * t_arr)
        + 0.5 * (dim - 3) * np.log1p(r_arr + t_arr)
        + np.log1p(r_arr)
    )


def heat_envelope(dim: int, t: float | np.ndarray, r: float | np.ndarray) -> np.ndarray | float:
    """Comparison function h_N(t, r) of the two-sided heat kernel bound."""
    dim = _check_dimension(dim)
    t_arr = _check_times(t)
    r_arr = _check_radii(r)
    value = np.exp(log_heat_envelope(dim, t_arr, r_arr))
    return float(value) if np.ndim(value) == 0 else value


def heat_diag(dim: int, t: float, options: HeatEvalOptions = DEFAULT_OPTIONS) -> float:
    """On-diagonal value p_{t,N}(0)."""
    return heat_eval(dim, t, 0.0, options)


def heat_radial_derivative(
    dim: int, t: float | np.ndarray, rho: float | np.ndarray, options: HeatEvalOptions = DEFAULT_OPTIONS
) -> np.ndarray:
    """d/drho p_{t,N} = -2 pi sinh(rho) e^{Nt} p_{t,N+2}(rho) for odd N."""
    dim = _check_dimension(dim)
    if dim % 2 == 0:
        raise DomainError("The dimension-shift identity holds for odd N only.")
    t_arr = _check_times(t)
    rho_arr = _check_radii(rho)
    shifted = heat_kernel(dim + 2, options)
    values = shifted.odd_values(t_arr, rho_arr, decay=(dim - 1) ** 2 / 4.0)
    return -2.0 * math.pi * np.sinh(rho_arr) * values


@lru_cache(maxsize=16)
def diagonal_constant(dim: int, options: HeatEvalOptions = DEFAULT_OPTIONS) -> float:
    """Empirical C with p_{t,N}(0) <= C t^{-N/2} for all t > 0.

    The small-time limit (4 pi)^{-N/2} is included as a candidate, then
    t^{N/2} p_t(0) is sampled over t in [1e-4, 10^2.5].
    """
    kernel = heat_kernel(_check_dimension(dim), options)
    times = np.logspace(-4.0, 2.5, 66)
    values = kernel.over_times(times, 0.0) * times ** (dim / 2.0)
    constant = max(float(np.max(values)), (4.0 * math.pi) ** (-dim / 2.0))
    LOGGER.info("Diagonal constant for N=%s: %.6g", dim, constant)
    return constant


def envelope_constants(
    dim: int,
    times: np.ndarray,
    radii: np.ndarray,
    options: HeatEvalOptions = DEFAULT_OPTIONS,
) -> tuple[float, float]:
    """Empirical (A_N, B_N): extrema of p/h_N over the sample grid."""
    kernel = heat_kernel(_check_dimension(dim), options)
    ratios = []
    for t in np.atleast_1d(times):
        values = kernel.profile(float(t), np.asarray(radii, dtype=float))
        ratios.append(values / heat_envelope(dim, float(t), np.asarray(radii, dtype=float)))
    stacked = np.concatenate([np.atleast_1d(r) for r in ratios])
    return float(np.min(stacked)), float(np.max(stacked))


def sphere_area(dim: int) -> float:
    """omega_{dim}: area of the unit sphere S^{dim} in R^{dim+1}."""
    return 2.0 * math.pi ** ((dim + 1) / 2.0) / math.gamma((dim + 1) / 2.0)


def semigroup_defect(
    dim: int,
    t: float,
    grid,
    options: HeatEvalOptions = DEFAULT_OPTIONS,
    *,
    order: int = 8,
) -> float:
    """Relative defect of p_{2t}(0) = omega_{N-1} int p_t(s)^2 sinh^{N-1}(s) ds.

    Panels follow the grid nodes, merged up to width sqrt(t)/2, with an
    ``order``-point Gauss-Legendre rule on each.

    Raises:
        NumericError: If the grid is too short for the Gaussian tail or has a
            cell wider than sqrt(t)/2.
    """
    dim = _check_dimension(dim)
    t = float(_check_times(t))
    kernel = heat_kernel(dim, options)
    tail = math.sqrt(8.0 * _TAIL_EXPONENT * t) + 1.0
    nodes = np.asarray(grid.nodes, dtype=float)
    if nodes[-1] < tail:
        raise NumericError(
            f"Grid radius {nodes[-1]:.4g} is below the Gaussian tail radius {tail:.4g} for t={t:g}.",
            achieved_tolerance=None,
        )
    width = 0.5 * math.sqrt(t)
    edges = np.concatenate([[0.0], nodes[nodes < tail], [tail]])
    widest = float(np.max(np.diff(edges)))
    if widest > width:
        raise NumericError(
            f"Grid too coarse for t={t:g}: cell width {widest:.3g} exceeds sqrt(t)/2 = {width:.3g}.",
            achieved_tolerance=None,
        )
    panels = [edges[0]]
    for edge in edges[1:]:
        if edge - panels[-1] >= width or edge == edges[-1]:
            panels.append(edge)
    panels_arr = np.asarray(panels)
    points, weights = gauss_legendre_on(panels_arr[:-1], panels_arr[1:], order)
    points = points.ravel()
    weights = weights.ravel()
    values = kernel.profile(t, points)
    integral = sphere_area(dim - 1) * float(np.sum(weights * values**2 * np.sinh(points) ** (dim - 1)))
    diagonal = kernel.evaluate(2.0 * t, 0.0)
    defect = abs(diagonal - integral) / diagonal
    LOGGER.debug("Semigroup defect N=%s t=%s: %.3e", dim, t, defect)
    return defect
