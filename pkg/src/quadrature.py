"""Quadrature rules shared by the kernel and field modules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np


@lru_cache(maxsize=32)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre_on(
    lower: np.ndarray | float, upper: np.ndarray | float, order: int
) -> tuple[np.ndarray, np.ndarray]:
    """Map the rule to [lower, upper]; array bounds broadcast along a new last axis."""
    nodes, weights = gauss_legendre(order)
    lower = np.asarray(lower, dtype=float)[..., None]
    upper = np.asarray(upper, dtype=float)[..., None]
    half = 0.5 * (upper - lower)
    return lower + half * (nodes + 1.0), half * weights


@dataclass(slots=True)
class SplitIntegral:
    """Result of a log-time integral split at t = 1.

    ``lower`` integrates t in (0, 1], ``upper`` integrates [1, inf).
    """

    value: float
    error: float
    lower: float
    upper: float
    lower_error: float
    upper_error: float
    step: float

    @property
    def relative_error(self) -> float:
        if self.value == 0.0:
            return 0.0 if self.error == 0.0 else math.inf
        return self.error / abs(self.value)


def _split_sums(values: np.ndarray, index: np.ndarray, step: float) -> tuple[float, float]:
    """Trapezoid sums over u <= 0 and u >= 0; the node at u = 0 is shared half and half."""
    at_zero = 0.5 * float(np.sum(values[index == 0]))
    lower = float(np.sum(values[index < 0])) + at_zero
    upper = float(np.sum(values[index > 0])) + at_zero
    return step * lower, step * upper


def log_time_integral(
    integrand: Callable[[np.ndarray], np.ndarray],
    u_lower: float,
    u_upper: float,
    *,
    tolerance: float,
    initial_step: float = 0.2,
    max_levels: int = 6,
) -> SplitIntegral:
    """Integrate f(t) dt over (0, inf) with t = e^u and the trapezoid rule in u.

    The integrand must decay double-exponentially at both ends of [u_lower,
    u_upper], so the full trapezoid sum converges geometrically. The step is
    halved until successive totals agree to ``tolerance``; the last change of
    the total is the reported error. The two halves only converge
    algebraically on their own (u = 0 is an interior endpoint for each), so
    their changes are kept for the message and never used as the stopping
    test. The caller checks ``relative_error``.
    """
    step = initial_step
    first = math.floor(u_lower / step)
    last = math.ceil(u_upper / step)
    index = np.arange(first, last + 1)
    u = step * index
    values = integrand(np.exp(u)) * np.exp(u)
    lower, upper = _split_sums(values, index, step)

    result = SplitIntegral(lower + upper, math.inf, lower, upper, math.inf, math.inf, step)
    for _ in range(max_levels):
        # Refine on the doubled integer grid; old nodes sit at even indices.
        index = np.arange(2 * first, 2 * last + 1)
        step *= 0.5
        midpoints = index[1::2]
        fresh = np.empty(index.size)
        fresh[0::2] = values
        fresh[1::2] = integrand(np.exp(step * midpoints)) * np.exp(step * midpoints)
        values = fresh
        first, last = 2 * first, 2 * last
        new_lower, new_upper = _split_sums(values, index, step)
        error = abs((new_lower + new_upper) - (lower + upper))
        result = SplitIntegral(
            new_lower + new_upper,
            error,
            new_lower,
            new_upper,
            abs(new_lower - lower),
            abs(new_upper - upper),
            step,
        )
        lower, upper = new_lower, new_upper
        if result.error <= tolerance * abs(result.value) or result.value == 0.0:
            break
    return result
