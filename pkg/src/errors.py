"""Exception hierarchy shared by the hyperchoq modules."""

from __future__ import annotations

from typing import Any


class HyperChoqError(Exception):
    """Base class for every error raised by the library."""


class DomainError(HyperChoqError, ValueError):
    """An argument lies outside the domain of the requested operation."""


class UnsupportedError(DomainError):
    """The input is valid but no supported estimate covers it."""


class NumericError(HyperChoqError, ArithmeticError):
    """A quadrature or discretisation failed to reach its tolerance.

    Attributes:
        achieved_tolerance: Best relative error estimate reached before giving
            up, or ``None`` when no estimate is available.
    """

    def __init__(self, message: str, *, achieved_tolerance: float | None = None) -> None:
        super().__init__(message)
        self.achieved_tolerance = achieved_tolerance


class ConvergenceError(NumericError):
    """The ground-state descent stopped before meeting its tolerance."""

    def __init__(
        self,
        message: str,
        *,
        last_iterate: Any,
        gradient_norm: float,
        iterations: int,
    ) -> None:
        super().__init__(message, achieved_tolerance=gradient_norm)
        self.last_iterate = last_iterate
        self.gradient_norm = gradient_norm
        self.iterations = iterations
