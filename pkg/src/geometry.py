"""Poincare-ball geometry: Mobius translations, distances and reflections."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from src.errors import DomainError

LOGGER = logging.getLogger("hyperchoq.geometry")

BOUNDARY_GUARD = 1e-12
ON_SURFACE_TOLERANCE = 1e-12


def _check_inside(coords: np.ndarray, label: str = "point") -> None:
    norms = np.linalg.norm(np.atleast_2d(coords), axis=-1)
    if not np.all(np.isfinite(norms)):
        raise DomainError(f"The {label} has non-finite coordinates.")
    if np.any(norms > 1.0 - BOUNDARY_GUARD):
        raise DomainError(
            f"The {label} must lie strictly inside the unit ball (|x| <= 1 - {BOUNDARY_GUARD:g})."
        )


@dataclass(slots=True, frozen=True)
class BallPoint:
    """A point of the Poincare ball given by Euclidean coordinates."""

    coords: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.coords) < 2:
            raise DomainError("A ball point needs dimension N >= 2.")
        _check_inside(np.asarray(self.coords, dtype=float))

    @classmethod
    def of(cls, values: Sequence[float] | np.ndarray) -> "BallPoint":
        return cls(tuple(float(v) for v in np.asarray(values, dtype=float).ravel()))

    @classmethod
    def origin(cls, dim: int) -> "BallPoint":
        return cls((0.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    def norm(self) -> float:
        return float(np.linalg.norm(self.array))


def _same_dim(x: BallPoint, y: BallPoint) -> None:
    if x.dim != y.dim:
        raise DomainError(f"Dimension mismatch: {x.dim} vs {y.dim}.")


def mobius_array(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Vectorised T_a over the last axis of ``x``.

    T_a(x) = (|x-a|^2 a - (1-|a|^2)(x-a)) / (1 - 2 x.a + |x|^2 |a|^2)
    """
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    diff = x - a
    diff_sq = np.sum(diff * diff, axis=-1, keepdims=True)
    a_sq = float(a @ a)
    x_sq = np.sum(x * x, axis=-1, keepdims=True)
    x_dot_a = np.sum(x * a, axis=-1, keepdims=True)
    denominator = 1.0 - 2.0 * x_dot_a + x_sq * a_sq
    return (diff_sq * a - (1.0 - a_sq) * diff) / denominator


def mobius_translate(a: BallPoint, x: BallPoint) -> BallPoint:
    """Return T_a(x); T_a swaps ``a`` and the origin.

    Raises:
        DomainError: On a dimension mismatch or a point outside the ball.
    """
    _same_dim(a, x)
    return BallPoint.of(mobius_array(a.array, x.array))


def _rho_from_euclidean_norm(norm: np.ndarray | float) -> np.ndarray | float:
    return 2.0 * np.arctanh(np.clip(norm, 0.0, 1.0 - 1e-16))


def geodesic_distance(x: BallPoint, y: BallPoint) -> float:
    """Hyperbolic distance log((1+|T_y x|)/(1-|T_y x|))."""
    _same_dim(x, y)
    image = mobius_array(y.array, x.array)
    return float(_rho_from_euclidean_norm(np.linalg.norm(image)))


def distance_from_origin(points: np.ndarray) -> np.ndarray:
    """Geodesic radius of each row of ``points``."""
    return _rho_from_euclidean_norm(np.linalg.norm(np.atleast_2d(points), axis=-1))


def pairwise_distances(points: np.ndarray, others: np.ndarray | None = None) -> np.ndarray:
    """Distance matrix through sinh(rho/2) = |x-y| / sqrt((1-|x|^2)(1-|y|^2))."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    y = x if others is None else np.atleast_2d(np.asarray(others, dtype=float))
    x_sq = np.sum(x * x, axis=1)
    y_sq = np.sum(y * y, axis=1)
    # |x-y| from the coordinate differences; the expanded square cancels below 1e-8.
    euclidean = cdist(x, y)
    scale = np.sqrt(np.outer(1.0 - x_sq, 1.0 - y_sq))
    return 2.0 * np.arcsinh(euclidean / scale)


def distance_from_radii(
    r: float | np.ndarray, s: float | np.ndarray, theta: float | np.ndarray
) -> float | np.ndarray:
    """Law of cosines for geodesic radii ``r``, ``s`` separated by angle ``theta``.

    Uses sinh^2(d/2) = sinh^2((r-s)/2) + sinh r sinh s sin^2(theta/2), which is
    the cosine law rewritten without cancellation near the diagonal.
    """
    r = np.maximum(np.asarray(r, dtype=float), 0.0)
    s = np.maximum(np.asarray(s, dtype=float), 0.0)
    half_gap = np.sinh(0.5 * (r - s))
    half_angle = np.sin(0.5 * np.asarray(theta, dtype=float))
    value = half_gap * half_gap + np.sinh(r) * np.sinh(s) * half_angle * half_angle
    result = 2.0 * np.arcsinh(np.sqrt(np.maximum(value, 0.0)))
    return float(result) if np.ndim(result) == 0 else result


def point_at(radius: float, direction: Sequence[float]) -> BallPoint:
    """Ball point at geodesic ``radius`` from the origin along ``direction``."""
    unit = np.asarray(direction, dtype=float)
    length = np.linalg.norm(unit)
    if length == 0.0:
        raise DomainError("Direction must be non-zero.")
    return BallPoint.of(math.tanh(radius / 2.0) * unit / length)


class Side(str, Enum):
    PLUS = "plus"
    MINUS = "minus"
    ON = "on"


@dataclass(slots=True, frozen=True)
class GeodesicHypersurface:
    """Totally geodesic hypersurface H = T_b(P), P the hyperplane normal to ``normal``.

    The reflection is sigma_H = T_b o R_P o T_b. ``origin`` is the designated
    point e; its component of the complement is H+.
    """

    anchor: BallPoint
    normal: tuple[float, ...]
    origin: BallPoint | None = None
    _orientation: float = field(init=False, repr=False, compare=False, default=1.0)

    def __post_init__(self) -> None:
        normal = np.asarray(self.normal, dtype=float)
        if normal.shape != (self.anchor.dim,):
            raise DomainError("Normal and anchor dimensions differ.")
        length = float(np.linalg.norm(normal))
        if not math.isfinite(length) or length == 0.0:
            raise DomainError("Normal must be a non-zero finite vector.")
        object.__setattr__(self, "normal", tuple(float(v) for v in normal / length))
        origin = self.origin or BallPoint.origin(self.anchor.dim)
        _same_dim(origin, self.anchor)
        object.__setattr__(self, "origin", origin)
        raw = float(self._raw_side(origin.array)[0])
        # T_0 is x -> -x, so -1 makes H+ = {x.n > 0} for surfaces anchored at e.
        orientation = math.copysign(1.0, raw) if abs(raw) > ON_SURFACE_TOLERANCE else -1.0
        object.__setattr__(self, "_orientation", orientation)

    @classmethod
    def random(
        cls,
        dim: int,
        rng: np.random.Generator,
        *,
        max_anchor: float = 0.6,
        origin: BallPoint | None = None,
    ) -> "GeodesicHypersurface":
        direction = rng.normal(size=dim)
        anchor = direction / np.linalg.norm(direction) * max_anchor * rng.uniform(0.05, 1.0)
        return cls(BallPoint.of(anchor), tuple(rng.normal(size=dim)), origin)

    @property
    def dim(self) -> int:
        return self.anchor.dim

    @property
    def unit_normal(self) -> np.ndarray:
        return np.asarray(self.normal, dtype=float)

    def _raw_side(self, points: np.ndarray) -> np.ndarray:
        images = mobius_array(self.anchor.array, np.atleast_2d(points))
        return images @ self.unit_normal

    def side_values(self, points: np.ndarray) -> np.ndarray:
        """Signed side function, positive on H+ and zero on H."""
        return self._orientation * self._raw_side(points)

    def reflect_array(self, points: np.ndarray) -> np.ndarray:
        b = self.anchor.array
        n = self.unit_normal
        images = mobius_array(b, np.atleast_2d(points))
        mirrored = images - 2.0 * (images @ n)[:, None] * n
        return mobius_array(b, mirrored)


def reflect(surface: GeodesicHypersurface, x: BallPoint) -> BallPoint:
    """Apply sigma_H to ``x``."""
    _same_dim(surface.anchor, x)
    return BallPoint.of(surface.reflect_array(x.array)[0])


def half_space_side(surface: GeodesicHypersurface, x: BallPoint) -> Side:
    """Classify ``x`` as lying in H+, H- or on H."""
    _same_dim(surface.anchor, x)
    value = float(surface.side_values(x.array)[0])
    if abs(value) < ON_SURFACE_TOLERANCE:
        return Side.ON
    return Side.PLUS if value > 0 else Side.MINUS
