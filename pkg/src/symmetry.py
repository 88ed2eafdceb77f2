"""Polarization, rearrangement and radial-symmetry diagnostics on sampled fields."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from src.config import load_settings
from src.errors import DomainError
from src.geometry import (
    ON_SURFACE_TOLERANCE,
    BallPoint,
    GeodesicHypersurface,
    distance_from_origin,
    mobius_array,
    pairwise_distances,
)
from src.green_kernel import KernelSpec, green_kernel, riesz_constant
from src.heat_kernel import DEFAULT_OPTIONS, HeatEvalOptions, sphere_area
from src.radial_field import TABLE_TOLERANCE, RadialProfile, table_reach, volume

LOGGER = logging.getLogger("hyperchoq.symmetry")

NEAR_FIELD_RADIUS = 1e-3
PAIR_TOLERANCE = 1e-9
_BLOCK_ROWS = 256


@dataclass(slots=True, eq=False)
class SampledField:
    """Values at points of B^N with a common Monte-Carlo volume weight.

    ``multiplicity`` counts how many of the sampled regions (the ball B_R and
    its mirror image) contain each point; a point's weight is
    ``mc_weight / multiplicity``.
    """

    points: np.ndarray
    values: np.ndarray
    mc_weight: float
    multiplicity: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.points.shape[0] != self.values.size:
            raise DomainError(
                f"Field has {self.points.shape[0]} points but {self.values.size} values."
            )
        if self.values.size == 0:
            raise DomainError("A sampled field needs at least one point.")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("Field values must be finite.")
        norms = np.linalg.norm(self.points, axis=1)
        if not np.all(norms < 1.0):
            raise DomainError("Field points must lie inside the unit ball.")
        if self.multiplicity is None:
            self.multiplicity = np.ones(self.values.size)
        else:
            self.multiplicity = np.asarray(self.multiplicity, dtype=float)

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def weights(self) -> np.ndarray:
        return self.mc_weight / self.multiplicity

    def ball_points(self) -> list[BallPoint]:
        return [BallPoint.of(row) for row in self.points]

    def with_values(self, values: np.ndarray) -> "SampledField":
        return SampledField(self.points, values, self.mc_weight, self.multiplicity)


# -- Sampling -------------------------------------------------------------------------


def sample_ball(dim: int, radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` points distributed by hyperbolic volume in B_R(0).

    The geodesic radius is drawn by inverting the tabulated volume fraction and
    the direction uniformly on the sphere.
    """
    if radius <= 0.0 or count < 1:
        raise DomainError("Sampling needs a positive radius and at least one point.")
    table = np.linspace(0.0, radius, 4097)
    density = np.sinh(table) ** (dim - 1)
    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(table))])
    cumulative /= cumulative[-1]
    radii = np.interp(rng.uniform(size=count), cumulative, table)
    directions = rng.normal(size=(count, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return np.tanh(0.5 * radii)[:, None] * directions


def sample_pair_closed(
    surface: GeodesicHypersurface,
    n_pairs: int,
    radius: float,
    rng: np.random.Generator,
    func: Callable[[np.ndarray], np.ndarray] | None = None,
) -> SampledField:
    """Points [x_1..x_n, sigma x_1..sigma x_n] with x_i uniform in B_R(0).

    Values come from ``func`` (zero when omitted).
    """
    first = sample_ball(surface.dim, radius, n_pairs, rng)
    mirrored = surface.reflect_array(first)
    points = np.vstack([first, mirrored])
    inside = distance_from_origin(points) < radius
    reflected_inside = np.concatenate([inside[n_pairs:], inside[:n_pairs]])
    multiplicity = inside.astype(float) + reflected_inside.astype(float)
    values = np.zeros(2 * n_pairs) if func is None else np.asarray(func(points), dtype=float)
    return SampledField(points, values, volume(surface.dim, radius) / n_pairs, multiplicity)


def field_from_profile(
    profile: RadialProfile,
    points: np.ndarray,
    mc_weight: float = 1.0,
    center: BallPoint | None = None,
) -> SampledField:
    """Sample the radial profile v(rho(x, center)) at ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != profile.grid.dim:
        raise DomainError("Point dimension does not match the profile dimension.")
    moved = points if center is None else mobius_array(center.array, points)
    rho = distance_from_origin(moved)
    values = np.interp(rho, profile.grid.nodes, profile.values, left=profile.values[0], right=0.0)
    return SampledField(points, values, mc_weight)


def radial_function(
    profile_fn: Callable[[np.ndarray], np.ndarray], center: BallPoint | None = None
) -> Callable[[np.ndarray], np.ndarray]:
    """x -> v(rho(x, center)) as a point function."""

    def evaluate(points: np.ndarray) -> np.ndarray:
        moved = points if center is None else mobius_array(center.array, points)
        return profile_fn(distance_from_origin(moved))

    return evaluate


# -- Polarization ---------------------------------------------------------------------


def _pair_halves(field: SampledField, surface: GeodesicHypersurface) -> int:
    if field.size % 2 or field.dim != surface.dim:
        raise DomainError("Polarization needs a field sampled in reflected pairs.")
    half = field.size // 2
    mirrored = surface.reflect_array(field.points[:half])
    if not np.allclose(mirrored, field.points[half:], rtol=0.0, atol=PAIR_TOLERANCE):
        raise DomainError("The sample set is not closed under the reflection sigma_H.")
    return half


def polarize(field: SampledField, surface: GeodesicHypersurface) -> SampledField:
    """f^H: max on H+, min on H-, unchanged on H, applied within reflected pairs."""
    half = _pair_halves(field, surface)
    own, partner = field.values[:half], field.values[half:]
    side = surface.side_values(field.points[:half])
    plus = side > ON_SURFACE_TOLERANCE
    minus = side < -ON_SURFACE_TOLERANCE
    high, low = np.maximum(own, partner), np.minimum(own, partner)
    new_own = np.where(plus, high, np.where(minus, low, own))
    new_partner = np.where(plus, low, np.where(minus, high, partner))
    return field.with_values(np.concatenate([new_own, new_partner]))


def reflected_values(field: SampledField, surface: GeodesicHypersurface) -> np.ndarray:
    """f o sigma_H on the pair-closed sample."""
    half = _pair_halves(field, surface)
    return np.concatenate([field.values[half:], field.values[:half]])


class Equality(str, Enum):
    FIXED = "fixed"
    REFLECTED = "reflected"
    NEITHER = "neither"


class GapVerdict(str, Enum):
    STRICT = "strict"
    EQUAL = "equal"
    VIOLATION = "violation"


@dataclass(slots=True)
class GapEstimate:
    gap: float
    stderr: float
    pairs: int
    near_field: float

    @property
    def sigmas(self) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.gap == 0.0 else math.copysign(math.inf, self.gap)
        return self.gap / self.stderr


@dataclass(slots=True)
class PolarizationReport:
    estimate: GapEstimate
    verdict: GapVerdict
    equality: Equality | None

    def as_dict(self) -> dict[str, object]:
        return {
            "gap": self.estimate.gap,
            "stderr": self.estimate.stderr,
            "verdict": self.verdict.value,
            "equality": None if self.equality is None else self.equality.value,
        }


def _block_sums(
    points: np.ndarray,
    weights: np.ndarray,
    before: np.ndarray,
    after: np.ndarray,
    groups: np.ndarray,
    kernel: Callable[[np.ndarray], np.ndarray],
    rows: slice,
) -> np.ndarray:
    distances = pairwise_distances(points[rows], points)
    keep = (distances >= NEAR_FIELD_RADIUS) & (groups[rows, None] != groups[None, :])
    values = np.zeros(distances.shape)
    values[keep] = kernel(distances[keep])
    products = after[rows, None] * after[None, :] - before[rows, None] * before[None, :]
    return np.sum(values * products * weights[None, :], axis=1) * weights[rows]


def polarization_gap(
    field: SampledField,
    surface: GeodesicHypersurface,
    spec: KernelSpec,
    p: float,
    options: HeatEvalOptions = DEFAULT_OPTIONS,
) -> GapEstimate:
    """Monte-Carlo J(f^H) - J(f) with J(g) = int int k(rho(x,y)) g(x)^p g(y)^p.

    The double sum runs over points of different reflected pairs, which makes
    it a U-statistic in the pairs. Distances below NEAR_FIELD_RADIUS are
    replaced by the local Riesz correction, identical for f and f^H.
    """
    if np.any(field.values < 0.0):
        raise DomainError("Polarization gaps are defined for nonnegative fields.")
    if field.dim != spec.dim:
        raise DomainError(f"Field dimension {field.dim} does not match N={spec.dim}.")
    polarized = polarize(field, surface)
    half = field.size // 2
    groups = np.concatenate([np.arange(half), np.arange(half)])
    before = field.values**p
    after = polarized.values**p
    weights = field.weights * math.sqrt(half / max(half - 1, 1))

    reach = float(np.max(distance_from_origin(field.points)))
    table = green_kernel(spec, options).table(table_reach(2.0 * reach), TABLE_TOLERANCE)
    blocks = [slice(i, min(i + _BLOCK_ROWS, field.size)) for i in range(0, field.size, _BLOCK_ROWS)]
    with ThreadPoolExecutor(max_workers=load_settings().threads) as pool:
        parts = list(
            pool.map(
                lambda rows: _block_sums(field.points, weights, before, after, groups, table, rows),
                blocks,
            )
        )
    row_sums = np.concatenate(parts)
    per_pair = row_sums[:half] + row_sums[half:]
    gap = math.fsum(per_pair)
    stderr = 2.0 * math.sqrt(half) * float(np.std(per_pair, ddof=1)) if half > 1 else math.inf

    local = riesz_constant(spec.dim, spec.alpha) * sphere_area(spec.dim - 1)
    near_field = local * NEAR_FIELD_RADIUS**spec.alpha / spec.alpha * math.fsum(field.weights * before**2)
    LOGGER.debug("Polarization gap %.4g +- %.2g over %s pairs.", gap, stderr, half)
    return GapEstimate(gap, stderr, half, near_field)


def polarization_report(
    field: SampledField,
    surface: GeodesicHypersurface,
    spec: KernelSpec,
    p: float,
    options: HeatEvalOptions = DEFAULT_OPTIONS,
) -> PolarizationReport:
    """Gap estimate plus the equality diagnosis when the gap is within 3 sigma."""
    estimate = polarization_gap(field, surface, spec, p, options)
    if estimate.gap < -3.0 * estimate.stderr:
        return PolarizationReport(estimate, GapVerdict.VIOLATION, None)
    if estimate.gap > 3.0 * estimate.stderr:
        return PolarizationReport(estimate, GapVerdict.STRICT, None)
    polarized = polarize(field, surface).values
    if np.array_equal(polarized, field.values):
        equality = Equality.FIXED
    elif np.array_equal(polarized, reflected_values(field, surface)):
        equality = Equality.REFLECTED
    else:
        equality = Equality.NEITHER
    return PolarizationReport(estimate, GapVerdict.EQUAL, equality)


def radial_fixed_point_check(
    func: Callable[[np.ndarray], np.ndarray],
    surfaces: Iterable[GeodesicHypersurface],
    *,
    n_pairs: int,
    radius: float,
    rng: np.random.Generator,
) -> list[bool]:
    """For each H with the origin in H+, whether f^H = f on a pair-closed sample."""
    results = []
    for surface in surfaces:
        origin_side = float(surface.side_values(np.zeros((1, surface.dim)))[0])
        if origin_side <= ON_SURFACE_TOLERANCE:
            raise DomainError("The fixed-point check needs the origin strictly inside H+.")
        field = sample_pair_closed(surface, n_pairs, radius, rng, func)
        results.append(bool(np.array_equal(polarize(field, surface).values, field.values)))
    return results


# -- Rearrangement --------------------------------------------------------------------


@dataclass(slots=True)
class Rearrangement:
    """Decreasing rearrangement on a discrete measure.

    ``values[i]`` occupies the cell of mass ``weights[i]``; cells are listed in
    increasing-radius order and ``outer_volume`` is the cumulative mass.
    """

    values: np.ndarray
    weights: np.ndarray

    @property
    def outer_volume(self) -> np.ndarray:
        return np.cumsum(self.weights)


def schwarz_rearrange(values: Sequence[float], volume_weights: Sequence[float]) -> Rearrangement:
    """Sort (value, weight) cells by decreasing value; ties keep their order."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(volume_weights, dtype=float)
    if values.shape != weights.shape or values.ndim != 1:
        raise DomainError("Values and weights must be one-dimensional and of equal length.")
    if not np.all(weights > 0.0):
        raise DomainError("Volume weights must be positive.")
    order = np.argsort(-values, kind="stable")
    return Rearrangement(values[order], weights[order])


# -- Radial symmetry ------------------------------------------------------------------


@dataclass(slots=True)
class SymmetryCheck:
    center: BallPoint
    deviation: float
    degenerate: bool = False


def _shell_deviation(points: np.ndarray, values: np.ndarray, center: np.ndarray, shells: int) -> float:
    rho = distance_from_origin(mobius_array(center, points))
    order = np.argsort(rho)
    residual = 0.0
    for chunk in np.array_split(order, shells):
        if chunk.size < 4:
            residual += float(np.sum((values[chunk] - np.mean(values[chunk])) ** 2))
            continue
        r = rho[chunk]
        coefficients = np.polyfit(r - r.mean(), values[chunk], 2)
        fitted = np.polyval(coefficients, r - r.mean())
        residual += float(np.sum((values[chunk] - fitted) ** 2))
    return math.sqrt(residual / values.size)


def _center_from(z: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(z))
    if norm == 0.0:
        return np.zeros_like(z)
    return z / norm * math.tanh(norm) * (1.0 - 1e-9)


def _parameter_of(center: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(center))
    if norm == 0.0:
        return np.zeros_like(center)
    return center / norm * math.atanh(min(norm, 1.0 - 1e-9))


def radial_symmetry_check(field: SampledField, shells: int | None = None) -> SymmetryCheck:
    """Centre minimising the within-shell spread of the values, and that spread.

    The deviation is the rms residual of per-shell quadratic fits in the
    distance to the centre, divided by the rms value. A constant field is
    reported as degenerate with deviation 0 at the origin.
    """
    values = field.values
    scale = math.sqrt(float(np.mean(values**2)))
    if scale == 0.0 or float(np.ptp(values)) <= 1e-14 * scale:
        return SymmetryCheck(BallPoint.origin(field.dim), 0.0, degenerate=True)
    shells = shells or max(4, field.size // 40)

    def objective(z: np.ndarray) -> float:
        return _shell_deviation(field.points, values, _center_from(z), shells)

    top = np.argsort(-values)[: max(1, field.size // 100)]
    starts = [np.zeros(field.dim), _parameter_of(np.mean(field.points[top], axis=0))]
    start = min(starts, key=objective)
    result = minimize(objective, start, method="Nelder-Mead", options={"xatol": 1e-7, "fatol": 1e-14, "maxiter": 4000})
    center = _center_from(result.x)
    LOGGER.debug("Symmetry centre %s after %s evaluations.", center, result.nfev)
    return SymmetryCheck(BallPoint.of(center), float(result.fun) / scale)


# -- CSV ----------------------------------------------------------------------------


def field_csv_text(field: SampledField, comment: str | None = None) -> str:
    buffer = io.StringIO()
    if comment:
        buffer.write(f"# {comment}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([f"x{i + 1}" for i in range(field.dim)] + ["value"])
    for point, value in zip(field.points, field.values):
        writer.writerow([f"{c:.17g}" for c in point] + [f"{value:.17g}"])
    return buffer.getvalue()
