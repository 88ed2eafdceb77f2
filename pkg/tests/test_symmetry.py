import numpy as np
import pytest

from src.errors import DomainError
from src.geometry import ON_SURFACE_TOLERANCE, BallPoint, GeodesicHypersurface, distance_from_origin, reflect
from src.green_kernel import KernelSpec
from src.symmetry import (
    Equality,
    GapVerdict,
    SampledField,
    field_csv_text,
    radial_fixed_point_check,
    polarization_gap,
    polarization_report,
    polarize,
    radial_function,
    radial_symmetry_check,
    reflected_values,
    sample_ball,
    sample_pair_closed,
    schwarz_rearrange,
)
from src.verification import asymmetric_field_gap

SPEC = KernelSpec(dim=3, alpha=2.0)


def gaussian(rho):
    return np.exp(-rho * rho)


@pytest.fixture
def surface():
    return GeodesicHypersurface(BallPoint.of([0.2, 0.0, 0.0]), (1.0, 0.5, 0.0))


@pytest.fixture
def random_field(surface, rng):
    field = sample_pair_closed(surface, 300, 1.5, rng)
    return field.with_values(rng.uniform(size=field.size))


def test_samples_stay_in_the_ball(rng):
    points = sample_ball(3, 2.0, 500, rng)
    assert points.shape == (500, 3)
    assert np.all(distance_from_origin(points) < 2.0)


def test_pair_closed_sample(surface, rng):
    at_origin = radial_function(gaussian)
    field = sample_pair_closed(surface, 100, 1.0, rng, at_origin)
    assert field.size == 200
    assert np.allclose(surface.reflect_array(field.points[:100]), field.points[100:], atol=1e-12)
    assert np.allclose(field.values, at_origin(field.points))
    assert np.all(field.multiplicity >= 1.0) and np.all(field.multiplicity <= 2.0)


def test_polarization_is_idempotent(random_field, surface):
    once = polarize(random_field, surface)
    twice = polarize(once, surface)
    assert np.array_equal(once.values, twice.values)


def test_polarization_preserves_the_values(random_field, surface):
    polarized = polarize(random_field, surface)
    assert np.array_equal(np.sort(polarized.values), np.sort(random_field.values))
    half = random_field.size // 2
    side = surface.side_values(random_field.points[:half])
    plus = side > ON_SURFACE_TOLERANCE
    assert np.all(polarized.values[:half][plus] >= polarized.values[half:][plus])


def test_origin_centred_field_is_fixed(rng):
    surfaces = [GeodesicHypersurface.random(3, rng) for _ in range(5)]
    assert all(radial_fixed_point_check(radial_function(gaussian), surfaces, n_pairs=200, radius=1.5, rng=rng))


def test_fixed_point_check_needs_the_origin_off_the_surface(rng):
    through_origin = GeodesicHypersurface(BallPoint.origin(3), (0.0, 0.0, 1.0))
    with pytest.raises(DomainError):
        radial_fixed_point_check(radial_function(gaussian), [through_origin], n_pairs=10, radius=1.0, rng=rng)


def test_mirror_centred_field_polarizes_to_its_reflection(surface, rng):
    mirror = reflect(surface, BallPoint.origin(3))
    field = sample_pair_closed(surface, 300, 1.5, rng, radial_function(gaussian, mirror))
    assert np.array_equal(polarize(field, surface).values, reflected_values(field, surface))


def test_polarized_field_has_zero_gap(random_field, surface):
    field = polarize(random_field, surface)
    estimate = polarization_gap(field, surface, SPEC, 2.0)
    assert estimate.gap == 0.0
    assert estimate.sigmas == 0.0
    report = polarization_report(field, surface, SPEC, 2.0)
    assert report.verdict is GapVerdict.EQUAL
    assert report.equality is Equality.FIXED
    assert report.as_dict()["verdict"] == "equal"


def test_asymmetric_field_gains(rng):
    estimate = asymmetric_field_gap(rng, n_pairs=600)
    assert estimate.gap > 0.0
    assert estimate.sigmas > 3.0
    assert estimate.near_field > 0.0


def test_polarization_input_checks(random_field, surface, rng):
    loose = SampledField(sample_ball(3, 1.0, 10, rng), np.ones(10), 1.0)
    with pytest.raises(DomainError):
        polarize(loose, surface)
    with pytest.raises(DomainError):
        polarization_gap(random_field.with_values(-random_field.values), surface, SPEC, 2.0)
    with pytest.raises(DomainError):
        polarization_gap(random_field, surface, KernelSpec(dim=4, alpha=2.0), 2.0)


def test_field_rejects_points_outside_the_ball():
    with pytest.raises(DomainError):
        SampledField(np.array([[1.0, 0.0, 0.0]]), np.array([1.0]), 1.0)
    with pytest.raises(DomainError):
        SampledField(np.zeros((2, 3)), np.array([1.0]), 1.0)


def test_rearrangement_reorders_cells():
    result = schwarz_rearrange([1.0, 3.0, 2.0], [1.0, 1.0, 2.0])
    assert np.array_equal(result.values, [3.0, 2.0, 1.0])
    assert np.array_equal(result.weights, [1.0, 2.0, 1.0])
    assert np.array_equal(result.outer_volume, [1.0, 3.0, 4.0])


@pytest.mark.parametrize("q", [1.0, 2.0, 5.0])
def test_rearrangement_preserves_norms(rng, q):
    values = rng.uniform(size=200)
    weights = rng.uniform(0.1, 1.0, size=200)
    result = schwarz_rearrange(values, weights)
    assert np.sum(result.weights * result.values**q) == pytest.approx(np.sum(weights * values**q), rel=1e-12)
    assert np.all(np.diff(result.values) <= 0.0)


def test_rearrangement_input_checks():
    with pytest.raises(DomainError):
        schwarz_rearrange([1.0, 2.0], [1.0])
    with pytest.raises(DomainError):
        schwarz_rearrange([1.0, 2.0], [1.0, 0.0])


@pytest.mark.parametrize("center", [(0.0, 0.0, 0.0), (0.25, -0.1, 0.05)])
def test_symmetry_check_finds_the_centre(rng, center):
    points = sample_ball(3, 1.5, 2000, rng)
    field = SampledField(points, radial_function(gaussian, BallPoint.of(center))(points), 1.0)
    check = radial_symmetry_check(field)
    assert not check.degenerate
    assert np.allclose(check.center.array, center, atol=2e-2)
    assert check.deviation < 1e-2


def test_symmetry_check_flags_random_and_constant_fields(rng):
    points = sample_ball(3, 1.5, 1000, rng)
    noisy = radial_symmetry_check(SampledField(points, rng.uniform(size=1000), 1.0))
    assert noisy.deviation > 0.1
    flat = radial_symmetry_check(SampledField(points, np.full(1000, 2.0), 1.0))
    assert flat.degenerate and flat.deviation == 0.0


def test_field_csv_text(random_field):
    text = field_csv_text(random_field, "hyperchoq test")
    lines = text.splitlines()
    assert lines[:2] == ["# hyperchoq test", "x1,x2,x3,value"]
    assert len(lines) == random_field.size + 2
