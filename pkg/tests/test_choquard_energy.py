import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.choquard_energy import (
    ExponentClass,
    ProblemSpec,
    critical_exponent,
    el_residual,
    energy_lower_bound,
    energy_quotient,
    hls_constant,
    hls_target_exponent,
    lambda_form,
    lower_exponent,
    nehari_defect,
    nehari_project,
    nehari_scale,
    nonlocal_term,
    odd_power,
    power_profile,
    residual_component,
    sharp_hls_constant,
    validate_exponents,
    weak_residual,
)
from src.errors import DomainError, NumericError
from src.radial_field import RadialProfile, inner


@pytest.mark.parametrize(
    "dim, alpha, p, expected",
    [
        (3, 2.0, 2.0, ExponentClass.SUBCRITICAL),
        (3, 2.0, 5.0, ExponentClass.CRITICAL),
        (3, 2.0, 5.0 / 3.0, ExponentClass.INVALID),
        (3, 2.0, 1.5, ExponentClass.INVALID),
        (3, 2.0, 6.0, ExponentClass.INVALID),
        (4, 1.0, 2.0, ExponentClass.SUBCRITICAL),
        (2, 1.0, 2.0, ExponentClass.INVALID),
        (3, 3.0, 2.0, ExponentClass.INVALID),
    ],
)
def test_exponent_classes(dim, alpha, p, expected):
    assert validate_exponents(dim, alpha, p) is expected


def test_exponent_endpoints():
    assert lower_exponent(3, 2.0) == pytest.approx(5.0 / 3.0)
    assert critical_exponent(3, 2.0) == pytest.approx(5.0)
    assert ProblemSpec(dim=3, alpha=2.0, p=2.0).sobolev_exponent == pytest.approx(2.4)


def test_problem_spec_names_the_critical_exponent():
    with pytest.raises(ValidationError, match="critical"):
        ProblemSpec(dim=3, alpha=2.0, p=5.0)
    with pytest.raises(ValidationError, match="spectrum"):
        ProblemSpec(dim=3, alpha=2.0, p=2.0, lam=1.0)
    with pytest.raises(ValidationError):
        ProblemSpec(dim=3, alpha=3.5, p=2.0)


def test_quotient_is_scale_invariant(problem, bump):
    base = energy_quotient(bump, problem)
    assert base > 0.0
    assert energy_quotient(bump.scaled(3.0), problem) == pytest.approx(base, rel=1e-12)
    assert energy_quotient(bump.scaled(-0.1), problem) == pytest.approx(base, rel=1e-12)


def test_nonlocal_term_is_homogeneous(problem, bump):
    value = nonlocal_term(bump, problem)
    assert value > 0.0
    assert nonlocal_term(bump.scaled(2.0), problem) == pytest.approx(2.0 ** (2 * problem.p) * value, rel=1e-12)


def test_nehari_projection(problem, bump):
    projected = nehari_project(bump, problem)
    assert nehari_defect(projected, problem) < 1e-12
    assert nehari_scale(projected, problem) == pytest.approx(1.0, rel=1e-12)
    # On the Nehari manifold the residual tested against u itself vanishes.
    assert abs(residual_component(projected, projected, problem)) < 1e-10
    form = lambda_form(projected, problem.lam)
    assert energy_quotient(projected, problem) == pytest.approx(form ** ((problem.p - 1.0) / problem.p), rel=1e-10)


def test_zero_profile_is_rejected(problem, small_grid):
    zero = RadialProfile(small_grid, np.zeros(small_grid.size))
    with pytest.raises(DomainError):
        energy_quotient(zero, problem)
    with pytest.raises(DomainError):
        nehari_scale(zero, problem)
    with pytest.raises(DomainError):
        el_residual(zero, problem)


def test_dimension_mismatch(bump):
    with pytest.raises(DomainError):
        nonlocal_term(bump, ProblemSpec(dim=4, alpha=2.0, p=2.0))


def test_weak_residual_shape(problem, bump):
    residual = weak_residual(bump, problem)
    assert residual.shape == (bump.grid.size,)
    assert residual[-1] == 0.0
    assert el_residual(nehari_project(bump, problem), problem) > 1e-3


def test_lambda_form_shift(bump):
    assert lambda_form(bump, 0.5) == pytest.approx(lambda_form(bump, 0.0) - 0.5 * inner(bump, bump), rel=1e-12)


def test_power_helpers():
    values = np.array([-2.0, 0.0, 3.0])
    assert np.allclose(power_profile(values, 2.5), np.abs(values) ** 2.5)
    assert np.allclose(odd_power(values, 1.0), values)
    with pytest.raises(NumericError):
        power_profile(np.array([1e300]), 4.0)


def test_hls_constant_ranges():
    s = 2.0 * 3 / 5.0
    assert hls_constant(3, 2.0, s, 1.0) > 0.0
    assert hls_target_exponent(3, 2.0, s) == pytest.approx(6.0)
    with pytest.raises(DomainError):
        hls_constant(3, 2.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        hls_constant(3, 2.0, 1.5, 1.0)
    with pytest.raises(DomainError):
        hls_constant(3, 2.0, s, 0.0)


def test_hls_constant_grows_with_the_heat_constant():
    s = 1.2
    assert hls_constant(3, 2.0, s, 2.0) == pytest.approx(2.0 ** (2.0 / 3.0) * hls_constant(3, 2.0, s, 1.0), rel=1e-12)


def test_sharp_hls_constant():
    expected = math.pi**1.5 * (math.sqrt(math.pi) / 4.0) ** (-1.0 / 3.0)
    assert sharp_hls_constant(3, 2.0) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(DomainError):
        sharp_hls_constant(3, 3.0)


def test_energy_lower_bound_needs_positive_constant(problem):
    assert energy_lower_bound(problem, 1.0) > 0.0
    with pytest.raises(DomainError):
        energy_lower_bound(problem, 0.0)
