import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.errors import DomainError, UnsupportedError
from src.green_kernel import (
    KernelSpec,
    green_closed_form_3_2,
    green_derivative,
    green_eval,
    green_kernel,
    green_tail_bound,
    riesz_constant,
)


@pytest.mark.parametrize("rho", [0.01, 0.1, 0.5, 1.0, 3.0, 10.0])
def test_newtonian_kernel_matches_closed_form(newton_spec, rho):
    assert green_eval(newton_spec, rho) == pytest.approx(green_closed_form_3_2(rho), rel=1e-6)


@pytest.mark.parametrize("dim, alpha", [(3, 1.0), (3, 2.0), (5, 2.0)])
def test_small_distance_limit_is_the_riesz_potential(dim, alpha):
    rho = 1e-3
    spec = KernelSpec(dim=dim, alpha=alpha)
    ratio = green_eval(spec, rho) * rho ** (dim - alpha) / riesz_constant(dim, alpha)
    assert 0.98 <= ratio <= 1.02


@pytest.mark.parametrize("rho", [0.05, 0.7, 4.0])
def test_derivative_matches_closed_form(newton_spec, rho):
    expected = -1.0 / (4.0 * math.pi * math.sinh(rho) ** 2)
    assert green_derivative(newton_spec, rho) == pytest.approx(expected, rel=1e-6)


def test_odd_dimension_derivative_is_negative():
    spec = KernelSpec(dim=3, alpha=1.5)
    for rho in (0.02, 0.3, 2.0, 9.0):
        assert green_derivative(spec, rho) < 0.0


def test_split_integral_adds_up(newton_spec):
    split = green_kernel(newton_spec).evaluate_split(0.8)
    assert split.lower + split.upper == pytest.approx(split.value, rel=1e-14)
    assert split.relative_error < 1e-10


@pytest.mark.parametrize("rho", [1e-6, 1e-3, 0.5, 30.0])
def test_t_integral_converges_at_the_default_tolerance(newton_spec, rho):
    split = green_kernel(newton_spec).evaluate_split(rho)
    assert split.relative_error <= 1e-10
    assert split.value == pytest.approx(green_closed_form_3_2(rho), rel=1e-9)


def test_table_interpolates_the_kernel(newton_spec):
    table = green_kernel(newton_spec).table(20.0, 1e-9)
    rho = np.array([1e-4, 3e-3, 0.37, 2.2, 7.9, 15.5])
    assert np.allclose(table(rho), green_closed_form_3_2(rho), rtol=1e-6, atol=0.0)


def test_tail_bound_dominates_the_kernel(newton_spec):
    for rho0 in (1.0, 3.0):
        bound = green_tail_bound(newton_spec, rho0)
        for rho in (rho0, rho0 + 0.5, rho0 + 5.0):
            assert green_eval(newton_spec, rho) <= bound


def test_tail_constant_is_taken_at_rho_one(newton_spec):
    expected = 1.05 * math.exp(-1.0) / (4.0 * math.pi)
    assert green_kernel(newton_spec).tail_constant() == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("rho0", [1.0, 2.0, 3.0])
def test_tail_bound_stays_within_ten_of_the_exact_tail(newton_spec, rho0):
    ratio = green_tail_bound(newton_spec, rho0) / green_closed_form_3_2(rho0)
    assert 1.0 <= ratio <= 10.0
    assert ratio == pytest.approx(1.05 * math.exp(rho0 - 1.0), rel=1e-8)


def test_tail_bound_is_unsupported_below_alpha_one():
    with pytest.raises(UnsupportedError):
        green_tail_bound(KernelSpec(dim=3, alpha=0.5), 2.0)
    with pytest.raises(DomainError):
        green_tail_bound(KernelSpec(dim=3, alpha=2.0), 0.5)


@pytest.mark.parametrize("rho", [0.0, -1.0])
def test_non_positive_distance_is_rejected(newton_spec, rho):
    with pytest.raises(DomainError):
        green_eval(newton_spec, rho)


@pytest.mark.parametrize("alpha", [0.0, 3.0, 5.0])
def test_alpha_outside_range_is_rejected(alpha):
    with pytest.raises(ValidationError):
        KernelSpec(dim=3, alpha=alpha)
