import logging
import math
from fractions import Fraction

import numpy as np
import pytest

from src.errors import DomainError, NumericError
from src.heat_kernel import (
    OddKernelPolynomial,
    apply_radial_operator,
    diagonal_constant,
    heat_diag,
    heat_envelope,
    heat_eval,
    heat_kernel,
    heat_radial_derivative,
    odd_kernel_polynomial,
    semigroup_defect,
    sphere_area,
)
from src.radial_field import RadialGrid


def closed_form_3(t, rho):
    rho = np.asarray(rho, dtype=float)
    ratio = np.where(rho > 0.0, rho / np.sinh(np.where(rho > 0.0, rho, 1.0)), 1.0)
    return (4.0 * math.pi * t) ** -1.5 * ratio * np.exp(-t - rho**2 / (4.0 * t))


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_odd_evaluator_matches_three_dimensional_closed_form(t):
    rho = np.linspace(0.0, 10.0, 100)
    values = heat_kernel(3).profile(t, rho)
    expected = closed_form_3(t, rho)
    assert np.max(np.abs(values - expected) / expected) < 1e-10


def test_series_branch_is_continuous_at_its_radius():
    kernel = heat_kernel(5)
    rho = np.array([1e-2 * (1 - 1e-9), 1e-2 * (1 + 1e-9)])
    values = kernel.profile(0.5, rho)
    assert values[0] == pytest.approx(values[1], rel=1e-8)


def test_first_operator_image():
    image = apply_radial_operator({(0, 0, 0, 0): Fraction(1)})
    assert image == {(1, 1, 0, 1): Fraction(1, 2)}
    assert OddKernelPolynomial.build(0).terms == {(0, 0, 0, 0): Fraction(1)}
    assert odd_kernel_polynomial(2).dimension == 5


def test_diagonal_value_three_dimensions():
    t = 0.7
    assert heat_diag(3, t) == pytest.approx((4.0 * math.pi * t) ** -1.5 * math.exp(-t), rel=1e-12)


def test_kernel_is_positive_and_decreasing_in_rho():
    rho = np.linspace(0.0, 8.0, 40)
    for dim in (3, 5, 7):
        values = heat_kernel(dim).profile(1.0, rho)
        assert np.all(values > 0.0)
        assert np.all(np.diff(values) < 0.0)


def test_radial_derivative_by_dimension_shift():
    t, rho, h = 0.8, 1.3, 1e-5
    exact = float(heat_radial_derivative(3, t, rho))
    difference = (heat_eval(3, t, rho + h) - heat_eval(3, t, rho - h)) / (2.0 * h)
    assert exact == pytest.approx(difference, rel=1e-7)
    with pytest.raises(DomainError):
        heat_radial_derivative(4, t, rho)


def test_even_dimension_has_the_euclidean_small_time_limit():
    t = 1e-3
    value = heat_diag(2, t) * 4.0 * math.pi * t
    assert value == pytest.approx(1.0, rel=1e-2)


def test_even_dimension_is_positive_and_decreasing():
    values = heat_kernel(4).profile(0.5, np.array([0.0, 0.5, 1.0, 2.0, 4.0]))
    assert np.all(values > 0.0)
    assert np.all(np.diff(values) < 0.0)


def test_even_dimension_near_the_range_edge_is_positive():
    value = heat_eval(2, 650.0, 650.0)
    assert value > 0.0
    assert 1e-4 < value / heat_envelope(2, 650.0, 650.0) < 1e4


def test_even_dimension_underflow_beyond_range_is_logged(caplog):
    with caplog.at_level(logging.WARNING, logger="hyperchoq.heat_kernel"):
        assert heat_eval(4, 0.5, 800.0) == 0.0
        assert heat_eval(4, 500.0, 800.0) == 0.0
    assert "underflows" in caplog.text


def test_even_dimension_beyond_range_without_underflow_raises():
    with pytest.raises(NumericError):
        heat_eval(2, 705.0, 705.0)


def test_envelope_brackets_the_kernel():
    rho = np.linspace(0.0, 6.0, 13)
    for t in (0.2, 2.0):
        ratio = heat_kernel(3).profile(t, rho) / heat_envelope(3, t, rho)
        assert np.all(ratio > 0.05)
        assert np.all(ratio < 20.0)


def test_semigroup_identity_in_three_dimensions():
    grid = RadialGrid.build(3, 30.0, 1500)
    assert semigroup_defect(3, 1.0, grid) < 1e-6


def test_diagonal_constant_dominates_small_time_limit():
    constant = diagonal_constant(3)
    assert constant >= (4.0 * math.pi) ** -1.5
    for t in (0.01, 1.0, 50.0):
        assert heat_diag(3, t) <= constant * t**-1.5 * (1 + 1e-12)


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2.0 * math.pi)
    assert sphere_area(2) == pytest.approx(4.0 * math.pi)


@pytest.mark.parametrize("t", [0.0, -1.0, float("nan")])
def test_non_positive_times_are_rejected(t):
    with pytest.raises(DomainError):
        heat_eval(3, t, 1.0)


def test_negative_distance_is_rejected():
    with pytest.raises(DomainError):
        heat_eval(3, 1.0, -0.5)
