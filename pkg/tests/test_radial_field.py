import math

import numpy as np
import pytest
from scipy import integrate

from src.errors import DomainError
from src.geometry import distance_from_radii
from src.green_kernel import KernelSpec, green_kernel
from src.heat_kernel import sphere_area
from src.radial_field import (
    TABLE_TOLERANCE,
    RadialGrid,
    RadialProfile,
    grid_derivative,
    h1_lambda_norm,
    hyperbolic_hls_form,
    inner,
    inverse_frac_laplacian,
    lq_norm,
    profile_csv_text,
    rayleigh_quotient,
    read_profile_csv,
    resolvent_defect,
    sphere_average_kernel,
    table_reach,
    truncation_tail,
    volume,
)


def newton_average(r, s):
    return (math.exp(-abs(r - s)) - math.exp(-(r + s))) / (2.0 * math.sinh(r) * math.sinh(s))


def test_weights_integrate_the_volume():
    grid = RadialGrid.build(3, 5.0, 400)
    assert float(np.sum(grid.weights)) == pytest.approx(volume(3, 5.0), rel=1e-3)
    assert volume(3, 1.0) == pytest.approx(math.pi * (math.sinh(2.0) - 2.0), rel=1e-10)


def test_grid_is_increasing_and_ends_at_r_max(small_grid):
    assert np.all(np.diff(small_grid.nodes) > 0.0)
    assert small_grid.nodes[-1] == pytest.approx(15.0)
    assert small_grid.nodes[0] > 0.0


def test_stiffness_matrix_matches_the_quadratic_form(small_grid, bump):
    matrix = small_grid.stiffness_matrix()
    values = small_grid.dirichlet(bump.values)
    assert float(values @ (matrix @ values)) == pytest.approx(small_grid.stiffness_form(values), rel=1e-12)
    assert np.allclose(matrix @ values, small_grid.stiffness_apply(values), rtol=1e-12, atol=1e-14)


def test_shifted_solve_inverts_the_operator(small_grid, rng):
    rhs = small_grid.dirichlet(rng.normal(size=small_grid.size))
    x = small_grid.solve_shifted(rhs, 0.5)
    back = small_grid.stiffness_apply(x) - 0.5 * small_grid.weights * x
    assert np.allclose(back[:-1], rhs[:-1], rtol=1e-8, atol=1e-10)
    assert x[-1] == 0.0


def test_lq_norm_is_homogeneous_and_checks_q(bump):
    assert lq_norm(bump.scaled(-3.0), 3.0) == pytest.approx(3.0 * lq_norm(bump, 3.0), rel=1e-14)
    assert lq_norm(bump, 2.0) ** 2 == pytest.approx(inner(bump, bump), rel=1e-14)
    with pytest.raises(DomainError):
        lq_norm(bump, 0.5)


def test_lambda_norm_rejects_the_spectral_bottom(bump):
    assert h1_lambda_norm(bump, 0.5) < h1_lambda_norm(bump, 0.0)
    with pytest.raises(DomainError):
        h1_lambda_norm(bump, 1.0)


def test_rayleigh_quotient_stays_above_the_spectral_bottom(rng):
    grid = RadialGrid.build(3, 40.0, 2000)
    for rate in (1.05, 1.5, 3.0):
        profile = RadialProfile.from_function(grid, lambda rho: np.exp(-rate * rho) * (40.0 - rho) / 40.0)
        assert rayleigh_quotient(profile) >= 0.99
    near = RadialProfile.from_function(grid, lambda rho: np.exp(-0.95 * rho) * (40.0 - rho) / 40.0)
    assert rayleigh_quotient(near) < 1.05
    with pytest.raises(DomainError):
        rayleigh_quotient(RadialProfile(grid, np.zeros(grid.size)))


def test_grid_derivative_of_an_exponential():
    grid = RadialGrid.build(3, 10.0, 800)
    profile = RadialProfile.from_function(grid, lambda rho: np.exp(-rho))
    assert np.allclose(grid_derivative(profile), -profile.values, rtol=1e-3, atol=1e-6)


@pytest.mark.parametrize("r, s", [(0.5, 1.0), (1.0, 3.0), (2.0, 2.01), (0.05, 4.0)])
def test_sphere_average_matches_newtonian_closed_form(newton_spec, r, s):
    assert sphere_average_kernel(newton_spec, r, s) == pytest.approx(newton_average(r, s), rel=1e-6)


def test_sphere_average_on_the_diagonal(newton_spec):
    r = 1.3
    expected = (1.0 - math.exp(-2.0 * r)) / (2.0 * math.sinh(r) ** 2)
    assert sphere_average_kernel(newton_spec, r, r) == pytest.approx(expected, rel=1e-6)
    assert sphere_average_kernel(KernelSpec(dim=3, alpha=0.8), r, r) == math.inf


@pytest.mark.parametrize("r, s", [(0.5, 0.9), (1.0, 1.05), (0.2, 3.0), (2.0, 6.0)])
def test_even_dimension_sphere_average_matches_angular_quadrature(r, s):
    spec = KernelSpec(dim=4, alpha=2.0)
    table = green_kernel(spec).table(table_reach(r + s), TABLE_TOLERANCE)
    value, _ = integrate.quad(
        lambda theta: float(table(distance_from_radii(r, s, theta))) * math.sin(theta) ** 2,
        0.0,
        math.pi,
        limit=400,
        epsabs=0.0,
        epsrel=1e-11,
    )
    assert sphere_average_kernel(spec, r, s) == pytest.approx(sphere_area(2) * value, rel=1e-5)


def test_table_reach_rounds_up_to_shared_lengths():
    assert table_reach(0.5) == 10.0
    assert table_reach(9.0) == 10.0
    assert table_reach(80.0) == 90.0


def test_convolution_matches_direct_quadrature(newton_spec):
    grid = RadialGrid.build(3, 12.0, 300)
    u = RadialProfile.from_function(grid, lambda rho: np.exp(-rho * rho))
    v = inverse_frac_laplacian(u, newton_spec)
    for index in np.searchsorted(grid.nodes, [0.2, 0.8, 1.5, 3.0]):
        r = float(grid.nodes[index])
        value, _ = integrate.quad(
            lambda s: newton_average(r, s) * math.exp(-s * s) * math.sinh(s) ** 2,
            0.0,
            12.0,
            points=[r],
            limit=200,
        )
        assert v.values[index] == pytest.approx(value, rel=2e-3)


def test_resolvent_identity_in_weak_form(newton_spec):
    grid = RadialGrid.build(3, 12.0, 400)
    u = RadialProfile.from_function(grid, lambda rho: np.exp(-rho * rho))
    assert resolvent_defect(u, newton_spec) < 5e-2


def test_hls_form_is_symmetric(small_grid, rng):
    f = RadialProfile.from_function(small_grid, lambda rho: np.exp(-rho * rho))
    g = RadialProfile.from_function(small_grid, lambda rho: np.exp(-((rho - 1.0) ** 2)))
    assert hyperbolic_hls_form(f, g, 1.5) == pytest.approx(hyperbolic_hls_form(g, f, 1.5), rel=1e-10)
    assert hyperbolic_hls_form(f, g, 1.5) > 0.0


def test_truncation_tail(small_grid, bump, newton_spec):
    tail = truncation_tail(bump, newton_spec)
    assert tail is not None and 0.0 <= tail < 1e-20
    assert truncation_tail(bump, KernelSpec(dim=3, alpha=0.5)) is None


def test_profile_length_is_checked(small_grid):
    with pytest.raises(DomainError):
        RadialProfile(small_grid, np.ones(3))
    with pytest.raises(DomainError):
        RadialProfile(small_grid, np.full(small_grid.size, np.nan))


def test_csv_text_reads_back(tmp_path, bump):
    path = tmp_path / "profile.csv"
    path.write_text(profile_csv_text(bump.grid.nodes, bump.values, "hyperchoq test"), encoding="utf-8")
    assert path.read_text(encoding="utf-8").startswith("# hyperchoq test\nrho,value\n")
    rho, values = read_profile_csv(path)
    assert np.array_equal(rho, bump.grid.nodes)
    assert np.array_equal(values, bump.values)


def test_csv_without_header_is_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(DomainError):
        read_profile_csv(path)
