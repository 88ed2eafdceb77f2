"""Property suites behind ``hyperchoq verify``."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from src.choquard_energy import hls_constant, hls_target_exponent, sharp_hls_constant
from src.errors import HyperChoqError
from src.geometry import BallPoint, GeodesicHypersurface
from src.green_kernel import KernelSpec, green_derivative, green_kernel
from src.heat_kernel import DEFAULT_OPTIONS, HeatEvalOptions, diagonal_constant, semigroup_defect
from src.radial_field import (
    RadialGrid,
    RadialProfile,
    hyperbolic_hls_form,
    inverse_frac_laplacian,
    lq_norm,
    rayleigh_quotient,
)
from src.symmetry import (
    polarization_gap,
    polarize,
    radial_function,
    sample_pair_closed,
)

LOGGER = logging.getLogger("hyperchoq.verification")

SUITES = ("hls", "heat-semigroup", "monotone", "polarization", "spectrum")


@dataclass(slots=True)
class CheckRecord:
    name: str
    passed: bool
    margin: float | None = None
    detail: str | None = None


class CheckSuite:
    """Recorder for named pass/fail checks with a measured margin."""

    def __init__(self) -> None:
        self._records: list[CheckRecord] = []

    @property
    def records(self) -> list[CheckRecord]:
        return list(self._records)

    def expect(self, name: str, condition: bool, margin: float | None = None, detail: str | None = None) -> None:
        self._records.append(CheckRecord(name, bool(condition), margin, detail))
        if not condition:
            LOGGER.warning("Check %s failed (margin %s): %s", name, margin, detail)

    def expect_below(self, name: str, value: float, bound: float) -> None:
        self.expect(name, value < bound, bound - value, f"{value:.6g} < {bound:.6g}")

    def error(self, name: str, exc: Exception) -> None:
        self._records.append(CheckRecord(name, False, None, f"{type(exc).__name__}: {exc}"))
        LOGGER.error("Check %s raised %s", name, exc)

    def extend(self, other: "CheckSuite") -> None:
        self._records.extend(other._records)

    @property
    def passed(self) -> bool:
        return all(record.passed for record in self._records)

    def as_dict(self) -> dict[str, object]:
        """Flat mapping ``<check>.passed`` / ``.margin`` / ``.detail``."""
        out: dict[str, object] = {"passed": self.passed, "checks": len(self._records)}
        for record in self._records:
            out[f"{record.name}.passed"] = record.passed
            out[f"{record.name}.margin"] = record.margin
            if record.detail:
                out[f"{record.name}.detail"] = record.detail
        return out


def random_profile(grid: RadialGrid, rng: np.random.Generator, bumps: int | None = None) -> RadialProfile:
    """Nonnegative sum of one to three Gaussian shells."""
    rho = grid.nodes
    values = np.zeros(grid.size)
    for _ in range(bumps or int(rng.integers(1, 4))):
        amplitude = rng.uniform(0.2, 1.0)
        center = rng.uniform(0.0, 3.0)
        width = rng.uniform(0.3, 2.0)
        values += amplitude * np.exp(-(((rho - center) / width) ** 2))
    return RadialProfile(grid, grid.dirichlet(values))


# -- Suites ------------------------------------------------------------------------------


def spectrum_suite(
    rng: np.random.Generator, trials: int = 50, *, dim: int = 3, nodes: int = 2000, r_max: float = 40.0
) -> CheckSuite:
    """Rayleigh quotients stay above (N-1)^2/4 up to 1% and exponentials approach it."""
    suite = CheckSuite()
    grid = RadialGrid.build(dim, r_max, nodes)
    bottom = grid.spectral_bottom
    floor = bottom * (1.0 - 0.01)
    worst = math.inf
    for _ in range(trials):
        if rng.uniform() < 0.5:
            profile = random_profile(grid, rng)
        else:
            rate = (dim - 1) / 2.0 + rng.uniform(0.05, 2.0)
            profile = RadialProfile.from_function(grid, lambda rho: np.exp(-rate * rho) * (r_max - rho) / r_max)
        worst = min(worst, rayleigh_quotient(profile))
    suite.expect("spectrum.rayleigh_floor", worst >= floor, worst - floor, f"min quotient {worst:.6g}, bottom {bottom:g}")

    # Decay slightly slower than e^{-(N-1) rho / 2}; the cutoff supplies the Dirichlet condition.
    rate = (dim - 1) / 2.0 - 0.05
    trial = RadialProfile.from_function(grid, lambda rho: np.exp(-rate * rho) * (r_max - rho) / r_max)
    ratio = rayleigh_quotient(trial) / bottom - 1.0
    suite.expect_below("spectrum.exponential_approach", ratio, 0.05)
    return suite


def hls_suite(
    rng: np.random.Generator,
    trials: int = 100,
    *,
    dim: int = 3,
    alpha: float = 2.0,
    nodes: int = 400,
    r_max: float = 20.0,
    options: HeatEvalOptions = DEFAULT_OPTIONS,
) -> CheckSuite:
    """||k * f||_{Ns/(N-s alpha)} <= C~ ||f||_s at s = 2N/(N+alpha), plus the sharp display."""
    suite = CheckSuite()
    spec = KernelSpec(dim=dim, alpha=alpha)
    grid = RadialGrid.build(dim, r_max, nodes)
    s = 2.0 * dim / (dim + alpha)
    target = hls_target_exponent(dim, alpha, s)
    constant = hls_constant(dim, alpha, s, diagonal_constant(dim, options))
    sharp = sharp_hls_constant(dim, alpha)
    r = 2.0 * dim / (2.0 * dim - alpha)
    violations = 0
    sharp_violations = 0
    tightest = math.inf
    for _ in range(trials):
        f = random_profile(grid, rng)
        g = random_profile(grid, rng)
        ratio = lq_norm(inverse_frac_laplacian(f, spec, options), target) / (constant * lq_norm(f, s))
        tightest = min(tightest, 1.0 - ratio)
        violations += ratio > 1.0
        form = hyperbolic_hls_form(f, g, alpha)
        sharp_violations += form > sharp * lq_norm(f, r) * lq_norm(g, r)
    suite.expect("hls.bound", violations == 0, tightest, f"{violations} violations of C~ = {constant:.6g}")
    suite.expect("hls.sharp_display", sharp_violations == 0, None, f"{sharp_violations} violations")
    return suite


def heat_semigroup_suite(options: HeatEvalOptions = DEFAULT_OPTIONS) -> CheckSuite:
    """p_{2t}(0) against the L^2 norm of p_t for N = 3 and N = 4."""
    suite = CheckSuite()
    grid = RadialGrid.build(3, 60.0, 3000)
    for dim, bound in ((3, 1e-6), (4, 1e-4)):
        for t in (0.1, 1.0, 10.0):
            name = f"heat_semigroup.N{dim}.t{t:g}"
            try:
                suite.expect_below(name, semigroup_defect(dim, t, grid, options), bound)
            except HyperChoqError as exc:
                suite.error(name, exc)
    return suite


def monotone_suite(
    rng: np.random.Generator, trials: int = 20, options: HeatEvalOptions = DEFAULT_OPTIONS
) -> CheckSuite:
    """k' < 0 on sampled distances; the odd-N identity agrees with differences."""
    suite = CheckSuite()
    for dim, alpha in ((3, 1.5), (5, 2.0), (4, 1.0)):
        spec = KernelSpec(dim=dim, alpha=alpha)
        rho = np.sort(10.0 ** rng.uniform(-2.0, 1.0, size=trials))
        worst = max(green_derivative(spec, float(r), options) for r in rho)
        suite.expect(f"monotone.N{dim}.a{alpha:g}", worst < 0.0, -worst, f"max derivative {worst:.3e}")
        if dim % 2:
            kernel = green_kernel(spec, options)
            errors = []
            for r in rho[:: max(1, trials // 5)]:
                h = 1e-3 * float(r)
                difference = (kernel.evaluate(r + h) - kernel.evaluate(r - h)) / (2.0 * h)
                exact = kernel.derivative(float(r))
                errors.append(abs(difference - exact) / abs(exact))
            suite.expect_below(f"monotone.N{dim}.a{alpha:g}.identity", max(errors), 1e-4)
    return suite


def _bump(center: np.ndarray, width: float, height: float) -> Callable[[np.ndarray], np.ndarray]:
    point = BallPoint.of(center)
    return radial_function(lambda rho: height * np.exp(-((rho / width) ** 2)), point)


def asymmetric_field_gap(
    rng: np.random.Generator, n_pairs: int = 1000, options: HeatEvalOptions = DEFAULT_OPTIONS
):
    """Two bumps on opposite sides of {x1 = 0}; polarization pulls the far one closer."""
    surface = GeodesicHypersurface(BallPoint.origin(3), (1.0, 0.0, 0.0))
    near = _bump(np.array([0.3, 0.3, 0.0]), 0.5, 1.0)
    far = _bump(np.array([-0.3, -0.3, 0.0]), 0.5, 1.0)
    field = sample_pair_closed(surface, n_pairs, 1.2, rng, lambda x: near(x) + far(x))
    return polarization_gap(field, surface, KernelSpec(dim=3, alpha=2.0), 2.0, options)


def polarization_suite(
    rng: np.random.Generator,
    trials: int = 50,
    *,
    n_pairs: int = 400,
    p: float = 2.0,
    options: HeatEvalOptions = DEFAULT_OPTIONS,
) -> CheckSuite:
    """J(f^H) >= J(f) up to 3 sigma on random fields, a strict case and fixed points."""
    suite = CheckSuite()
    spec = KernelSpec(dim=3, alpha=2.0)
    worst = math.inf
    for _ in range(trials):
        surface = GeodesicHypersurface.random(3, rng)
        bumps = [
            _bump(rng.uniform(-0.5, 0.5, size=3) / math.sqrt(3.0), rng.uniform(0.3, 1.0), rng.uniform(0.2, 1.0))
            for _ in range(int(rng.integers(1, 4)))
        ]
        field = sample_pair_closed(surface, n_pairs, 1.5, rng, lambda x: sum(b(x) for b in bumps))
        estimate = polarization_gap(field, surface, spec, p, options)
        worst = min(worst, estimate.sigmas)
    suite.expect("polarization.no_violation", worst >= -3.0, worst + 3.0, f"min gap/stderr {worst:.3g}")

    strict = asymmetric_field_gap(rng, options=options)
    suite.expect("polarization.strict", strict.sigmas > 3.0, strict.sigmas - 3.0, f"gap {strict.gap:.4g} +- {strict.stderr:.2g}")

    surface = GeodesicHypersurface(BallPoint.of([0.2, 0.0, 0.0]), (1.0, 0.5, 0.0))
    radial = radial_function(lambda rho: np.exp(-rho * rho))
    field = polarize(sample_pair_closed(surface, n_pairs, 1.5, rng, radial), surface)
    fixed = polarization_gap(field, surface, spec, p, options)
    suite.expect("polarization.fixed_point", fixed.gap == 0.0, None, f"gap {fixed.gap!r}")
    return suite


def run_suite(name: str, seed: int = 0, trials: int | None = None) -> CheckSuite:
    """Run one named suite, or every suite for ``all``."""
    rng = np.random.default_rng(seed)
    if name == "all":
        combined = CheckSuite()
        for suite_name in SUITES:
            combined.extend(run_suite(suite_name, seed, trials))
        return combined
    LOGGER.info("Running suite %s (seed %s).", name, seed)
    if name == "spectrum":
        return spectrum_suite(rng, trials or 50)
    if name == "hls":
        return hls_suite(rng, trials or 100)
    if name == "heat-semigroup":
        return heat_semigroup_suite()
    if name == "monotone":
        return monotone_suite(rng, trials or 20)
    if name == "polarization":
        return polarization_suite(rng, trials or 50)
    raise ValueError(f"Unknown suite '{name}'.")
