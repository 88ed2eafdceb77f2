"""Ground states of the Choquard problem by descent on the energy quotient."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.choquard_energy import (
    ExponentClass,
    ProblemSpec,
    el_residual,
    nehari_defect,
    odd_power,
    operator_for,
    power_profile,
    validate_exponents,
)
from src.errors import ConvergenceError, DomainError
from src.heat_kernel import DEFAULT_OPTIONS, HeatEvalOptions
from src.radial_field import (
    GridParameters,
    RadialGrid,
    RadialProfile,
    lq_norm,
    truncation_tail,
)

LOGGER = logging.getLogger("hyperchoq.solver")

ARMIJO_C1 = 1e-4
_MAX_BACKTRACKS = 40
_MONOTONE_FLOOR = 1e-12


class SeedProfile(str, Enum):
    GAUSSIAN_BUMP = "gaussian_bump"
    EXPONENTIAL = "exponential"
    USER_SUPPLIED = "user_supplied"


class SolverConfig(BaseModel):
    """Problem, grid and descent parameters of one ground-state solve."""

    problem: ProblemSpec
    grid: GridParameters
    max_iters: int = Field(500, ge=1, description="Maximum descent iterations.")
    grad_tol: float = Field(1e-6, gt=0.0, description="Relative gradient tolerance.")
    step0: float = Field(1.0, gt=0.0, description="Initial step of each line search.")
    backtrack_factor: float = Field(0.5, gt=0.0, lt=1.0, description="Step reduction per backtrack.")
    seed_profile: SeedProfile = SeedProfile.GAUSSIAN_BUMP
    seed_rho: Optional[tuple[float, ...]] = Field(None, description="Radii of a user-supplied seed.")
    seed_values: Optional[tuple[float, ...]] = Field(None, description="Values of a user-supplied seed.")
    options: HeatEvalOptions = DEFAULT_OPTIONS

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _check_consistency(self) -> "SolverConfig":
        if self.grid.dim != self.problem.dim:
            raise ValueError(f"Grid dimension {self.grid.dim} differs from N={self.problem.dim}.")
        if self.seed_profile is SeedProfile.USER_SUPPLIED:
            if not self.seed_rho or not self.seed_values or len(self.seed_rho) != len(self.seed_values):
                raise ValueError("A user-supplied seed needs rho and value samples of equal length.")
        return self


@dataclass(slots=True)
class GroundStateReport:
    """Nehari-normalised minimiser and its diagnostics."""

    profile: RadialProfile
    zeta: float
    nehari_defect: float
    el_residual: float
    iterations: int
    monotone: bool
    tail_mass: float | None
    decay_slope: float
    decay_in_window: bool
    positive_bulk: bool
    converged: bool
    gradient_norm: float
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.converged and self.monotone and self.positive_bulk and self.nehari_defect < 1e-10

    def as_dict(self) -> dict[str, object]:
        return {
            "zeta": self.zeta,
            "nehari_defect": self.nehari_defect,
            "el_residual": self.el_residual,
            "iterations": self.iterations,
            "monotone": self.monotone,
            "tail_mass": self.tail_mass,
            "decay_slope": self.decay_slope,
            "decay_in_window": self.decay_in_window,
            "positive_bulk": self.positive_bulk,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
        }


# -- Quotient model -----------------------------------------------------------------


@dataclass(slots=True)
class _Evaluation:
    values: np.ndarray
    form: float
    nonlocal_value: float
    potential: np.ndarray
    p: float

    @property
    def quotient(self) -> float:
        return self.form / self.nonlocal_value ** (1.0 / self.p)


class QuotientModel:
    """I(u) = ||u||_lambda^2 / J(u)^{1/p} with J(u) = <C |u|^p, |u|^p>.

    ``potential`` maps g = |u|^p to C g. The Choquard quotient uses the Green
    convolution; the identity map turns I into the Poincare-Sobolev quotient
    with q = 2p.
    """

    def __init__(
        self,
        grid: RadialGrid,
        p: float,
        lam: float,
        potential: Callable[[np.ndarray], np.ndarray],
    ) -> None:
        if not lam < grid.spectral_bottom:
            raise DomainError(
                f"lambda={lam:g} must be below the bottom of the spectrum {grid.spectral_bottom:g}."
            )
        self.grid = grid
        self.p = float(p)
        self.lam = float(lam)
        self.potential = potential

    def evaluate(self, values: np.ndarray) -> _Evaluation:
        grid = self.grid
        u = grid.dirichlet(values)
        if not np.any(u):
            raise DomainError("The energy quotient is undefined for the zero profile.")
        form = grid.stiffness_form(u) - self.lam * float(np.sum(grid.weights * u * u))
        g = power_profile(u, self.p)
        potential = self.potential(g)
        nonlocal_value = float(np.sum(grid.weights * potential * g))
        if not nonlocal_value > 0.0:
            raise DomainError("The nonlocal term vanishes; the energy quotient is undefined.")
        return _Evaluation(u, form, nonlocal_value, potential, self.p)

    def source(self, state: _Evaluation) -> np.ndarray:
        """Dual vector M (C g) |u|^{p-2} u."""
        out = self.grid.weights * state.potential * odd_power(state.values, self.p - 1.0)
        out[-1] = 0.0
        return out

    def dual_gradient(self, state: _Evaluation) -> np.ndarray:
        """dI = (2 / J^{1/p}) [A u - (Q/J) M (C g) |u|^{p-2} u]."""
        grid = self.grid
        linear = grid.stiffness_apply(state.values) - self.lam * grid.weights * state.values
        ratio = state.form / state.nonlocal_value
        out = 2.0 / state.nonlocal_value ** (1.0 / self.p) * (linear - ratio * self.source(state))
        out[-1] = 0.0
        return out

    def nehari_scale(self, state: _Evaluation) -> float:
        return (state.form / state.nonlocal_value) ** (1.0 / (2.0 * self.p - 2.0))


def _choquard_model(grid: RadialGrid, spec: ProblemSpec, options: HeatEvalOptions) -> QuotientModel:
    blank = RadialProfile(grid, np.zeros(grid.size))
    operator = operator_for(blank, spec, options)
    return QuotientModel(grid, spec.p, spec.lam, operator.apply)


def quotient_gradient(
    u: RadialProfile, spec: ProblemSpec, options: HeatEvalOptions = DEFAULT_OPTIONS
) -> RadialProfile:
    """Gradient of I in the grid inner product: <grad I, phi>_M = dI(u)[phi]."""
    model = _choquard_model(u.grid, spec, options)
    dual = model.dual_gradient(model.evaluate(u.values))
    return RadialProfile(u.grid, dual / u.grid.weights)


# -- Descent ----------------------------------------------------------------------


@dataclass(slots=True)
class DescentResult:
    values: np.ndarray
    quotient: float
    gradient_norm: float
    iterations: int
    converged: bool
    history: list[float]


def _relative_gradient(model: QuotientModel, state: _Evaluation, dual: np.ndarray) -> float:
    sobolev = model.grid.solve_shifted(dual, model.lam)
    dual_norm = math.sqrt(max(float(dual @ sobolev), 0.0))
    return dual_norm * math.sqrt(max(state.form, 0.0)) / state.quotient


def descend(
    model: QuotientModel,
    seed: np.ndarray,
    *,
    max_iters: int,
    grad_tol: float,
    step0: float = 1.0,
    backtrack_factor: float = 0.5,
) -> DescentResult:
    """Armijo descent along the ||.||_lambda-Sobolev gradient, clamped to u >= 0.

    The search direction -[u - (Q/J) A^{-1} M (C g) u^{p-1}] equals
    -(J^{1/p}/2) A^{-1} dI, so a unit step is the normalised fixed-point map.
    Each accepted iterate is rescaled onto the Nehari manifold.
    """
    grid = model.grid
    state = model.evaluate(np.maximum(seed, 0.0))
    state = model.evaluate(state.values * model.nehari_scale(state))
    history = [state.quotient]
    gradient_norm = math.inf
    for iteration in range(1, max_iters + 1):
        dual = model.dual_gradient(state)
        gradient_norm = _relative_gradient(model, state, dual)
        LOGGER.debug("iter %s: I=%.12g relative gradient %.3e", iteration, state.quotient, gradient_norm)
        if gradient_norm < grad_tol:
            return DescentResult(state.values, state.quotient, gradient_norm, iteration - 1, True, history)

        ratio = state.form / state.nonlocal_value
        direction = ratio * grid.solve_shifted(model.source(state), model.lam) - state.values
        slope = float(dual @ direction)
        step = step0
        for _ in range(_MAX_BACKTRACKS):
            trial = np.maximum(state.values + step * direction, 0.0)
            try:
                candidate = model.evaluate(trial)
            except DomainError:
                candidate = None
            if candidate is not None and candidate.quotient <= state.quotient + ARMIJO_C1 * step * slope:
                break
            step *= backtrack_factor
        else:
            LOGGER.warning("Line search stalled at iteration %s (I=%.12g).", iteration, state.quotient)
            return DescentResult(state.values, state.quotient, gradient_norm, iteration, False, history)
        state = model.evaluate(candidate.values * model.nehari_scale(candidate))
        history.append(state.quotient)

    dual = model.dual_gradient(state)
    gradient_norm = _relative_gradient(model, state, dual)
    converged = gradient_norm < grad_tol
    return DescentResult(state.values, state.quotient, gradient_norm, max_iters, converged, history)


# -- Ground states ------------------------------------------------------------------


def seed_values(cfg: SolverConfig, grid: RadialGrid) -> np.ndarray:
    rho = grid.nodes
    if cfg.seed_profile is SeedProfile.GAUSSIAN_BUMP:
        return np.exp(-rho * rho)
    if cfg.seed_profile is SeedProfile.EXPONENTIAL:
        return np.exp(-rho)
    profile = RadialProfile.from_samples(grid, np.asarray(cfg.seed_rho), np.asarray(cfg.seed_values))
    values = np.maximum(profile.values, 0.0)
    if not np.any(grid.dirichlet(values)):
        raise DomainError("The user-supplied seed has no positive values inside the grid.")
    return values


def is_monotone(values: np.ndarray) -> bool:
    """Strictly decreasing above a relative floor, non-increasing below it."""
    peak = float(np.max(values))
    if peak <= 0.0:
        return False
    steps = np.diff(values)
    significant = values[:-1] > _MONOTONE_FLOOR * peak
    return bool(np.all(steps[significant] < 0.0) and np.all(steps <= _MONOTONE_FLOOR * peak))


def decay_slope(profile: RadialProfile) -> float:
    """Slope of log u fitted on [R/2, 3R/4]."""
    rho = profile.grid.nodes
    window = (rho >= 0.5 * profile.grid.r_max) & (rho <= 0.75 * profile.grid.r_max)
    values = profile.values[window]
    if values.size < 2 or np.any(values <= 0.0):
        return math.nan
    slope, _ = np.polyfit(rho[window], np.log(values), 1)
    return float(slope)


def decay_window(spec: ProblemSpec) -> tuple[float, float]:
    half = (spec.dim - 1) / 2.0
    return -half - math.sqrt(half * half - spec.lam), -half


def solve_ground_state(cfg: SolverConfig) -> GroundStateReport:
    """Minimise I over nonnegative radial profiles and report diagnostics.

    Raises:
        DomainError: The exponents are not subcritical.
        ConvergenceError: ``max_iters`` iterations did not reach ``grad_tol``.
    """
    spec = cfg.problem
    kind = validate_exponents(spec.dim, spec.alpha, spec.p)
    if kind is not ExponentClass.SUBCRITICAL:
        raise DomainError(f"Ground states are computed for subcritical p only; p={spec.p:g} is {kind.value}.")
    grid = RadialGrid.from_parameters(cfg.grid)
    model = _choquard_model(grid, spec, cfg.options)
    LOGGER.info(
        "Solving N=%s alpha=%s p=%s lambda=%s on %s nodes, R_max=%s.",
        spec.dim, spec.alpha, spec.p, spec.lam, grid.size, grid.r_max,
    )
    result = descend(
        model,
        seed_values(cfg, grid),
        max_iters=cfg.max_iters,
        grad_tol=cfg.grad_tol,
        step0=cfg.step0,
        backtrack_factor=cfg.backtrack_factor,
    )
    profile = RadialProfile(grid, result.values)
    if not result.converged:
        raise ConvergenceError(
            f"Descent stopped after {result.iterations} iterations with relative gradient "
            f"{result.gradient_norm:.3e} > {cfg.grad_tol:g}.",
            last_iterate=profile,
            gradient_norm=result.gradient_norm,
            iterations=result.iterations,
        )

    slope = decay_slope(profile)
    low, high = decay_window(spec)
    in_window = bool(low <= slope <= high)
    if not in_window:
        LOGGER.warning("Decay slope %.4g lies outside the heuristic window [%.4g, %.4g].", slope, low, high)
    bulk = grid.nodes < 0.5 * grid.r_max
    tail = truncation_tail(RadialProfile(grid, power_profile(profile.values, spec.p)), spec.kernel, cfg.options)
    report = GroundStateReport(
        profile=profile,
        zeta=result.quotient,
        nehari_defect=nehari_defect(profile, spec, cfg.options),
        el_residual=el_residual(profile, spec, cfg.options),
        iterations=result.iterations,
        monotone=is_monotone(profile.values),
        tail_mass=tail,
        decay_slope=slope,
        decay_in_window=in_window,
        positive_bulk=bool(np.min(profile.values[bulk]) > 0.0),
        converged=True,
        gradient_norm=result.gradient_norm,
        history=result.history,
    )
    LOGGER.info(
        "zeta=%.12g after %s iterations (EL residual %.3e, monotone=%s).",
        report.zeta, report.iterations, report.el_residual, report.monotone,
    )
    return report


def estimate_sobolev_constant(
    grid: RadialGrid,
    lam: float,
    q: float,
    *,
    max_iters: int = 500,
    grad_tol: float = 1e-6,
) -> float:
    """S_{lambda,q} = inf ||u||_lambda^2 / ||u||_q^2 over radial profiles on ``grid``."""
    if not q > 2.0:
        raise DomainError(f"The Poincare-Sobolev quotient needs q > 2, got {q}.")
    model = QuotientModel(grid, q / 2.0, lam, lambda g: g)
    result = descend(model, np.exp(-grid.nodes**2), max_iters=max_iters, grad_tol=grad_tol)
    if not result.converged:
        LOGGER.warning("Sobolev-constant descent stopped at relative gradient %.3e.", result.gradient_norm)
    profile = RadialProfile(grid, result.values)
    form = grid.stiffness_form(profile.values) - lam * lq_norm(profile, 2.0) ** 2
    return form / lq_norm(profile, q) ** 2


def zeta_refinement_ratio(cfg: SolverConfig, levels: int = 3) -> tuple[list[float], float]:
    """zeta on n, 2n, 4n, ... nodes and |z_h - z_{h/2}| / |z_{h/2} - z_{h/4}| of the last three."""
    if levels < 3:
        raise DomainError("A refinement ratio needs at least three grids.")
    zetas = []
    for level in range(levels):
        grid = cfg.grid.model_copy(update={"nodes": cfg.grid.nodes * 2**level})
        zetas.append(solve_ground_state(cfg.model_copy(update={"grid": grid})).zeta)
    coarse, mid, fine = zetas[-3:]
    denominator = abs(mid - fine)
    ratio = abs(coarse - mid) / denominator if denominator > 0.0 else math.inf
    LOGGER.info("Refinement zetas %s, ratio %.4g.", zetas, ratio)
    return zetas, ratio
