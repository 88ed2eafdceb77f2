"""Shared fixtures: small grids keep operator assembly to a few seconds."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parent.parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from src.choquard_energy import ProblemSpec  # noqa: E402
from src.green_kernel import KernelSpec  # noqa: E402
from src.radial_field import RadialGrid, RadialProfile  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_grid() -> RadialGrid:
    return RadialGrid.build(3, 15.0, 200)


@pytest.fixture(scope="session")
def newton_spec() -> KernelSpec:
    return KernelSpec(dim=3, alpha=2.0)


@pytest.fixture(scope="session")
def problem() -> ProblemSpec:
    return ProblemSpec(dim=3, alpha=2.0, p=2.0, lam=0.0)


@pytest.fixture
def bump(small_grid: RadialGrid) -> RadialProfile:
    return RadialProfile.from_function(small_grid, lambda rho: np.exp(-rho * rho))
