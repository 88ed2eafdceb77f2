"""Radial function spaces on B^N and the radial convolution operator."""

from __future__ import annotations

import csv
import io
import logging
import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, linalg, sparse

from src.config import load_settings
from src.errors import DomainError, UnsupportedError
from src.green_kernel import KernelSpec, green_kernel, green_tail_bound
from src.heat_kernel import DEFAULT_OPTIONS, HeatEvalOptions, sphere_area
from src.quadrature import gauss_legendre_on

LOGGER = logging.getLogger("hyperchoq.radial_field")

DEFAULT_R_MAX = 40.0
DEFAULT_NODES = 2000
DEFAULT_STRETCH = 0.05
TABLE_TOLERANCE = 1e-9

_PANELS = 6
_PANEL_ORDER = 8
_TAIL_ORDER = 16
_ENDPOINT_WIDTH = 1.0
_CELL_ORDER = 8
_PAIRS_PER_BLOCK = 20_000


class GridParameters(BaseModel):
    """Shape of a RadialGrid: dimension, truncation radius and node count."""

    dim: int = Field(..., ge=3, description="Dimension N.")
    r_max: float = Field(DEFAULT_R_MAX, gt=0.0, description="Geodesic truncation radius.")
    nodes: int = Field(DEFAULT_NODES, ge=16, description="Number of grid nodes.")
    stretch: float = Field(DEFAULT_STRETCH, gt=0.0, description="Clustering of nodes near 0.")

    model_config = ConfigDict(extra="forbid", frozen=True)


@dataclass(frozen=True, slots=True, eq=False)
class RadialGrid:
    """Nodes rho_i = Phi(i/n), Phi(xi) = R xi (xi + eps) / (1 + eps), i = 1..n.

    ``weights`` carry omega_{N-1} sinh^{N-1}(rho_i) Phi'(xi_i) / n (trapezoid in
    xi, last node halved). The last node is the Dirichlet node.
    """

    dim: int
    r_max: float
    stretch: float
    nodes: np.ndarray
    weights: np.ndarray
    cell_edges: np.ndarray
    couplings: np.ndarray

    @classmethod
    def build(
        cls,
        dim: int,
        r_max: float = DEFAULT_R_MAX,
        count: int = DEFAULT_NODES,
        stretch: float = DEFAULT_STRETCH,
    ) -> "RadialGrid":
        params = GridParameters(dim=dim, r_max=r_max, nodes=count, stretch=stretch)
        return cls.from_parameters(params)

    @classmethod
    def from_parameters(cls, params: GridParameters) -> "RadialGrid":
        n, eps, radius = params.nodes, params.stretch, params.r_max
        step = 1.0 / n

        def phi(xi: np.ndarray) -> np.ndarray:
            return radius * xi * (xi + eps) / (1.0 + eps)

        def dphi(xi: np.ndarray) -> np.ndarray:
            return radius * (2.0 * xi + eps) / (1.0 + eps)

        xi = step * np.arange(1, n + 1)
        nodes = phi(xi)
        omega = sphere_area(params.dim - 1)
        weights = omega * np.sinh(nodes) ** (params.dim - 1) * dphi(xi) * step
        weights[-1] *= 0.5
        edges = np.concatenate([phi(xi - 0.5 * step), [radius]])
        mid = xi[:-1] + 0.5 * step
        couplings = omega * np.sinh(phi(mid)) ** (params.dim - 1) / dphi(mid) / step
        for array in (nodes, weights, edges, couplings):
            array.setflags(write=False)
        return cls(params.dim, radius, eps, nodes, weights, edges, couplings)

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def key(self) -> tuple[int, float, int, float]:
        return (self.dim, self.r_max, self.size, self.stretch)

    @property
    def spectral_bottom(self) -> float:
        return (self.dim - 1) ** 2 / 4.0

    @property
    def max_spacing(self) -> float:
        return float(np.max(np.diff(np.concatenate([[0.0], self.nodes]))))

    def parameters(self) -> GridParameters:
        return GridParameters(dim=self.dim, r_max=self.r_max, nodes=self.size, stretch=self.stretch)

    def refined(self, factor: int = 2) -> "RadialGrid":
        return RadialGrid.build(self.dim, self.r_max, self.size * factor, self.stretch)

    def dirichlet(self, values: np.ndarray) -> np.ndarray:
        out = np.array(values, dtype=float)
        out[-1] = 0.0
        return out

    # -- stiffness (weak -Delta) --

    def stiffness_matrix(self) -> sparse.csr_matrix:
        """Tridiagonal K with u^T K u = omega int |u'|^2 sinh^{N-1}, u_n = 0."""
        c = self.couplings
        n = self.size
        diag = np.zeros(n)
        diag[:-1] += c
        diag[1:] += c
        matrix = sparse.diags([-c, diag, -c], [-1, 0, 1], shape=(n, n), format="lil")
        matrix[-1, :] = 0.0
        matrix[:, -1] = 0.0
        return matrix.tocsr()

    def stiffness_apply(self, values: np.ndarray) -> np.ndarray:
        u = self.dirichlet(values)
        flux = self.couplings * np.diff(u)
        out = np.zeros_like(u)
        out[:-1] -= flux
        out[1:] += flux
        out[-1] = 0.0
        return out

    def stiffness_form(self, values: np.ndarray) -> float:
        u = self.dirichlet(values)
        return float(np.sum(self.couplings * np.diff(u) ** 2))

    def solve_shifted(self, rhs: np.ndarray, lam: float) -> np.ndarray:
        """Solve (K - lam M) x = rhs on the free nodes; x_n = 0."""
        c = self.couplings
        diag = np.zeros(self.size)
        diag[:-1] += c
        diag[1:] += c
        diag = diag - lam * self.weights
        free = self.size - 1
        banded = np.zeros((2, free))
        banded[0, 1:] = -c[: free - 1]
        banded[1, :] = diag[:free]
        out = np.zeros(self.size)
        out[:free] = linalg.solveh_banded(banded, np.asarray(rhs, dtype=float)[:free])
        return out


@dataclass(slots=True, eq=False)
class RadialProfile:
    """Values of a radial function at the nodes of ``grid``."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.size,):
            raise DomainError(
                f"Profile has {self.values.size} values for a grid of {self.grid.size} nodes."
            )
        if not np.all(np.isfinite(self.values)):
            raise DomainError("Profile values must be finite.")

    @classmethod
    def from_function(cls, grid: RadialGrid, func: Callable[[np.ndarray], np.ndarray]) -> "RadialProfile":
        return cls(grid, func(grid.nodes))

    @classmethod
    def from_samples(cls, grid: RadialGrid, rho: np.ndarray, values: np.ndarray) -> "RadialProfile":
        """Linear interpolation of (rho, value) samples, zero beyond the last sample."""
        return cls(grid, np.interp(grid.nodes, rho, values, right=0.0))

    def scaled(self, factor: float) -> "RadialProfile":
        return RadialProfile(self.grid, factor * self.values)

    def with_values(self, values: np.ndarray) -> "RadialProfile":
        return RadialProfile(self.grid, values)

    def is_zero(self) -> bool:
        return not np.any(self.grid.dirichlet(self.values))


# -- Norms --------------------------------------------------------------------


def inner(u: RadialProfile, v: RadialProfile) -> float:
    return float(np.sum(u.grid.weights * u.values * v.values))


def lq_norm(u: RadialProfile, q: float) -> float:
    """(sum_i w_i |u_i|^q)^{1/q}."""
    if not q >= 1.0:
        raise DomainError(f"L^q norms need q >= 1, got {q}.")
    return float(np.sum(u.grid.weights * np.abs(u.values) ** q) ** (1.0 / q))


def _check_lambda(grid: RadialGrid, lam: float) -> float:
    lam = float(lam)
    if not lam < grid.spectral_bottom:
        raise DomainError(
            f"lambda={lam:g} must be below the spectral bottom (N-1)^2/4 = {grid.spectral_bottom:g}; "
            "the endpoint is not coercive on a truncated grid."
        )
    return lam


def h1_lambda_norm(u: RadialProfile, lam: float) -> float:
    """(int |grad u|^2 - lam u^2 dV)^{1/2} with u = 0 at R_max."""
    lam = _check_lambda(u.grid, lam)
    value = u.grid.dirichlet(u.values)
    form = u.grid.stiffness_form(value) - lam * float(np.sum(u.grid.weights * value**2))
    return math.sqrt(max(form, 0.0))


def rayleigh_quotient(u: RadialProfile) -> float:
    value = u.grid.dirichlet(u.values)
    mass = float(np.sum(u.grid.weights * value**2))
    if mass == 0.0:
        raise DomainError("The Rayleigh quotient is undefined for the zero profile.")
    return u.grid.stiffness_form(value) / mass


def grid_derivative(u: RadialProfile) -> np.ndarray:
    """Centred second-order differences with one-sided closure at the ends."""
    return np.gradient(u.values, u.grid.nodes, edge_order=2)


def volume(dim: int, radius: float) -> float:
    """omega_{N-1} int_0^R sinh^{N-1}."""
    value, _ = integrate.quad(lambda s: math.sinh(s) ** (dim - 1), 0.0, radius, limit=200)
    return sphere_area(dim - 1) * value


# -- Sphere averages -------------------------------------------------------------

RadialKernel = Callable[[np.ndarray], np.ndarray]


def table_reach(distance: float) -> float:
    """Kernel-table length covering ``distance``, rounded up so nearby grids share a table."""
    return 10.0 * math.ceil((distance + 1.0) / 10.0)


def _sphere_average(kernel: RadialKernel, dim: int, r: np.ndarray, s: np.ndarray) -> np.ndarray:
    """omega_{N-2} int_0^pi k(d(r,s,theta)) sin^{N-2} theta dtheta for r != s.

    With sin(theta/2) = sinh(delta/2) sinh(v) / beta, beta^2 = sinh r sinh s,
    the distance is d = 2 asinh(sinh(delta/2) cosh v) and the near-diagonal
    peak becomes an O(1)-wide bump in v. Beyond d ~ 1 the integrand decays
    like e^{-(N-1) v} and is integrated in y = e^{-(N-1)(v - v_a)}. For even N
    the weight carries (v_max - v)^{(N-3)/2}; the last stretch below v_max is
    integrated in w with v = v_max - w^2, where it is smooth.
    """
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    sh = np.sinh(0.5 * np.abs(r - s))
    beta = np.sqrt(np.sinh(r) * np.sinh(s))
    v_max = np.arcsinh(beta / sh)
    endpoint = np.minimum(0.5 * v_max, _ENDPOINT_WIDTH) if dim % 2 == 0 else np.zeros_like(v_max)
    v_end = v_max - endpoint
    v_a = np.minimum(np.arcsinh(1.0 / sh) + 1.0, v_end)

    def integrand(v: np.ndarray) -> np.ndarray:
        shv = sh[:, None]
        x = np.minimum(shv * np.sinh(v) / beta[:, None], 1.0)
        d = 2.0 * np.arcsinh(shv * np.cosh(v))
        measure = (2.0 * x) ** (dim - 2) * 2.0 * shv * np.cosh(v) / beta[:, None]
        if dim != 3:
            with np.errstate(divide="ignore"):
                measure = measure * (1.0 - x * x) ** ((dim - 3) / 2.0)
        return kernel(d) * measure

    edges = v_a[:, None] * np.linspace(0.0, 1.0, _PANELS + 1)[None, :]
    points, weights = gauss_legendre_on(edges[:, :-1], edges[:, 1:], _PANEL_ORDER)
    points = points.reshape(r.size, -1)
    weights = weights.reshape(r.size, -1)
    total = np.sum(integrand(points) * weights, axis=1)

    rate = dim - 1.0
    tail = v_end > v_a
    if np.any(tail):
        y_min = np.exp(-np.minimum(rate * (v_end - v_a), 60.0))
        y_nodes, y_weights = gauss_legendre_on(np.where(tail, y_min, 1.0), 1.0, _TAIL_ORDER)
        v_tail = v_a[:, None] - np.log(y_nodes) / rate
        jac = y_weights / (rate * y_nodes)
        total = total + np.where(tail, np.sum(integrand(v_tail) * jac, axis=1), 0.0)

    if dim % 2 == 0:
        w_nodes, w_weights = gauss_legendre_on(0.0, np.sqrt(endpoint), _TAIL_ORDER)
        v_near = v_max[:, None] - w_nodes * w_nodes
        total = total + np.sum(integrand(v_near) * 2.0 * w_nodes * w_weights, axis=1)
    return sphere_area(dim - 2) * total


def sphere_average_kernel(
    spec: KernelSpec,
    r: float,
    s: float,
    options: HeatEvalOptions = DEFAULT_OPTIONS,
) -> float:
    """A(r, s): the kernel averaged over the sphere of radius s about a point at radius r."""
    r, s = float(r), float(s)
    if r <= 0.0 or s <= 0.0:
        raise DomainError("Sphere averages need r > 0 and s > 0.")
    table = green_kernel(spec, options).table(table_reach(r + s), TABLE_TOLERANCE)
    if r == s:
        return _diagonal_average(table, spec.dim, spec.alpha, r)
    return float(_sphere_average(table, spec.dim, np.array([r]), np.array([s]))[0])


def _diagonal_average(kernel: RadialKernel, dim: int, alpha: float, r: float) -> float:
    if alpha <= 1.0:
        return math.inf
    # theta = pi z^q absorbs the theta^{alpha-2} endpoint behaviour.
    q = min(1.0 / (alpha - 1.0), 8.0)
    nodes, weights = gauss_legendre_on(0.0, 1.0, 64)
    z = nodes.ravel()
    theta = math.pi * z**q
    d = 2.0 * np.arcsinh(math.sinh(r) * np.sin(0.5 * theta))
    jac = math.pi * q * z ** (q - 1.0)
    values = kernel(d) * np.sin(theta) ** (dim - 2) * jac
    return sphere_area(dim - 2) * float(np.sum(values * weights.ravel()))


# -- Convolution operator ----------------------------------------------------------


class RadialConvolution:
    """Matrix C with (k * u)(r_i) ~ sum_j C_ij u_j for radial u.

    Off-diagonal entries are A(r_i, r_j) times the node volume; the diagonal
    integrates A(r_i, s) over the dual cell of node i with a graded rule.
    M C is symmetric, so the discrete operator is self-adjoint in the grid
    inner product.
    """

    def __init__(
        self,
        grid: RadialGrid,
        kernel: RadialKernel,
        local_order: float,
        *,
        threads: int | None = None,
    ) -> None:
        self.grid = grid
        self.kernel = kernel
        self.local_order = float(local_order)
        self.threads = threads or load_settings().threads
        self.matrix = self._assemble()

    def _assemble(self) -> np.ndarray:
        grid = self.grid
        n = grid.size
        rows, cols = np.triu_indices(n, 1)
        volume = grid.weights / sphere_area(grid.dim - 1)
        upper = np.empty(rows.size)
        blocks = [
            slice(start, min(start + _PAIRS_PER_BLOCK, rows.size))
            for start in range(0, rows.size, _PAIRS_PER_BLOCK)
        ]

        def run(block: slice) -> None:
            upper[block] = _sphere_average(
                self.kernel, grid.dim, grid.nodes[rows[block]], grid.nodes[cols[block]]
            )

        LOGGER.info("Assembling %sx%s convolution with %s threads.", n, n, self.threads)
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            list(pool.map(run, blocks))
        averages = np.zeros((n, n))
        averages[rows, cols] = upper
        averages[cols, rows] = upper
        matrix = averages * volume[None, :]
        matrix[np.diag_indices(n)] = self._cell_integrals()
        return matrix

    def _cell_integrals(self) -> np.ndarray:
        grid = self.grid
        z, zw = gauss_legendre_on(0.0, 1.0, _CELL_ORDER)
        z, zw = z.ravel(), zw.ravel()
        q = 1.0 / self.local_order if self.local_order < 1.0 else 1.0
        out = np.zeros(grid.size)
        for side in (-1.0, 1.0):
            lengths = grid.nodes - grid.cell_edges[:-1] if side < 0 else grid.cell_edges[1:] - grid.nodes
            s = grid.nodes[:, None] + side * lengths[:, None] * z[None, :] ** q
            jac = lengths[:, None] * q * z[None, :] ** (q - 1.0) * zw[None, :]
            r = np.broadcast_to(grid.nodes[:, None], s.shape)
            valid = lengths > 0.0
            averages = np.zeros(s.shape)
            averages[valid] = _sphere_average(
                self.kernel, grid.dim, r[valid].ravel(), s[valid].ravel()
            ).reshape(-1, z.size)
            out += np.sum(averages * np.sinh(s) ** (grid.dim - 1) * jac, axis=1)
        return out

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.matrix @ self.grid.dirichlet(values)

    def bilinear(self, f: np.ndarray, g: np.ndarray) -> float:
        """<C f, g> in the grid inner product."""
        return float(np.sum(self.grid.weights * self.apply(f) * self.grid.dirichlet(g)))


_OPERATORS: "OrderedDict[tuple, RadialConvolution]" = OrderedDict()
_OPERATORS_LOCK = threading.Lock()


def _cached(key: tuple, factory: Callable[[], RadialConvolution]) -> RadialConvolution:
    with _OPERATORS_LOCK:
        if key in _OPERATORS:
            _OPERATORS.move_to_end(key)
            return _OPERATORS[key]
        operator = factory()
        _OPERATORS[key] = operator
        while len(_OPERATORS) > load_settings().cache_size:
            _OPERATORS.popitem(last=False)
        return operator


def green_convolution(
    grid: RadialGrid, spec: KernelSpec, options: HeatEvalOptions = DEFAULT_OPTIONS
) -> RadialConvolution:
    """Memoised convolution operator of k_{alpha,N} on ``grid``."""
    if spec.dim != grid.dim:
        raise DomainError(f"Kernel dimension {spec.dim} does not match grid dimension {grid.dim}.")
    table = green_kernel(spec, options).table(table_reach(2.0 * grid.r_max), TABLE_TOLERANCE)
    return _cached(
        ("green", grid.key, spec, options),
        lambda: RadialConvolution(grid, table, spec.alpha),
    )


def hyperbolic_riesz_convolution(grid: RadialGrid, lam: float) -> RadialConvolution:
    """Convolution with (2 sinh(rho/2))^{-lam}, 0 < lam < N."""
    if not 0.0 < lam < grid.dim:
        raise DomainError(f"lam must lie in (0, N={grid.dim}), got {lam}.")

    def kernel(d: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return (2.0 * np.sinh(0.5 * d)) ** (-lam)

    return _cached(("riesz", grid.key, float(lam)), lambda: RadialConvolution(grid, kernel, grid.dim - lam))


def inverse_frac_laplacian(
    u: RadialProfile, spec: KernelSpec, options: HeatEvalOptions = DEFAULT_OPTIONS
) -> RadialProfile:
    """(-Delta)^{-alpha/2} u = k_{alpha,N} * u on the grid."""
    operator = green_convolution(u.grid, spec, options)
    return RadialProfile(u.grid, operator.apply(u.values))


def truncation_tail(
    u: RadialProfile, spec: KernelSpec, options: HeatEvalOptions = DEFAULT_OPTIONS
) -> float | None:
    """Kernel bound beyond R_max/2 times the mass of |u| in the outer half.

    ``None`` when no tail bound is available (alpha < 1).
    """
    grid = u.grid
    rho0 = max(1.0, 0.5 * grid.r_max)
    try:
        bound = green_tail_bound(spec, rho0, options)
    except UnsupportedError:
        LOGGER.debug("No tail bound for alpha=%s.", spec.alpha)
        return None
    outer = grid.nodes >= rho0
    return bound * float(np.sum(grid.weights[outer] * np.abs(u.values[outer])))


def hyperbolic_hls_form(f: RadialProfile, g: RadialProfile, lam: float) -> float:
    """int int f(x) g(y) (2 sinh(rho(x,y)/2))^{-lam} dV dV for radial f, g."""
    return hyperbolic_riesz_convolution(f.grid, lam).bilinear(f.values, g.values)


def laplacian_weak_residual(v: RadialProfile, u: RadialProfile) -> float:
    """Relative dual-norm defect of the weak problem -Delta v = u.

    The residual K v - M u is measured as sqrt(sum r_j^2 / w_j) over the free
    nodes and divided by ||u||_2.
    """
    grid = u.grid
    residual = grid.stiffness_apply(v.values) - grid.weights * grid.dirichlet(u.values)
    free = slice(0, grid.size - 1)
    dual = math.sqrt(float(np.sum(residual[free] ** 2 / grid.weights[free])))
    return dual / lq_norm(u, 2.0)


def resolvent_defect(u: RadialProfile, spec: KernelSpec, options: HeatEvalOptions = DEFAULT_OPTIONS) -> float:
    """laplacian_weak_residual of k_{2,N} * u against u."""
    if spec.alpha != 2.0:
        raise DomainError("The resolvent identity holds for alpha = 2 only.")
    return laplacian_weak_residual(inverse_frac_laplacian(u, spec, options), u)


# -- CSV ---------------------------------------------------------------------------


def profile_csv_text(rho: Iterable[float], values: Iterable[float], comment: str | None = None) -> str:
    buffer = io.StringIO()
    if comment:
        buffer.write(f"# {comment}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["rho", "value"])
    for r, v in zip(rho, values):
        writer.writerow([f"{r:.17g}", f"{v:.17g}"])
    return buffer.getvalue()


def read_profile_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``rho,value`` table, skipping ``#`` comment lines."""
    rows = [
        line for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    ]
    reader = csv.DictReader(rows)
    if reader.fieldnames is None or reader.fieldnames[:2] != ["rho", "value"]:
        raise DomainError(f"{path} is not a rho,value table.")
    data = np.array([[float(row["rho"]), float(row["value"])] for row in reader])
    if data.size == 0:
        raise DomainError(f"{path} holds no samples.")
    return data[:, 0], data[:, 1]
