"""Command-line entry point: kernel tables, ground states and property suites."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import shlex
import sys
import tempfile
from enum import IntEnum
from pathlib import Path
from typing import Any, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src import __version__
from src.choquard_energy import ProblemSpec
from src.config import load_settings
from src.errors import ConvergenceError, DomainError, NumericError
from src.green_kernel import KernelSpec, green_eval
from src.heat_kernel import HeatEvalOptions, heat_kernel
from src.radial_field import GridParameters, profile_csv_text, read_profile_csv
from src.solver import SeedProfile, SolverConfig, solve_ground_state
from src.verification import SUITES, run_suite

LOGGER = logging.getLogger("hyperchoq.cli")


class ExitCode(IntEnum):
    OK = 0
    INVALID_INPUT = 2
    QUADRATURE_FAILURE = 3
    NOT_CONVERGED = 4
    SUITE_FAILURE = 5


class KernelRequest(BaseModel):
    """Flags of ``hyperchoq kernel``."""

    kind: Literal["heat", "green"]
    dim: int = Field(..., ge=2)
    alpha: Optional[float] = None
    t: Optional[float] = Field(None, gt=0.0)
    rho_min: float = Field(0.0, ge=0.0)
    rho_max: float = Field(10.0, gt=0.0)
    points: int = Field(101, ge=1)
    tolerance: float = Field(1e-10, gt=0.0, le=1e-2)

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _check_kind(self) -> "KernelRequest":
        if self.rho_max < self.rho_min:
            raise ValueError("--rho-max must not be below --rho-min.")
        if self.kind == "heat" and self.t is None:
            raise ValueError("--t is required for --kind heat.")
        if self.kind == "green":
            if self.alpha is None:
                raise ValueError("--alpha is required for --kind green.")
            if not 0.0 < self.alpha < self.dim:
                raise ValueError(f"alpha must satisfy 0 < alpha < N={self.dim}, got {self.alpha}.")
            if self.rho_min <= 0.0:
                raise ValueError("The Green kernel is singular at 0; use --rho-min > 0.")
        return self


class VerifyRequest(BaseModel):
    """Flags of ``hyperchoq verify``."""

    suite: Literal["hls", "heat-semigroup", "monotone", "polarization", "spectrum", "all"]
    seed: int = 0
    trials: Optional[int] = Field(None, ge=1)

    model_config = ConfigDict(extra="forbid", frozen=True)


# -- Output helpers -------------------------------------------------------------------


def invocation(argv: Sequence[str]) -> str:
    return shlex.join(["hyperchoq", *argv])


def header(argv: Sequence[str]) -> str:
    return f"hyperchoq {__version__}: {invocation(argv)}"


def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to a sibling temp file and rename it over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="\n") as stream:
            stream.write(text)
        os.replace(temp_name, path)
    except BaseException:
        Path(temp_name).unlink(missing_ok=True)
        raise


def _json_value(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def json_text(payload: dict[str, Any], argv: Sequence[str]) -> str:
    flat = {key: _json_value(value) for key, value in payload.items()}
    flat["invocation"] = invocation(argv)
    flat["version"] = __version__
    return json.dumps(flat, indent=2, sort_keys=True) + "\n"


def plot_script(csv_path: Path, argv: Sequence[str], ylabel: str, logscale: bool) -> str:
    lines = [
        f"# {header(argv)}",
        "set datafile separator ','",
        "set key off",
        "set xlabel 'rho'",
        f"set ylabel '{ylabel}'",
    ]
    if logscale:
        lines.append("set logscale y")
    lines.append(f"plot '{csv_path.name}' using 1:2 skip 2 with lines")
    return "\n".join(lines) + "\n"


# -- Commands -------------------------------------------------------------------------


def cmd_kernel(args: argparse.Namespace, argv: Sequence[str]) -> int:
    request = KernelRequest(
        kind=args.kind,
        dim=args.dim,
        alpha=args.alpha,
        t=args.t,
        rho_min=args.rho_min,
        rho_max=args.rho_max,
        points=args.points,
        tolerance=args.tolerance,
    )
    options = HeatEvalOptions(quad_tolerance=request.tolerance)
    rho = np.linspace(request.rho_min, request.rho_max, request.points)
    if request.kind == "heat":
        values = heat_kernel(request.dim, options).profile(request.t, rho)
    else:
        spec = KernelSpec(dim=request.dim, alpha=request.alpha)
        values = np.array([green_eval(spec, float(r), options) for r in rho])
    out = Path(args.out)
    atomic_write(out, profile_csv_text(rho, values, header(argv)))
    if args.plot_script:
        atomic_write(out.with_suffix(".gp"), plot_script(out, argv, f"{request.kind} kernel", True))
    LOGGER.info("Wrote %s rows to %s.", rho.size, out)
    return ExitCode.OK


def _solver_config(args: argparse.Namespace) -> SolverConfig:
    problem = ProblemSpec(dim=args.dim, alpha=args.alpha, p=args.p, lam=args.lam)
    grid = GridParameters(dim=args.dim, r_max=args.rmax, nodes=args.nodes)
    seed_rho = seed_values = None
    seed_profile = SeedProfile(args.seed_profile)
    if args.seed_csv:
        seed_profile = SeedProfile.USER_SUPPLIED
        rho, values = read_profile_csv(args.seed_csv)
        seed_rho, seed_values = tuple(rho.tolist()), tuple(values.tolist())
    elif seed_profile is SeedProfile.USER_SUPPLIED:
        raise DomainError("--seed-profile user_supplied needs --seed-csv.")
    return SolverConfig(
        problem=problem,
        grid=grid,
        max_iters=args.max_iters,
        grad_tol=args.tol,
        seed_profile=seed_profile,
        seed_rho=seed_rho,
        seed_values=seed_values,
    )


def cmd_solve(args: argparse.Namespace, argv: Sequence[str]) -> int:
    cfg = _solver_config(args)
    out = Path(args.out)
    report_path = out.with_suffix(".json")
    try:
        report = solve_ground_state(cfg)
    except ConvergenceError as exc:
        profile = exc.last_iterate
        partial = Path(f"{out}.partial")
        atomic_write(partial, profile_csv_text(profile.grid.nodes, profile.values, header(argv)))
        payload = {"converged": False, "gradient_norm": exc.gradient_norm, "iterations": exc.iterations}
        atomic_write(Path(f"{report_path}.partial"), json_text(payload, argv))
        print(f"error: {exc}", file=sys.stderr)
        return ExitCode.NOT_CONVERGED

    profile = report.profile
    atomic_write(out, profile_csv_text(profile.grid.nodes, profile.values, header(argv)))
    atomic_write(report_path, json_text(report.as_dict(), argv))
    if args.plot_script:
        atomic_write(out.with_suffix(".gp"), plot_script(out, argv, "ground state", False))
    if not report.passed:
        print("error: the ground state failed an invariant check; see the report.", file=sys.stderr)
        return ExitCode.SUITE_FAILURE
    return ExitCode.OK


def cmd_verify(args: argparse.Namespace, argv: Sequence[str]) -> int:
    request = VerifyRequest(suite=args.suite, seed=args.seed, trials=args.trials)
    suite = run_suite(request.suite, request.seed, request.trials)
    text = json_text(suite.as_dict(), argv)
    if args.out:
        atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return ExitCode.OK if suite.passed else ExitCode.SUITE_FAILURE


# -- Parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperchoq",
        description="Heat and Green kernels, Choquard ground states and property checks on hyperbolic space.",
    )
    parser.add_argument("--version", action="version", version=f"hyperchoq {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG.")
    commands = parser.add_subparsers(dest="command", required=True)

    kernel = commands.add_parser("kernel", help="Tabulate p_{t,N} or k_{alpha,N}.")
    kernel.add_argument("--kind", choices=("heat", "green"), required=True)
    kernel.add_argument("--dim", type=int, required=True)
    kernel.add_argument("--alpha", type=float)
    kernel.add_argument("--t", type=float)
    kernel.add_argument("--rho-min", type=float, default=0.0)
    kernel.add_argument("--rho-max", type=float, default=10.0)
    kernel.add_argument("--points", type=int, default=101)
    kernel.add_argument("--tolerance", type=float, default=1e-10)
    kernel.add_argument("--out", required=True)
    kernel.add_argument("--plot-script", action="store_true")
    kernel.set_defaults(handler=cmd_kernel)

    solve = commands.add_parser("solve", help="Compute a ground state.")
    solve.add_argument("--dim", type=int, default=3)
    solve.add_argument("--alpha", type=float, default=2.0)
    solve.add_argument("--p", type=float, default=2.0)
    solve.add_argument("--lambda", dest="lam", type=float, default=0.0)
    solve.add_argument("--rmax", type=float, default=40.0)
    solve.add_argument("--nodes", type=int, default=2000)
    solve.add_argument("--tol", type=float, default=1e-6)
    solve.add_argument("--max-iters", type=int, default=500)
    solve.add_argument("--seed-profile", choices=[s.value for s in SeedProfile], default="gaussian_bump")
    solve.add_argument("--seed-csv")
    solve.add_argument("--out", required=True)
    solve.add_argument("--plot-script", action="store_true")
    solve.set_defaults(handler=cmd_solve)

    verify = commands.add_parser("verify", help="Run a property suite.")
    verify.add_argument("--suite", choices=(*SUITES, "all"), required=True)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--trials", type=int)
    verify.add_argument("--out")
    verify.set_defaults(handler=cmd_verify)
    return parser


def _configure_logging(verbosity: int) -> None:
    level = load_settings().log_level
    if verbosity >= 2:
        level = "DEBUG"
    elif verbosity == 1:
        level = "INFO"
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return ExitCode.OK if exc.code == 0 else ExitCode.INVALID_INPUT
    _configure_logging(args.verbose)
    try:
        return int(args.handler(args, argv))
    except (ValidationError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ExitCode.INVALID_INPUT
    except NumericError as exc:
        achieved = "unknown" if exc.achieved_tolerance is None else f"{exc.achieved_tolerance:.3g}"
        print(f"error: {exc} (achieved tolerance {achieved})", file=sys.stderr)
        return ExitCode.QUADRATURE_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
