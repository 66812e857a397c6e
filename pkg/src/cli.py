#!/usr/bin/env python3
"""
🖥️ Seawater Intrusion Command Line
Subcommands:

* ``profile``  critical values, configuration and closed-form steady profile
* ``run``      time-marched trajectory with energy series and checkpoints
* ``sweep``    decay-rate fit over a list of viscosity ratios
* ``steady``   discrete steady state compared with the closed-form profile

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
Every flag can also come from a ``key=value`` file (``--config``) or from an
``INTRUSION_<FIELD>`` environment variable; flags win.
"""

import argparse
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import structlog
from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from src.config import INITIAL_CONDITIONS, RunConfig, load_config
from src.diagnostics import (
    analytic_state,
    energy_trajectory,
    l1_distance,
    nu_sweep,
    pme_relative_energy,
    relative_energy,
)
from src.exceptions import IntrusionError, MeshError, NumericalFailure, UsageError
from src.initial_conditions import initial_state
from src.logging_config import configure_logging
from src.mesh import potential_field
from src.metrics import write_metrics
from src.params import PhysicalParams, classify, critical_nus
from src.profiles import (
    profile_energy,
    profile_masses,
    profiles_near_critical,
    sample_cross_section,
    solve_profile,
)
from src.scheme import steady_solve
from src.storage import (
    write_cell_data,
    write_checkpoint,
    write_cross_section,
    write_energy_series,
    write_sweep_summary,
    write_table,
)

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

console = Console(stderr=True)


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers: {e}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--rho", type=float, help="density ratio in (0, 1)")
    common.add_argument("--nu", type=float, help="viscosity ratio")
    common.add_argument("--mass-f", type=float, help="freshwater mass")
    common.add_argument("--mass-g", type=float, help="saltwater mass")
    common.add_argument("--grid-n", type=int, help="cells per side of the square grid")
    common.add_argument("--mesh-file", help="mesh file replacing the square grid")
    common.add_argument("--t-max", type=float, help="final time")
    common.add_argument("--dt-max", type=float, help="maximal time step")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--nus", type=_float_list, help="comma-separated viscosity ratios")
    common.add_argument("--workers", type=int, help="parallel sweep workers")
    common.add_argument("--initial-condition", choices=INITIAL_CONDITIONS)
    common.add_argument("--checkpoint-every", type=int, help="checkpoint every N accepted steps")
    common.add_argument("--log-level", help="debug, info, warning or error")

    parser = argparse.ArgumentParser(
        prog="intrusion",
        description="Steady profiles, simulations and decay rates of the seawater-intrusion system",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    profile = commands.add_parser("profile", parents=[common], help="closed-form steady profile")
    profile.add_argument(
        "--near-critical",
        choices=("nu1", "nu2", "nu3"),
        help="also solve profiles at nu* - delta, nu*, nu* + delta",
    )
    profile.add_argument("--delta", type=float, default=1e-8, help="offset for --near-critical")

    commands.add_parser("run", parents=[common], help="simulate and record energies")
    commands.add_parser("sweep", parents=[common], help="decay rate for each viscosity ratio")
    commands.add_parser("steady", parents=[common], help="discrete steady state vs closed form")
    return parser


CONFIG_FLAGS = (
    "rho",
    "nu",
    "mass_f",
    "mass_g",
    "grid_n",
    "mesh_file",
    "t_max",
    "dt_max",
    "out_dir",
    "nus",
    "workers",
    "initial_condition",
    "checkpoint_every",
    "log_level",
)


def _flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {name: getattr(args, name, None) for name in CONFIG_FLAGS}


def _print_table(title: str, rows: List[Dict[str, Any]]):
    if not rows:
        return
    table = Table(title=title)
    for column in rows[0]:
        table.add_column(str(column))
    for row in rows:
        table.add_row(*(str(value) for value in row.values()))
    console.print(table)


def cmd_profile(
    config: RunConfig, near_critical: Optional[str] = None, delta: float = 1e-8
) -> int:
    """Critical values, case, radii, constants and the cross-section CSV"""
    params = config.physical_params()
    out_dir = Path(config.out_dir)
    crit = critical_nus(params)
    prof = solve_profile(params)
    mass_f, mass_g = profile_masses(prof)

    summary = [
        {"quantity": "nu1", "value": crit.nu1},
        {"quantity": "nu2", "value": crit.nu2},
        {"quantity": "nu3", "value": crit.nu3},
        {"quantity": "case", "value": prof.case.value},
    ]
    for name in ("r1", "r2", "r3", "c1", "c2", "c3", "c4"):
        value = getattr(prof, name)
        summary.append({"quantity": name, "value": "" if value is None else value})
    summary += [
        {"quantity": "mass_f", "value": mass_f},
        {"quantity": "mass_g", "value": mass_g},
        {"quantity": "energy", "value": profile_energy(prof)},
    ]
    write_table(summary, out_dir / "profile_summary.csv", "profile_summary")

    samples = sample_cross_section(prof, config.profile_samples, 1.25 * prof.support_radius)
    write_cross_section(samples, out_dir / "profile_cross_section.csv")
    _print_table(f"Stationary profile (nu={params.nu})", summary)

    if near_critical:
        rows = [
            {
                "nu": near.params.nu,
                "case": near.case.value,
                "r1": near.r1,
                "r2": near.r2,
                "r3": "" if near.r3 is None else near.r3,
            }
            for near in profiles_near_critical(params, near_critical, delta)
        ]
        write_table(rows, out_dir / f"profile_near_{near_critical}.csv", "profile_near")
        _print_table(f"Profiles around {near_critical}*", rows)
    return EXIT_OK


def cmd_run(config: RunConfig) -> int:
    """Trajectory from the configured initial state up to t_max"""
    out_dir = Path(config.out_dir)
    mesh = config.build_mesh()
    b = potential_field(mesh)
    fluid = config.fluid_params()
    start = initial_state(config, mesh)

    reference = steady_solve(
        mesh,
        b,
        fluid,
        start,
        dt_max=config.steady_dt_max,
        t_max=config.steady_t_max,
        residual_tol=config.newton_tol,
    )
    stepper = config.stepper()
    final = {"state": start}

    def on_step(state, step: int):
        final["state"] = state
        if config.checkpoint_every and step % config.checkpoint_every == 0:
            write_checkpoint(state, mesh, stepper.dt, out_dir / f"checkpoint_{step:06d}.csv")

    reports = energy_trajectory(
        start, reference, mesh, b, fluid, stepper, config.t_max, on_step=on_step
    )
    state = final["state"]
    write_energy_series(reports, out_dir / "energy.csv")
    write_checkpoint(state, mesh, stepper.dt, out_dir / "checkpoint_final.csv")
    write_cell_data(mesh, {"f": state.f, "g": state.g}, out_dir / "final_state.csv")

    _print_table(
        "Run",
        [
            {
                "t": state.time,
                "steps": stepper.accepted,
                "rejected": stepper.rejected,
                "relative_energy": reports[-1].relative_energy,
            }
        ],
    )
    return EXIT_OK


def cmd_sweep(config: RunConfig) -> int:
    """Decay rate p(nu) for every configured viscosity ratio"""
    if not config.nus:
        raise UsageError("--nus needs at least one viscosity ratio")

    out_dir = Path(config.out_dir)
    outcomes = nu_sweep(config.nus, config, workers=config.workers)
    for outcome in outcomes:
        if outcome.reports:
            write_energy_series(outcome.reports, out_dir / f"decay_nu_{outcome.nu!r}.csv")
    write_sweep_summary(outcomes, out_dir / "sweep_summary.csv")

    _print_table(
        "Decay rates",
        [
            {
                "nu": o.nu,
                "p": o.record.fitted_rate if o.record else "-",
                "fit_residual": o.record.fit_residual if o.record else "-",
                "error": o.error or "",
            }
            for o in outcomes
        ],
    )
    return EXIT_OK if all(o.ok for o in outcomes) else EXIT_NUMERICAL


def cmd_steady(config: RunConfig) -> int:
    """Time-marched discrete steady state and its L1 gap to the closed form"""
    out_dir = Path(config.out_dir)
    mesh = config.build_mesh()
    b = potential_field(mesh)
    fluid = config.fluid_params()
    start = initial_state(config, mesh)

    steady = steady_solve(
        mesh,
        b,
        fluid,
        start,
        dt_max=config.steady_dt_max,
        t_max=config.steady_t_max,
        residual_tol=config.newton_tol,
    )
    masses = steady.masses(mesh)
    analytic = analytic_state(fluid, masses, mesh)
    error_f, error_g = l1_distance(steady, analytic, mesh)

    write_cell_data(
        mesh,
        {"f": steady.f, "g": steady.g, "F": analytic.f, "G": analytic.g},
        out_dir / "steady_state.csv",
    )
    case = "single-phase"
    if masses[0] > 0 and masses[1] > 0:
        params = PhysicalParams(
            rho=config.rho, nu=config.nu, mass_f=masses[0], mass_g=masses[1]
        )
        case = classify(params).value

    summary = [
        {
            "nu": config.nu,
            "case": case,
            "mass_f": masses[0],
            "mass_g": masses[1],
            "l1_f": error_f,
            "l1_g": error_g,
            "relative_l1": (error_f + error_g) / sum(masses),
            "relative_energy_to_sampled": relative_energy(analytic, steady, mesh, b, fluid),
        }
    ]
    if case == "single-phase":
        phase = "f" if masses[0] > 0 else "g"
        summary[0]["pme_relative_energy"] = pme_relative_energy(
            getattr(steady, phase), getattr(analytic, phase), mesh, b.center
        )
    write_table(summary, out_dir / "steady_summary.csv", "steady_summary")
    _print_table("Steady state", summary)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Command-line entry point; returns the process exit code"""
    load_dotenv()
    args = build_parser().parse_args(argv)

    try:
        config = load_config(args.config, overrides=_flag_overrides(args))
    except (ValidationError, UsageError, OSError) as e:
        console.print(f"[red]Invalid configuration:[/red] {e}")
        return EXIT_USAGE

    configure_logging(os.getenv("LOG_LEVEL", config.log_level))
    logger.info("🌊 Starting command", command=args.command, nu=config.nu, rho=config.rho)

    try:
        if args.command == "profile":
            code = cmd_profile(config, args.near_critical, args.delta)
        elif args.command == "run":
            code = cmd_run(config)
        elif args.command == "sweep":
            code = cmd_sweep(config)
        else:
            code = cmd_steady(config)
    except NumericalFailure as e:
        logger.error("❌ Numerical failure", command=args.command, error=str(e))
        console.print(f"[red]Numerical failure:[/red] {e}")
        code = EXIT_NUMERICAL
    except (UsageError, MeshError, ValidationError, ValueError, OSError) as e:
        logger.error("❌ Invalid input", command=args.command, error=str(e))
        console.print(f"[red]Invalid input:[/red] {e}")
        code = EXIT_USAGE
    except IntrusionError as e:
        logger.error("❌ Command failed", command=args.command, error=str(e))
        code = EXIT_USAGE
    finally:
        write_metrics(Path(config.out_dir) / "metrics.prom")

    logger.info("✅ Command finished", command=args.command, exit_code=code)
    return code


if __name__ == "__main__":
    sys.exit(main())
