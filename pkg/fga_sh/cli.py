# fga_sh/cli.py
import argparse
import os
import sys
from typing import List, Optional

import numpy as np
import structlog

from fga_sh import __version__
from fga_sh.config import load_config
from fga_sh.errors import ConfigError, FgaShError, NumericalAbort
from fga_sh.initial_data import GaussianWavePacket
from fga_sh.oracle import QuadratureSpec, fga_term
from fga_sh.potentials import BUILTIN_MODELS, make_potential
from fga_sh.reference import packet_grid, solve
from fga_sh.runner import build_table, compare_csv, run_experiment
from fga_sh.studies import study_avoided_crossing, study_convergence, study_marcus, study_trajectory_scaling
from fga_sh.utils import grid_points_for, summary_to_json, write_summary, write_wavefunction_csv

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

STUDIES = {
    "conv": study_convergence,
    "marcus": study_marcus,
    "ntraj": study_trajectory_scaling,
    "avoided": study_avoided_crossing,
}


def setup_logging(verbose: bool, format_output: str = "console") -> None:
    """
    Set up structlog logger.

    Args:
        verbose: Whether to enable verbose logging
        format_output: Output format (console, json)
    """
    log_level = "DEBUG" if verbose else "INFO"

    processors = [
        structlog.stdlib.add_log_level,
        structlog.stdlib.PositionalArgumentsFormatter(),
        structlog.processors.TimeStamper(fmt="%Y-%m-%d %H:%M:%S"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
    ]

    if format_output == "json":
        processors.append(structlog.processors.JSONRenderer())
    else:
        processors.append(structlog.dev.ConsoleRenderer(colors=True))

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.make_filtering_bound_logger(log_level),
        context_class=dict,
        logger_factory=structlog.PrintLoggerFactory(sys.stderr),
        cache_logger_on_first_use=False,
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--json",
        action="store_true",
        help="output logs in JSON format",
    )
    parser.add_argument(
        "--verbose", "-v",
        action="store_true",
        help="enable verbose logging",
    )
    parser.add_argument(
        "--workers",
        type=int,
        help="worker processes (default: FGA_SH_WORKERS or the CPU count)",
    )


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command-line arguments.

    Returns:
        Parsed arguments
    """
    parser = argparse.ArgumentParser(
        prog="fga-sh",
        description="fga-sh: frozen Gaussian surface hopping for two-level semiclassical dynamics",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run a configured experiment")
    run.add_argument("config", help="path to the experiment config")
    run.add_argument("--trajectories", "-n", type=int, help="override the trajectory count")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--output", help="override the output directory")
    run.add_argument("--reference", action="store_true", help="also compute the spectral reference and errors")
    _add_common(run)

    ref = commands.add_parser("reference", help="run the spectral reference solver")
    ref.add_argument("--model", choices=sorted(BUILTIN_MODELS), default="simple", help="potential (default: simple)")
    ref.add_argument("--epsilon", type=float, required=True, help="semiclassical parameter")
    ref.add_argument("--delta", type=float, required=True, help="coupling scale")
    ref.add_argument("--T", dest="final_time", type=float, required=True, help="final time (negative runs backwards)")
    ref.add_argument("--dt", type=float, help="time step (default: eps/32)")
    ref.add_argument("--grid-n", type=int, help="grid points, a power of two (default: dx <= sqrt(eps)/8)")
    ref.add_argument("--domain", type=float, nargs=2, default=[-8.0, 8.0], metavar=("A", "B"), help="periodic domain (default: -8 8)")
    ref.add_argument("--center", type=float, default=-1.5, help="packet center (default: -1.5)")
    ref.add_argument("--momentum", type=float, default=2.0, help="packet momentum (default: 2)")
    ref.add_argument("--alpha", type=float, default=12.5, help="packet width exponent (default: 12.5)")
    ref.add_argument("--strict", action="store_true", help="fail when mass reaches the boundary layer")
    ref.add_argument("--output", "-o", default="reference.csv", help="output CSV (default: reference.csv)")
    _add_common(ref)

    oracle = commands.add_parser("oracle", help="deterministic zero/one-hop terms for a config")
    oracle.add_argument("config", help="path to the experiment config")
    oracle.add_argument("--max-hops", type=int, choices=[0, 1], default=1, help="highest hop count to include (default: 1)")
    oracle.add_argument("--table-resolution", type=int, help="phase-space cells per axis")
    oracle.add_argument("--time-nodes", type=int, default=64, help="minimum hop-time nodes (default: 64)")
    oracle.add_argument("--output", "-o", help="output CSV (default: <output dir>/<name>_oracle.csv)")
    _add_common(oracle)

    compare = commands.add_parser("compare", help="L2 errors between two wave function CSVs")
    compare.add_argument("csv_a", help="wave function to assess")
    compare.add_argument("csv_b", help="reference wave function")
    _add_common(compare)

    study = commands.add_parser("study", help="parameter studies")
    study.add_argument("kind", choices=sorted(STUDIES), help="which study to run")
    study.add_argument("config", help="base experiment config")
    study.add_argument("--replicates", type=int, help="seed replicates per point")
    study.add_argument("--output", "-o", help="output JSON (default: <output dir>/<name>_study_<kind>.json)")
    _add_common(study)

    return parser.parse_args(argv)


def cmd_run(args: argparse.Namespace) -> None:
    config = load_config(args.config)
    updates = {}
    if args.trajectories is not None:
        updates.setdefault("run", {})["trajectories"] = args.trajectories
    if args.seed is not None:
        updates.setdefault("run", {})["seed"] = args.seed
    if args.output:
        updates["output"] = {"directory": args.output}
    if args.reference:
        updates["reference"] = {"enabled": True}
    if updates:
        config = config.with_updates(**updates)
    artifacts = run_experiment(config, workers=args.workers)
    print(summary_to_json(artifacts.summary))


def cmd_reference(args: argparse.Namespace) -> None:
    logger = structlog.get_logger()
    eps = args.epsilon
    lower, upper = args.domain
    n = args.grid_n or grid_points_for(lower, upper, eps, power_of_two=True)
    packet = GaussianWavePacket(center=np.array([args.center]), alpha=args.alpha, momentum=np.array([args.momentum]))
    u_in = packet_grid(packet, eps, lower, upper, n)
    dt = args.dt or eps / 32.0
    result = solve(u_in, make_potential(args.model), args.delta, args.final_time, dt, eps, strict=args.strict)
    write_wavefunction_csv(result, args.output)
    logger.info("reference_written", path=args.output, n=n, dt=dt)


def cmd_oracle(args: argparse.Namespace) -> None:
    logger = structlog.get_logger()
    config = load_config(args.config)
    if args.table_resolution:
        config = config.with_updates(run={"table_resolution": args.table_resolution})
    run = config.run
    packet = config.build_packet()
    potential = config.build_potential()
    quad = QuadratureSpec(
        grid=config.build_grid(),
        table_resolution=run.table_resolution,
        time_nodes=args.time_nodes,
        dt=run.dt,
    )
    table = build_table(config)
    total = fga_term(0, packet, potential, run.delta, run.eps, run.final_time, quad, table).grid
    if args.max_hops >= 1:
        total.u1 = fga_term(1, packet, potential, run.delta, run.eps, run.final_time, quad, table).grid.u1
    path = args.output or os.path.join(config.output.directory, f"{config.output.name}_oracle.csv")
    write_wavefunction_csv(total, path)
    logger.info("oracle_written", path=path, max_hops=args.max_hops)


def cmd_compare(args: argparse.Namespace) -> None:
    print(summary_to_json(compare_csv(args.csv_a, args.csv_b)))


def cmd_study(args: argparse.Namespace) -> None:
    logger = structlog.get_logger()
    config = load_config(args.config)
    study = STUDIES[args.kind]
    kwargs = {"workers": args.workers}
    if args.replicates:
        kwargs["replicates"] = args.replicates
    if args.kind == "marcus":
        kwargs.pop("replicates", None)
    result = study(config, **kwargs).to_dict()
    path = args.output or os.path.join(config.output.directory, f"{config.output.name}_study_{args.kind}.json")
    write_summary(result, path)
    logger.info("study_written", path=path, study=args.kind, slope=result.get("fit", {}).get("slope"))
    print(summary_to_json(result))


COMMANDS = {
    "run": cmd_run,
    "reference": cmd_reference,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
    "study": cmd_study,
}


def main(argv: Optional[List[str]] = None) -> None:
    """Main entry point for the CLI."""
    args = parse_args(argv)

    format_output = "json" if args.json else "console"
    setup_logging(args.verbose, format_output)

    logger = structlog.get_logger()
    logger.info("fga_sh_started", version=__version__, command=args.command)

    try:
        COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error("config_error", error=str(e))
        sys.exit(EXIT_CONFIG)
    except NumericalAbort as e:
        logger.error("numerical_abort", error=str(e), kind=type(e).__name__)
        sys.exit(EXIT_NUMERICAL)
    except FgaShError as e:
        logger.error("failed", error=str(e), kind=type(e).__name__)
        sys.exit(EXIT_FAILURE)


if __name__ == "__main__":
    main()
