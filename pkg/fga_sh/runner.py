# fga_sh/runner.py
"""
Experiment orchestration: sample, evolve in parallel, reconstruct, compare.

Trajectory i always draws from trajectory_stream(seed, i): one uniform picks
its phase-space cell, the next n_steps decide its hops. Chunks are fixed
index ranges merged in index order, so results do not depend on the number
of workers.
"""
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import structlog

from fga_sh import __version__
from fga_sh.config import SimulationConfig
from fga_sh.core import evolve_batch, initial_state, time_grid, trajectory_stream
from fga_sh.errors import ContractError
from fga_sh.initial_data import (
    AmplitudeTable,
    PhaseSpaceSampler,
    amplitude_table_for_packet,
    build_sampler,
    normalization_constant,
)
from fga_sh.reconstruction import (
    EstimatorAccumulator,
    component_errors,
    deposit,
    l2_norm,
    l2_stderr,
    merge_accumulators,
    transition_rate,
)
from fga_sh.reference import cached_reference, packet_grid, solve
from fga_sh.rules import asymptotic_error_scale, describe_rate_model
from fga_sh.utils import (
    WaveFunctionGrid,
    format_duration,
    get_worker_count,
    read_wavefunction_csv,
    write_summary,
    write_wavefunction_csv,
)

logger = structlog.get_logger()


@dataclass
class RunArtifacts:
    config: SimulationConfig
    estimate: WaveFunctionGrid
    accumulator: EstimatorAccumulator
    normalization: float
    summary: Dict
    reference: Optional[WaveFunctionGrid] = None
    paths: Dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ChunkTask:
    config: SimulationConfig
    sampler: PhaseSpaceSampler
    grid: WaveFunctionGrid
    start: int
    stop: int


def chunk_bounds(total: int, chunk_size: int) -> List[Tuple[int, int]]:
    return [(lo, min(lo + chunk_size, total)) for lo in range(0, total, chunk_size)]


def draw_uniforms(seed: int, start: int, stop: int, n_steps: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-trajectory (cell uniform, hop uniforms) for indices start..stop-1."""
    cells = np.empty(stop - start)
    hops = np.empty((stop - start, n_steps))
    for row, index in enumerate(range(start, stop)):
        rng = trajectory_stream(seed, index)
        cells[row] = rng.random()
        hops[row] = rng.random(n_steps)
    return cells, hops


def run_chunk(task: ChunkTask) -> EstimatorAccumulator:
    """Evolve and accumulate trajectories task.start..task.stop-1."""
    run = task.config.run
    potential = task.config.build_potential()
    n_steps, _ = time_grid(run.final_time, run.time_step)
    cells, hops = draw_uniforms(run.seed, task.start, task.stop, n_steps)
    q0, p0, a0 = task.sampler.from_uniform(cells)
    records = evolve_batch(
        initial_state(q0, p0, a0),
        potential,
        final_time=run.final_time,
        dt=run.time_step,
        delta=run.delta,
        eps=run.eps,
        rate_model=run.rate_model,
        probability_cap=run.probability_cap,
        uniforms=hops,
        seed_tags=range(task.start, task.stop),
    )
    accumulator = EstimatorAccumulator.for_grid(task.grid)
    deposit(records, task.grid, accumulator, run.delta, run.eps, run.max_hops)
    logger.debug("chunk_done", start=task.start, stop=task.stop, hops=accumulator.total_hops)
    return accumulator


def build_table(config: SimulationConfig) -> AmplitudeTable:
    return amplitude_table_for_packet(
        config.build_packet(), config.run.eps, resolution=config.run.table_resolution
    )


def simulate_range(
    config: SimulationConfig,
    start: int,
    stop: int,
    workers: Optional[int] = None,
    table: Optional[AmplitudeTable] = None,
) -> EstimatorAccumulator:
    """
    Merged accumulator of trajectories start..stop-1.

    Trajectory i is the same whichever range it is evolved in, so merging the
    accumulators of [0, k) and [k, n) reproduces the run over [0, n).

    Args:
        config: Validated configuration (run.trajectories is ignored)
        start: First trajectory index
        stop: One past the last trajectory index
        workers: Worker processes (FGA_SH_WORKERS or the CPU count by default)
        table: Amplitude table to reuse across runs with the same packet and eps

    Returns:
        EstimatorAccumulator over the range
    """
    run = config.run
    if not 0 <= start < stop:
        raise ContractError(f"trajectory range [{start}, {stop}) is empty or negative")
    table = table or build_table(config)
    sampler = build_sampler(table, run.seed)
    grid = config.build_grid()

    tasks = [
        ChunkTask(config, sampler, grid, start + lo, start + hi)
        for lo, hi in chunk_bounds(stop - start, run.chunk_size)
    ]
    workers = workers or get_worker_count()
    workers = min(workers, len(tasks))
    logger.debug(
        "dispatching_chunks",
        chunks=len(tasks),
        workers=workers,
        start=start,
        stop=stop,
        support_cells=sampler.support_size,
    )
    if workers <= 1:
        parts = [run_chunk(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(run_chunk, tasks))
    return merge_accumulators(parts)


def simulate(
    config: SimulationConfig,
    workers: Optional[int] = None,
    table: Optional[AmplitudeTable] = None,
) -> Tuple[WaveFunctionGrid, EstimatorAccumulator, float]:
    """
    Monte Carlo estimate for one configuration.

    Args:
        config: Validated configuration
        workers: Worker processes (FGA_SH_WORKERS or the CPU count by default)
        table: Amplitude table to reuse across runs with the same packet and eps

    Returns:
        (estimate grid, merged accumulator, C_N)
    """
    run = config.run
    table = table or build_table(config)
    normalization = normalization_constant(table, run.eps)
    accumulator = simulate_range(config, 0, run.trajectories, workers, table)
    estimate = accumulator.to_grid(config.build_grid(), normalization)
    estimate.t = run.final_time
    return estimate, accumulator, normalization


def compute_reference(config: SimulationConfig, cache_dir: Optional[str] = None) -> WaveFunctionGrid:
    """Spectral reference on the configuration's reconstruction grid."""
    run = config.run
    packet = config.build_packet()
    potential = config.build_potential()
    grid = config.build_grid()
    dt = config.reference.time_step(run.eps)
    if config.reference.cache:
        return cached_reference(
            packet, potential, run.delta, run.eps, run.final_time, dt,
            grid.lower, grid.upper, grid.n, cache_dir=cache_dir, strict=config.reference.strict,
        )
    u_in = packet_grid(packet, run.eps, grid.lower, grid.upper, grid.n)
    return solve(u_in, potential, run.delta, run.final_time, dt, run.eps, strict=config.reference.strict)


def build_summary(
    config: SimulationConfig,
    estimate: WaveFunctionGrid,
    accumulator: EstimatorAccumulator,
    normalization: float,
    reference: Optional[WaveFunctionGrid],
    wall_time: float,
) -> Dict:
    run = config.run
    packet = config.build_packet()
    summary = {
        "version": __version__,
        "potential": config.build_potential().describe(),
        "eps": run.eps,
        "delta": run.delta,
        "final_time": run.final_time,
        "dt": time_grid(run.final_time, run.time_step)[1],
        "trajectories": accumulator.count,
        "seed": run.seed,
        **describe_rate_model(run.rate_model, run.delta, run.eps),
        "total_hops": accumulator.total_hops,
        "hop_histogram": {str(k): v for k, v in sorted(accumulator.hop_histogram.items())},
        "norm_u0": l2_norm(estimate, 0),
        "norm_u1": l2_norm(estimate, 1),
        "stderr_u0": l2_stderr(estimate, 0),
        "stderr_u1": l2_stderr(estimate, 1),
        "transition_rate": transition_rate(estimate, packet.l2_norm()),
        "normalization": normalization,
        "asymptotic_error_scale": asymptotic_error_scale(run.delta, run.eps, run.final_time),
        "wall_time_s": wall_time,
    }
    if run.max_hops is not None:
        summary["max_hops"] = run.max_hops
    if reference is not None:
        summary["errors"] = component_errors(estimate, reference)
        summary["reference_transition_rate"] = transition_rate(reference, packet.l2_norm())
    return summary


def run_experiment(
    config: SimulationConfig,
    workers: Optional[int] = None,
    write: bool = True,
    reference: Optional[WaveFunctionGrid] = None,
    cache_dir: Optional[str] = None,
    table: Optional[AmplitudeTable] = None,
) -> RunArtifacts:
    """
    Run one configured experiment end to end.

    Args:
        config: Validated configuration
        workers: Worker processes (FGA_SH_WORKERS or the CPU count by default)
        write: Write CSV and summary files to config.output.directory
        reference: Precomputed reference (computed when the config enables it)
        cache_dir: Reference cache directory override
        table: Amplitude table to reuse

    Returns:
        RunArtifacts
    """
    run = config.run
    logger.info(
        "run_started",
        model=config.potential.model,
        eps=run.eps,
        delta=run.delta,
        final_time=run.final_time,
        trajectories=run.trajectories,
        seed=run.seed,
    )
    started = time.perf_counter()
    estimate, accumulator, normalization = simulate(config, workers, table)
    if reference is None and config.reference.enabled:
        reference = compute_reference(config, cache_dir)
    wall_time = time.perf_counter() - started

    summary = build_summary(config, estimate, accumulator, normalization, reference, wall_time)
    artifacts = RunArtifacts(config, estimate, accumulator, normalization, summary, reference)
    if write:
        artifacts.paths = write_artifacts(artifacts)

    logger.info(
        "run_finished",
        total_hops=summary["total_hops"],
        transition_rate=summary["transition_rate"],
        rel_error=summary.get("errors", {}).get("rel_both"),
        duration=format_duration(wall_time),
    )
    return artifacts


def write_artifacts(artifacts: RunArtifacts) -> Dict[str, str]:
    output = artifacts.config.output
    base = os.path.join(output.directory, output.name)
    paths = {}
    if output.csv and artifacts.estimate.dimension == 1:
        paths["estimate"] = f"{base}.csv"
        write_wavefunction_csv(artifacts.estimate, paths["estimate"])
        if artifacts.reference is not None:
            paths["reference"] = f"{base}_reference.csv"
            write_wavefunction_csv(artifacts.reference, paths["reference"])
    if output.summary:
        paths["summary"] = f"{base}_summary.json"
        write_summary(artifacts.summary, paths["summary"])
    logger.info("artifacts_written", **paths)
    return paths


def compare_csv(path_a: str, path_b: str) -> Dict:
    """Absolute and relative L2 errors of wave function A against B, per component and combined."""
    a = read_wavefunction_csv(path_a)
    b = read_wavefunction_csv(path_b)
    errors = component_errors(a, b)
    logger.debug("compared", a=path_a, b=path_b, rel_both=errors["rel_both"])
    return {"a": path_a, "b": path_b, **errors}
