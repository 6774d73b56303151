# fga_sh/studies.py
"""
Parameter studies built on run_experiment: Monte Carlo convergence in N,
weak-coupling transition-rate scaling, trajectories needed to reach an
error threshold, and the avoided-crossing family delta = sqrt(eps).
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import structlog
from scipy import stats

from fga_sh.config import SimulationConfig
from fga_sh.errors import ContractError, InsufficientPointsError
from fga_sh.initial_data import normalization_constant
from fga_sh.reconstruction import EstimatorAccumulator, l2_error, merge_accumulators, transition_rate
from fga_sh.runner import build_table, compute_reference, simulate, simulate_range
from fga_sh.utils import WaveFunctionGrid

logger = structlog.get_logger()

MIN_FIT_POINTS = 4
MIN_REPLICATES = 3
# normal quantile for a 95% interval on the fitted slope
CONFIDENCE_Z = 1.96


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    rvalue: float
    residual: float
    points: int

    @property
    def half_width(self) -> float:
        return CONFIDENCE_Z * self.stderr


@dataclass
class StudyResult:
    name: str
    variable: str
    values: List[float]
    metrics: Dict[str, List] = field(default_factory=dict)
    fit: Optional[SlopeFit] = None
    notes: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        out = {
            "study": self.name,
            "variable": self.variable,
            "values": list(self.values),
            "metrics": self.metrics,
            **self.notes,
        }
        if self.fit is not None:
            out["fit"] = {
                "slope": self.fit.slope,
                "intercept": self.fit.intercept,
                "stderr": self.fit.stderr,
                "half_width": self.fit.half_width,
                "rvalue": self.fit.rvalue,
                "residual": self.fit.residual,
                "points": self.fit.points,
            }
        return out


def fit_slope(x: Sequence[float], y: Sequence[float]) -> SlopeFit:
    """
    Least-squares line through (x, y).

    Raises:
        InsufficientPointsError: fewer than 4 distinct finite points
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < MIN_FIT_POINTS or np.unique(x).size < 2:
        raise InsufficientPointsError(f"slope fit needs at least {MIN_FIT_POINTS} points, got {x.size}")
    result = stats.linregress(x, y)
    residual = float(np.sqrt(np.sum((y - (result.intercept + result.slope * x)) ** 2)))
    return SlopeFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        stderr=float(result.stderr),
        rvalue=float(result.rvalue),
        residual=residual,
        points=int(x.size),
    )


def _replicate(config: SimulationConfig, trajectories: int, replicate: int) -> SimulationConfig:
    # replicate seeds are spaced far apart so their trajectory streams never coincide
    return config.with_updates(run={"trajectories": int(trajectories), "seed": config.run.seed + 1_000_003 * replicate})


def _relative_error(estimate: WaveFunctionGrid, reference: WaveFunctionGrid) -> float:
    return l2_error(estimate, reference, relative=True)


def study_convergence(
    base: SimulationConfig,
    ns: Optional[Sequence[int]] = None,
    replicates: Optional[int] = None,
    workers: Optional[int] = None,
    reference: Optional[WaveFunctionGrid] = None,
) -> StudyResult:
    """
    Relative L2 error against the reference as a function of N.

    The slope of log(error) vs log(N) is fitted over all replicate points;
    the per-N mean error is reported alongside.
    """
    ns = list(ns if ns is not None else base.study.ns)
    replicates = replicates or base.study.replicates
    if len(ns) < MIN_FIT_POINTS:
        raise InsufficientPointsError(f"convergence study needs at least {MIN_FIT_POINTS} values of N, got {len(ns)}")
    reference = reference if reference is not None else compute_reference(base)
    table = build_table(base)

    errors: List[List[float]] = []
    for n in ns:
        row = []
        for r in range(replicates):
            estimate, _, _ = simulate(_replicate(base, n, r), workers, table)
            row.append(_relative_error(estimate, reference))
        errors.append(row)
        logger.info("convergence_point", trajectories=n, mean_error=float(np.mean(row)), replicates=replicates)

    x = np.repeat(np.log(ns), replicates)
    y = np.log(np.asarray(errors).ravel())
    return StudyResult(
        name="conv",
        variable="trajectories",
        values=ns,
        metrics={"mean_error": [float(np.mean(row)) for row in errors], "errors": errors},
        fit=fit_slope(x, y),
        notes={"replicates": replicates},
    )


def study_marcus(
    base: SimulationConfig,
    deltas: Optional[Sequence[float]] = None,
    workers: Optional[int] = None,
) -> StudyResult:
    """Transition rate R(delta) over at least a decade of delta; fits log R vs log delta."""
    deltas = list(deltas if deltas is not None else base.study.deltas)
    if len(deltas) < MIN_FIT_POINTS:
        raise InsufficientPointsError(f"weak-coupling study needs at least {MIN_FIT_POINTS} deltas, got {len(deltas)}")
    if min(deltas) <= 0 or max(deltas) / min(deltas) < 10.0:
        raise ContractError("delta values must be positive and span at least one decade")
    table = build_table(base)
    norm0 = base.build_packet().l2_norm()

    rates = []
    for delta in deltas:
        estimate, _, _ = simulate(base.with_updates(run={"delta": float(delta)}), workers, table)
        rates.append(transition_rate(estimate, norm0))
        logger.info("marcus_point", delta=delta, transition_rate=rates[-1])

    return StudyResult(
        name="marcus",
        variable="delta",
        values=deltas,
        metrics={"transition_rate": rates},
        fit=fit_slope(np.log(deltas), np.log(rates)),
    )


def _ensemble_error(
    accumulator: EstimatorAccumulator,
    grid: WaveFunctionGrid,
    normalization: float,
    reference: WaveFunctionGrid,
) -> float:
    return _relative_error(accumulator.to_grid(grid, normalization), reference)


def trajectories_to_threshold(
    config: SimulationConfig,
    reference: WaveFunctionGrid,
    threshold: float,
    replicates: int = MIN_REPLICATES,
    start: int = 64,
    cap: int = 1_000_000,
    workers: Optional[int] = None,
) -> Optional[int]:
    """
    Smallest N whose median relative error over the replicates is within
    `threshold`, by doubling then bisection. None if `cap` is exceeded.

    Each replicate grows one ensemble by trajectory index: a larger N only
    evolves the trajectories beyond the last accepted prefix.
    """
    if not 0 < threshold < 1:
        raise ContractError(f"error threshold must lie in (0, 1), got {threshold}")
    replicates = max(replicates, MIN_REPLICATES)
    table = build_table(config)
    normalization = normalization_constant(table, config.run.eps)
    grid = config.build_grid()
    seeds = [_replicate(config, cap, r) for r in range(replicates)]

    def extend(parts: Optional[List[EstimatorAccumulator]], lo: int, hi: int) -> List[EstimatorAccumulator]:
        fresh = [simulate_range(seeded, lo, hi, workers, table) for seeded in seeds]
        if parts is None:
            return fresh
        return [merge_accumulators([part, new]) for part, new in zip(parts, fresh)]

    def median_error(parts: List[EstimatorAccumulator], n: int) -> float:
        value = float(np.median([_ensemble_error(part, grid, normalization, reference) for part in parts]))
        logger.debug("threshold_probe", trajectories=n, median_error=value)
        return value

    n = start
    parts = extend(None, 0, n)
    failed, failed_parts = None, None
    while median_error(parts, n) > threshold:
        if n >= cap:
            return None
        grown = min(2 * n, cap)
        failed, failed_parts = n, parts
        parts, n = extend(parts, n, grown), grown
    if failed is None:
        return n
    lo, hi, lo_parts = failed, n, failed_parts
    # bisect to within 10% of hi
    while hi - lo > max(1, hi // 10):
        mid = (lo + hi) // 2
        mid_parts = extend(lo_parts, lo, mid)
        if median_error(mid_parts, mid) <= threshold:
            hi = mid
        else:
            lo, lo_parts = mid, mid_parts
    return hi


def _threshold_sweep(name, variable, values, configs, threshold, replicates, start, cap, workers):
    required: List[Optional[int]] = []
    for value, config in zip(values, configs):
        reference = compute_reference(config)
        n = trajectories_to_threshold(config, reference, threshold, replicates, start, cap, workers)
        required.append(n)
        logger.info(f"{name}_point", **{variable: value}, trajectories=n, exceeded=n is None)

    counts = [math.inf if n is None else n for n in required]
    result = StudyResult(
        name=name,
        variable=variable,
        values=list(values),
        metrics={"trajectories": required, "exceeded": [n is None for n in required]},
        notes={"threshold": threshold, "replicates": max(replicates, MIN_REPLICATES), "cap": cap},
    )
    return result, counts


def study_trajectory_scaling(
    base: SimulationConfig,
    deltas: Optional[Sequence[float]] = None,
    threshold: Optional[float] = None,
    replicates: int = MIN_REPLICATES,
    workers: Optional[int] = None,
) -> StudyResult:
    """
    Trajectories needed to reach `threshold` relative L2 error for each delta.

    Reports monotonicity of N(delta) and the slope of log N vs delta over the
    points that stayed under the cap.
    """
    deltas = list(deltas if deltas is not None else base.study.deltas)
    threshold = threshold if threshold is not None else base.study.threshold
    if len(deltas) < MIN_FIT_POINTS:
        raise InsufficientPointsError(f"trajectory study needs at least {MIN_FIT_POINTS} deltas, got {len(deltas)}")
    configs = [base.with_updates(run={"delta": float(d)}) for d in deltas]
    result, counts = _threshold_sweep(
        "ntraj", "delta", deltas, configs, threshold, replicates,
        base.study.start_trajectories, base.study.max_trajectories, workers,
    )
    result.notes["monotone"] = all(a <= b for a, b in zip(counts, counts[1:]))
    finite = [(d, c) for d, c in zip(deltas, counts) if math.isfinite(c)]
    if len(finite) >= MIN_FIT_POINTS:
        result.fit = fit_slope([d for d, _ in finite], np.log([c for _, c in finite]))
    else:
        logger.warning("ntraj_fit_skipped", finite_points=len(finite))
    return result


def avoided_crossing_config(base: SimulationConfig, eps: float) -> SimulationConfig:
    """
    Avoided-crossing member of the family: delta = sqrt(eps), alpha = 1/(2 eps),
    center -2 sqrt(eps), momentum 2, T = 3 sqrt(eps), on a domain of
    +-16 sqrt(eps) resolving the eps-scale oscillation.
    """
    root = math.sqrt(eps)
    half = 16.0 * root
    # dx <= eps / 2 keeps several points per wavelength 2 pi eps / p
    n = 1 << int(math.ceil(math.log2(2.0 * half / (0.5 * eps))))
    return base.with_updates(
        potential={"model": "simple", "params": {}},
        packet={"center": [-2.0 * root], "momentum": [2.0], "alpha": 1.0 / (2.0 * eps), "prefactor": 1.0},
        run={"eps": eps, "delta": root, "final_time": 3.0 * root, "dt": None},
        grid={"lower": -half, "upper": half, "n": max(n, 256)},
        reference={"enabled": True},
        output={"name": f"{base.output.name}_eps{eps:g}"},
    )


def study_avoided_crossing(
    base: SimulationConfig,
    eps_values: Optional[Sequence[float]] = None,
    threshold: Optional[float] = None,
    replicates: int = MIN_REPLICATES,
    workers: Optional[int] = None,
) -> StudyResult:
    """
    Trajectories needed to reach `threshold` across the avoided-crossing family.

    The spread max N / min N is reported; it stays small when the method is
    uniform in eps.
    """
    eps_values = list(eps_values if eps_values is not None else base.study.eps_values)
    threshold = threshold if threshold is not None else base.study.threshold
    if len(eps_values) < MIN_FIT_POINTS:
        raise InsufficientPointsError(f"avoided-crossing study needs at least {MIN_FIT_POINTS} eps values, got {len(eps_values)}")
    configs = [avoided_crossing_config(base, eps) for eps in eps_values]
    result, counts = _threshold_sweep(
        "avoided", "eps", eps_values, configs, threshold, replicates,
        base.study.start_trajectories, base.study.max_trajectories, workers,
    )
    finite = [c for c in counts if math.isfinite(c)]
    result.notes["spread"] = max(finite) / min(finite) if finite else None
    if len(finite) >= MIN_FIT_POINTS:
        result.fit = fit_slope(np.log(eps_values), np.log(counts))
    return result
