# fga_sh/reconstruction.py
"""
Trajectory-average reconstruction of the two-component wave function.

Each record contributes C_N * weight * exp(i Theta(x) / eps) to the component
picked by its hop-count parity, with

    Theta(x) = S + P.(x - Q) + i/2 |x - Q|^2

evaluated at the record's final state. Bumps are cut off at 8 sqrt(eps)
from Q, where |exp(i Theta / eps)| < e^{-32}.
"""
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Union

import numpy as np
import structlog

from fga_sh.core import TrajectoryRecord
from fga_sh.errors import ContractError, DegenerateWeightError, EmptyEnsembleError
from fga_sh.rules import RateModel
from fga_sh.utils import WaveFunctionGrid

logger = structlog.get_logger()

TRUNCATION_RADIUS = 8.0
# records per vectorized window in superpose
SUPERPOSE_BLOCK = 4096


@dataclass(frozen=True)
class GaussianKernel:
    """Frozen Gaussian exp(i Theta / eps) carried by one trajectory."""

    Q: np.ndarray
    P: np.ndarray
    S: float

    @classmethod
    def from_record(cls, record: TrajectoryRecord) -> "GaussianKernel":
        state = record.final_state
        return cls(Q=np.asarray(state.Q, dtype=float), P=np.asarray(state.P, dtype=float), S=float(np.real(state.S)))

    def theta(self, x: np.ndarray) -> np.ndarray:
        """Complex phase Theta at points x of shape (..., m)."""
        d = np.asarray(x, dtype=float) - self.Q
        return self.S + np.sum(self.P * d, axis=-1) + 0.5j * np.sum(d * d, axis=-1)

    def evaluate(self, x: np.ndarray, eps: float) -> np.ndarray:
        return np.exp(1j * self.theta(x) / eps)


@dataclass(frozen=True)
class TrajectoryWeight:
    """x-independent part of a record's contribution and its target component."""

    value: complex
    parity: int


def trajectory_weight(
    record: TrajectoryRecord,
    delta: Optional[float] = None,
    eps: Optional[float] = None,
) -> TrajectoryWeight:
    """
    Weight (-i)^n prod(V_j / |V_j|) A_T / |A_0| exp(∫ lambda) of one record.

    Under the gap-modified rate each hop also carries (delta/eps)|V_j| / lambda_j.

    Args:
        record: Completed trajectory
        delta: Coupling scale (defaults to the record's)
        eps: Semiclassical parameter (defaults to the record's)

    Returns:
        TrajectoryWeight; parity 0 for even hop counts, 1 for odd
    """
    delta = record.delta if delta is None else delta
    eps = record.eps if eps is None else eps
    a0 = abs(record.initial_a)
    if a0 == 0.0:
        raise DegenerateWeightError(f"trajectory {record.seed_tag} has zero initial amplitude")

    n = record.hop_count
    value = (-1j) ** n
    for hop in record.hops:
        if hop.coupling_magnitude == 0.0:
            # zero coupling at the hop point: the path carries no amplitude
            value = 0.0
            break
        value *= hop.coupling_value / hop.coupling_magnitude
        if record.rate_model is RateModel.GAP_MODIFIED:
            value *= (delta / eps) * hop.coupling_magnitude / hop.rate

    a_t = complex(np.asarray(record.final_state.A).reshape(-1)[0])
    value = value * a_t / a0 * math.exp(record.rate_integral)
    return TrajectoryWeight(value=complex(value), parity=n % 2)


@dataclass
class EstimatorAccumulator:
    """
    Streaming mean and variance of the per-point trajectory contributions.

    Chunks report sums and sums of squared moduli; chunks are combined with
    the pairwise mean/M2 update, so any merge order gives the same result up
    to floating-point reassociation.
    """

    shape: tuple
    count: int = 0
    mean0: np.ndarray = None
    mean1: np.ndarray = None
    m2_0: np.ndarray = None
    m2_1: np.ndarray = None
    hop_histogram: Counter = field(default_factory=Counter)

    def __post_init__(self):
        self.shape = tuple(self.shape)
        if self.mean0 is None:
            self.mean0 = np.zeros(self.shape, dtype=complex)
            self.mean1 = np.zeros(self.shape, dtype=complex)
            self.m2_0 = np.zeros(self.shape)
            self.m2_1 = np.zeros(self.shape)

    @classmethod
    def for_grid(cls, grid: WaveFunctionGrid) -> "EstimatorAccumulator":
        return cls(shape=grid.shape)

    def add_sums(self, count: int, sum0, sumsq0, sum1, sumsq1, hop_counts: Iterable[int] = ()) -> None:
        """Fold in a chunk given its sums and sums of |contribution|^2."""
        if count <= 0:
            return
        mean0 = sum0 / count
        mean1 = sum1 / count
        m2_0 = np.maximum(sumsq0 - count * np.abs(mean0) ** 2, 0.0)
        m2_1 = np.maximum(sumsq1 - count * np.abs(mean1) ** 2, 0.0)
        chunk = EstimatorAccumulator(self.shape, count, mean0, mean1, m2_0, m2_1, Counter(hop_counts))
        self.merge(chunk)

    def merge(self, other: "EstimatorAccumulator") -> "EstimatorAccumulator":
        """Combine another accumulator into this one (in place) and return self."""
        if other.shape != self.shape:
            raise ContractError(f"cannot merge accumulators of shapes {self.shape} and {other.shape}")
        if other.count == 0:
            return self
        if self.count == 0:
            self.count = other.count
            self.mean0, self.mean1 = other.mean0.copy(), other.mean1.copy()
            self.m2_0, self.m2_1 = other.m2_0.copy(), other.m2_1.copy()
            self.hop_histogram.update(other.hop_histogram)
            return self
        n_a, n_b = self.count, other.count
        n = n_a + n_b
        for mean_name, m2_name in (("mean0", "m2_0"), ("mean1", "m2_1")):
            mean_a, mean_b = getattr(self, mean_name), getattr(other, mean_name)
            diff = mean_b - mean_a
            setattr(self, mean_name, mean_a + diff * (n_b / n))
            setattr(self, m2_name, getattr(self, m2_name) + getattr(other, m2_name) + np.abs(diff) ** 2 * (n_a * n_b / n))
        self.count = n
        self.hop_histogram.update(other.hop_histogram)
        return self

    def mean(self, component: int) -> np.ndarray:
        return self.mean0 if component == 0 else self.mean1

    def stderr(self, component: int) -> np.ndarray:
        """Standard error of the mean at every grid point."""
        if self.count < 2:
            return np.zeros(self.shape)
        m2 = self.m2_0 if component == 0 else self.m2_1
        return np.sqrt(m2 / (self.count - 1) / self.count)

    @property
    def total_hops(self) -> int:
        return sum(k * v for k, v in self.hop_histogram.items())

    def to_grid(self, grid: WaveFunctionGrid, normalization: float) -> WaveFunctionGrid:
        """Scaled estimate on `grid` with per-point standard errors."""
        if self.count == 0:
            raise EmptyEnsembleError("no trajectories were accumulated")
        out = grid.with_components(normalization * self.mean0, normalization * self.mean1)
        out.stderr0 = normalization * self.stderr(0)
        out.stderr1 = normalization * self.stderr(1)
        return out


def _deposit_1d(grid: WaveFunctionGrid, q, p, s, values, parity, eps, sums, sumsqs) -> None:
    radius = TRUNCATION_RADIUS * math.sqrt(eps)
    dx = grid.spacing
    width = int(math.ceil(2.0 * radius / dx)) + 2
    start = np.floor((q - radius - grid.lower) / dx).astype(int)
    idx = start[:, None] + np.arange(width)[None, :]
    x = grid.lower + idx * dx
    d = x - q[:, None]
    valid = (idx >= 0) & (idx < grid.n) & (np.abs(d) <= radius)
    phase = (s[:, None] + p[:, None] * d + 0.5j * d * d) / eps
    contrib = values[:, None] * np.exp(1j * phase)
    for component in (0, 1):
        mask = valid & (parity[:, None] == component)
        if mask.any():
            np.add.at(sums[component], idx[mask], contrib[mask])
            np.add.at(sumsqs[component], idx[mask], np.abs(contrib[mask]) ** 2)


def _deposit_nd(grid: WaveFunctionGrid, q, p, s, values, parity, eps, sums, sumsqs) -> None:
    radius = TRUNCATION_RADIUS * math.sqrt(eps)
    dx = grid.spacing
    axis = grid.axis
    for b in range(q.shape[0]):
        lo = np.clip(np.floor((q[b] - radius - grid.lower) / dx).astype(int), 0, grid.n)
        hi = np.clip(np.ceil((q[b] + radius - grid.lower) / dx).astype(int) + 1, 0, grid.n)
        if np.any(hi <= lo):
            continue
        window = tuple(slice(l, h) for l, h in zip(lo, hi))
        mesh = np.stack(np.meshgrid(*[axis[w] for w in window], indexing="ij"), axis=-1)
        d = mesh - q[b]
        r2 = np.sum(d * d, axis=-1)
        theta = s[b] + np.sum(p[b] * d, axis=-1) + 0.5j * r2
        contrib = np.where(r2 <= radius**2, values[b] * np.exp(1j * theta / eps), 0.0)
        component = int(parity[b])
        sums[component][window] += contrib
        sumsqs[component][window] += np.abs(contrib) ** 2


def superpose(grid: WaveFunctionGrid, q, p, s, values, eps: float) -> np.ndarray:
    """
    sum_b values[b] exp(i Theta_b(x) / eps) on the grid, each bump truncated.

    Args:
        q, p: Centers and momenta, shape (B, m)
        s: Actions, shape (B,)
        values: Complex coefficients, shape (B,)
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    values = np.asarray(values, dtype=complex)
    sums = [np.zeros(grid.shape, dtype=complex), np.zeros(grid.shape, dtype=complex)]
    sumsqs = [np.zeros(grid.shape), np.zeros(grid.shape)]
    for lo in range(0, q.shape[0], SUPERPOSE_BLOCK):
        sl = slice(lo, lo + SUPERPOSE_BLOCK)
        parity = np.zeros(values[sl].shape[0], dtype=int)
        if grid.dimension == 1:
            _deposit_1d(grid, q[sl, 0], p[sl, 0], s[sl], values[sl], parity, eps, sums, sumsqs)
        else:
            _deposit_nd(grid, q[sl], p[sl], s[sl], values[sl], parity, eps, sums, sumsqs)
    return sums[0]


def deposit(
    records: Sequence[TrajectoryRecord],
    grid: WaveFunctionGrid,
    accumulator: EstimatorAccumulator,
    delta: Optional[float] = None,
    eps: Optional[float] = None,
    max_hops: Optional[int] = None,
) -> EstimatorAccumulator:
    """
    Add a chunk of records to `accumulator`.

    Records with more than max_hops hops count towards N but contribute zero,
    which evaluates the hop-truncated series.
    """
    if not records:
        return accumulator
    eps = records[0].eps if eps is None else eps
    weights = [trajectory_weight(r, delta, eps) for r in records]
    hop_counts = [r.hop_count for r in records]
    keep = np.array([max_hops is None or n <= max_hops for n in hop_counts])

    q = np.stack([np.asarray(r.final_state.Q, dtype=float) for r in records])
    p = np.stack([np.asarray(r.final_state.P, dtype=float) for r in records])
    s = np.array([float(np.real(r.final_state.S)) for r in records])
    values = np.array([w.value for w in weights]) * keep
    parity = np.array([w.parity for w in weights])
    if q.shape[1] != grid.dimension:
        raise ContractError(f"records have dimension {q.shape[1]}, grid has {grid.dimension}")

    sums = [np.zeros(grid.shape, dtype=complex), np.zeros(grid.shape, dtype=complex)]
    sumsqs = [np.zeros(grid.shape), np.zeros(grid.shape)]
    if grid.dimension == 1:
        _deposit_1d(grid, q[:, 0], p[:, 0], s, values, parity, eps, sums, sumsqs)
    else:
        _deposit_nd(grid, q, p, s, values, parity, eps, sums, sumsqs)

    accumulator.add_sums(len(records), sums[0], sumsqs[0], sums[1], sumsqs[1], hop_counts)
    logger.debug("records_deposited", count=len(records), total=accumulator.count)
    return accumulator


def reconstruct(
    records: Sequence[TrajectoryRecord],
    grid: WaveFunctionGrid,
    normalization: float,
    delta: Optional[float] = None,
    eps: Optional[float] = None,
    max_hops: Optional[int] = None,
) -> WaveFunctionGrid:
    """
    Monte Carlo estimate of (u0, u1) on `grid`.

    Args:
        records: Completed trajectories, all at the same final time
        grid: Target grid (its values are ignored)
        normalization: C_N of the sampled amplitude table
        delta: Coupling scale (defaults to the records')
        eps: Semiclassical parameter (defaults to the records')
        max_hops: Optional hop-count truncation

    Returns:
        New grid with u0, u1 and their standard errors
    """
    if not records:
        raise EmptyEnsembleError("cannot reconstruct from an empty ensemble")
    times = {round(r.final_state.t, 12) for r in records}
    if len(times) != 1:
        raise ContractError(f"records end at different times: {sorted(times)}")
    accumulator = EstimatorAccumulator.for_grid(grid)
    deposit(records, grid, accumulator, delta, eps, max_hops)
    out = accumulator.to_grid(grid, normalization)
    out.t = records[0].final_state.t
    out.eps = records[0].eps if eps is None else eps
    return out


def l2_norm(grid: WaveFunctionGrid, component: Union[int, str] = "both") -> float:
    """Discrete L2 norm, sqrt(dx^m sum |u|^2), of one or both components."""
    if component == "both":
        total = np.sum(np.abs(grid.u0) ** 2) + np.sum(np.abs(grid.u1) ** 2)
    elif component in (0, 1):
        total = np.sum(np.abs(grid.component(component)) ** 2)
    else:
        raise ContractError(f"component must be 0, 1 or 'both', got {component!r}")
    return float(math.sqrt(grid.cell_volume * total))


def l2_error(
    a: WaveFunctionGrid,
    b: WaveFunctionGrid,
    relative: bool = False,
    component: Union[int, str] = "both",
) -> float:
    """
    ||a - b|| on identical grids, optionally divided by ||b||.

    Raises:
        ContractError: if the grids differ or ||b|| = 0 for a relative error
    """
    if not a.same_layout(b):
        raise ContractError(
            f"grid mismatch: [{a.lower}, {a.upper}) n={a.n} vs [{b.lower}, {b.upper}) n={b.n}"
        )
    diff = b.with_components(a.u0 - b.u0, a.u1 - b.u1)
    error = l2_norm(diff, component)
    if not relative:
        return error
    scale = l2_norm(b, component)
    if scale == 0.0:
        raise ContractError("relative error against a zero wave function")
    return error / scale


def component_errors(a: WaveFunctionGrid, b: WaveFunctionGrid) -> Dict[str, float]:
    """Absolute and relative errors per component and combined."""
    out = {}
    for key, component in (("u0", 0), ("u1", 1), ("both", "both")):
        out[f"abs_{key}"] = l2_error(a, b, component=component)
        scale = l2_norm(b, component)
        out[f"rel_{key}"] = out[f"abs_{key}"] / scale if scale > 0 else None
    return out


def l2_stderr(grid: WaveFunctionGrid, component: Union[int, str] = "both") -> float:
    """MC standard error of the reconstruction in L2: sqrt(dx^m sum stderr^2)."""
    parts = []
    if component in (0, "both") and grid.stderr0 is not None:
        parts.append(np.sum(grid.stderr0**2))
    if component in (1, "both") and grid.stderr1 is not None:
        parts.append(np.sum(grid.stderr1**2))
    return float(math.sqrt(grid.cell_volume * sum(parts))) if parts else 0.0


def transition_rate(u_final: WaveFunctionGrid, u0_norm: float) -> float:
    """R = ||u1(T)||^2 / ||u0(0)||^2, with u0_norm the L2 norm of the initial data."""
    if not u0_norm > 0:
        raise ContractError(f"initial norm must be positive, got {u0_norm}")
    return l2_norm(u_final, 1) ** 2 / u0_norm**2


def merge_accumulators(parts: Iterable[EstimatorAccumulator]) -> EstimatorAccumulator:
    """Merge in iteration order into a fresh accumulator."""
    parts = list(parts)
    if not parts:
        raise EmptyEnsembleError("no accumulators to merge")
    total = EstimatorAccumulator(parts[0].shape)
    for part in parts:
        total.merge(part)
    return total
