# fga_sh/initial_data.py
"""
Initial frozen Gaussian amplitudes.

Every trajectory starts from a phase-space point (q0, p0) carrying

    A0(q0, p0) = 2^{m/2} ∫ u0(y) exp((i/eps)(-p0·(y-q0) + (i/2)|y-q0|^2)) dy

Points are drawn from |A0| tabulated on a tensor-product (q0, p0) box, and
the phase-space integral of |A0| gives the estimator's normalization C_N.
"""
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import structlog

from fga_sh.errors import ContractError, EmptySupportError

logger = structlog.get_logger()

# the e^{-|y-q0|^2/(2 eps)} factor is below this outside the quadrature window
QUADRATURE_CUTOFF = 1e-16
# relative |A0| below which a cell is left out of the sampler support
SUPPORT_THRESHOLD = 1e-6
# relative |A0| on the boundary of an adaptive packet box
BOX_EDGE_LEVEL = 1e-10


@dataclass(frozen=True, eq=False)
class GaussianWavePacket:
    """
    u0(x) = prefactor * exp(-alpha |x - center|^2) * exp((i/eps) momentum·(x - center)).
    """

    center: np.ndarray
    alpha: float
    momentum: np.ndarray
    prefactor: complex = 1.0

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        momentum = np.atleast_1d(np.asarray(self.momentum, dtype=float))
        if center.shape != momentum.shape or center.ndim != 1:
            raise ContractError("packet center and momentum must be vectors of equal length")
        if not self.alpha > 0:
            raise ContractError(f"packet width exponent alpha must be positive, got {self.alpha}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "momentum", momentum)

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def evaluate(self, x: np.ndarray, eps: float) -> np.ndarray:
        """Packet values at positions of shape (..., m)."""
        dx = np.asarray(x, dtype=float) - self.center
        envelope = np.exp(-self.alpha * np.sum(dx**2, axis=-1))
        phase = np.exp(1j * (dx @ self.momentum) / eps)
        return self.prefactor * envelope * phase

    def as_function(self, eps: float) -> Callable[[np.ndarray], np.ndarray]:
        return lambda x: self.evaluate(x, eps)

    def l2_norm(self) -> float:
        """Exact L2 norm: |c| (pi / (2 alpha))^{m/4}."""
        return abs(self.prefactor) * (math.pi / (2.0 * self.alpha)) ** (self.dimension / 4.0)

    def amplitude_decay_rates(self, eps: float) -> Tuple[float, float]:
        """
        Decay rates (kq, kp) with |A0| ∝ exp(-kq |q0-center|^2 - kp |p0-momentum|^2).
        """
        spread = 1.0 + 2.0 * self.alpha * eps
        return self.alpha / spread, 1.0 / (2.0 * eps * spread)


def _check_eps(eps: float) -> None:
    if not eps > 0:
        raise ContractError(f"semiclassical parameter eps must be positive, got {eps}")


def quadrature_window(eps: float, nodes_per_scale: int = 32) -> Tuple[float, int]:
    """
    Half-width and node count of the A0 quadrature window.

    Returns:
        (radius, nodes) such that exp(-radius^2 / (2 eps)) = QUADRATURE_CUTOFF and
        the spacing is at most sqrt(eps) / nodes_per_scale
    """
    _check_eps(eps)
    if nodes_per_scale < 16:
        raise ContractError("A0 quadrature needs at least 16 nodes per sqrt(eps)")
    radius = math.sqrt(-2.0 * eps * math.log(QUADRATURE_CUTOFF))
    nodes = int(math.ceil(2.0 * radius * nodes_per_scale / math.sqrt(eps))) + 1
    return radius, nodes


def compute_a0_many(
    u0: Callable[[np.ndarray], np.ndarray],
    q0: np.ndarray,
    p0: np.ndarray,
    eps: float,
    nodes_per_scale: int = 32,
    chunk: int = 256,
) -> np.ndarray:
    """
    Trapezoidal A0 for many phase-space points.

    Args:
        u0: Initial wave function, positions (..., m) -> complex (...)
        q0: Positions, shape (K, m)
        p0: Momenta, shape (K, m)
        eps: Semiclassical parameter
        nodes_per_scale: Quadrature nodes per sqrt(eps) length
        chunk: Points evaluated per vectorized block

    Returns:
        Complex array of shape (K,)
    """
    radius, nodes = quadrature_window(eps, nodes_per_scale)
    q0 = np.atleast_2d(np.asarray(q0, dtype=float))
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    m = q0.shape[-1]
    offsets_1d = np.linspace(-radius, radius, nodes)
    h = offsets_1d[1] - offsets_1d[0]
    weights_1d = np.full(nodes, h)
    weights_1d[[0, -1]] *= 0.5

    offsets = np.stack(np.meshgrid(*([offsets_1d] * m), indexing="ij"), axis=-1).reshape(-1, m)
    weights = np.prod(np.stack(np.meshgrid(*([weights_1d] * m), indexing="ij"), axis=-1), axis=-1).ravel()
    gauss = np.exp(-np.sum(offsets**2, axis=-1) / (2.0 * eps)) * weights

    # keep each block around 4M complex values
    chunk = max(1, min(chunk, (1 << 22) // offsets.shape[0]))
    out = np.empty(q0.shape[0], dtype=complex)
    for start in range(0, q0.shape[0], chunk):
        qs = q0[start:start + chunk]
        ps = p0[start:start + chunk]
        y = qs[:, None, :] + offsets[None, :, :]
        phase = np.exp(-1j * (ps @ offsets.T) / eps)
        out[start:start + chunk] = np.sum(u0(y) * phase * gauss, axis=-1)
    return 2.0 ** (m / 2.0) * out


def compute_a0_quadrature(
    u0: Callable[[np.ndarray], np.ndarray],
    q0,
    p0,
    eps: float,
    nodes_per_scale: int = 32,
) -> complex:
    """
    Numerical A0 at a single phase-space point.

    Args:
        u0: Initial wave function, positions (..., m) -> complex (...)
        q0: Position vector of length m
        p0: Momentum vector of length m
        eps: Semiclassical parameter

    Returns:
        Complex amplitude
    """
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    if q0.shape != p0.shape:
        raise ContractError("q0 and p0 must have the same length")
    return complex(compute_a0_many(u0, q0[None], p0[None], eps, nodes_per_scale)[0])


def analytic_a0_gaussian(packet: GaussianWavePacket, q0, p0, eps: float) -> np.ndarray:
    """
    Closed-form A0 for a Gaussian packet.

    Broadcasts over leading axes of q0 and p0 (trailing axis m).
    """
    _check_eps(eps)
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    m = packet.dimension
    dq = q0 - packet.center
    a = packet.alpha + 1.0 / (2.0 * eps)
    b = dq / eps + 1j * (packet.momentum - p0) / eps
    c = -dq**2 / (2.0 * eps) + 1j * p0 * dq / eps
    exponent = np.sum(b**2 / (4.0 * a) + c, axis=-1)
    scale = packet.prefactor * 2.0 ** (m / 2.0) * (math.pi / a) ** (m / 2.0)
    return scale * np.exp(exponent)


@dataclass(frozen=True, eq=False)
class AmplitudeTable:
    """
    A0 tabulated at the cell centers of a tensor-product (q0, p0) box.

    q0, p0 have shape (K, m); a0 has shape (K,) where K = prod(shape).
    """

    q0: np.ndarray
    p0: np.ndarray
    a0: np.ndarray
    cell_volume: float
    shape: Tuple[int, ...]
    eps: float
    q_bounds: np.ndarray = field(repr=False, default=None)
    p_bounds: np.ndarray = field(repr=False, default=None)

    @property
    def dimension(self) -> int:
        return self.q0.shape[-1]

    @property
    def normalization(self) -> float:
        return normalization_constant(self, self.eps)

    def support_mask(self) -> np.ndarray:
        mags = np.abs(self.a0)
        peak = mags.max() if mags.size else 0.0
        if peak == 0.0:
            return np.zeros(mags.shape, dtype=bool)
        return mags >= SUPPORT_THRESHOLD * peak

    def boundary_ratio(self) -> float:
        """Largest boundary |A0| relative to the table maximum."""
        mags = np.abs(self.a0).reshape(self.shape)
        peak = mags.max()
        if peak == 0.0:
            return 0.0
        edge = 0.0
        for axis in range(mags.ndim):
            edge = max(edge, np.take(mags, 0, axis=axis).max(), np.take(mags, -1, axis=axis).max())
        return float(edge / peak)


def _cell_centers(bounds: np.ndarray, resolution: int) -> Tuple[list, np.ndarray]:
    axes = []
    widths = []
    for lower, upper in bounds:
        h = (upper - lower) / resolution
        axes.append(lower + (np.arange(resolution) + 0.5) * h)
        widths.append(h)
    return axes, np.asarray(widths)


def build_amplitude_table(
    a0_func: Callable[[np.ndarray, np.ndarray], np.ndarray],
    q_bounds,
    p_bounds,
    eps: float,
    resolution: int = 128,
) -> AmplitudeTable:
    """
    Tabulate A0 on a (q0, p0) box.

    Args:
        a0_func: Maps (q0 (K, m), p0 (K, m)) to complex A0 (K,)
        q_bounds: Array of shape (m, 2) with [lower, upper] per position axis
        p_bounds: Array of shape (m, 2) with [lower, upper] per momentum axis
        eps: Semiclassical parameter
        resolution: Cells per axis

    Returns:
        AmplitudeTable
    """
    _check_eps(eps)
    if resolution < 2:
        raise ContractError("amplitude table needs at least 2 cells per axis")
    q_bounds = np.atleast_2d(np.asarray(q_bounds, dtype=float))
    p_bounds = np.atleast_2d(np.asarray(p_bounds, dtype=float))
    if q_bounds.shape != p_bounds.shape or q_bounds.shape[-1] != 2:
        raise ContractError("q_bounds and p_bounds must both have shape (m, 2)")
    m = q_bounds.shape[0]

    q_axes, q_widths = _cell_centers(q_bounds, resolution)
    p_axes, p_widths = _cell_centers(p_bounds, resolution)
    mesh = np.meshgrid(*(q_axes + p_axes), indexing="ij")
    points = np.stack(mesh, axis=-1).reshape(-1, 2 * m)
    q0 = points[:, :m]
    p0 = points[:, m:]
    a0 = np.asarray(a0_func(q0, p0), dtype=complex)
    table = AmplitudeTable(
        q0=q0,
        p0=p0,
        a0=a0,
        cell_volume=float(np.prod(q_widths) * np.prod(p_widths)),
        shape=(resolution,) * (2 * m),
        eps=eps,
        q_bounds=q_bounds,
        p_bounds=p_bounds,
    )

    edge = table.boundary_ratio()
    if edge >= SUPPORT_THRESHOLD:
        logger.warning("amplitude_table_box_too_small", boundary_ratio=edge)
    logger.debug("amplitude_table_built", cells=a0.size, boundary_ratio=edge)
    return table


def packet_box(packet: GaussianWavePacket, eps: float, edge_level: float = BOX_EDGE_LEVEL) -> Tuple[np.ndarray, np.ndarray]:
    """
    Adaptive (q0, p0) box around (center, momentum) where |A0| on the edge
    equals edge_level times its peak.
    """
    kq, kp = packet.amplitude_decay_rates(eps)
    half_q = math.sqrt(-math.log(edge_level) / kq)
    half_p = math.sqrt(-math.log(edge_level) / kp)
    q_bounds = np.stack([packet.center - half_q, packet.center + half_q], axis=-1)
    p_bounds = np.stack([packet.momentum - half_p, packet.momentum + half_p], axis=-1)
    return q_bounds, p_bounds


def amplitude_table_for_packet(
    packet: GaussianWavePacket,
    eps: float,
    resolution: int = 128,
    q_bounds=None,
    p_bounds=None,
    analytic: bool = True,
    nodes_per_scale: int = 32,
) -> AmplitudeTable:
    """
    Amplitude table for a Gaussian packet, with an adaptive box unless bounds are given.

    Args:
        packet: Initial wave packet
        eps: Semiclassical parameter
        resolution: Cells per axis
        q_bounds: Optional (m, 2) position box
        p_bounds: Optional (m, 2) momentum box
        analytic: Use the closed form instead of quadrature

    Returns:
        AmplitudeTable
    """
    if q_bounds is None or p_bounds is None:
        auto_q, auto_p = packet_box(packet, eps)
        q_bounds = auto_q if q_bounds is None else q_bounds
        p_bounds = auto_p if p_bounds is None else p_bounds

    if analytic:
        a0_func = lambda q, p: analytic_a0_gaussian(packet, q, p, eps)
    else:
        u0 = packet.as_function(eps)
        a0_func = lambda q, p: compute_a0_many(u0, q, p, eps, nodes_per_scale)
    return build_amplitude_table(a0_func, q_bounds, p_bounds, eps, resolution)


def normalization_constant(table: AmplitudeTable, eps: float) -> float:
    """C_N = (2 pi eps)^{-3m/2} * sum |A0| * cell volume."""
    _check_eps(eps)
    m = table.dimension
    total = float(np.sum(np.abs(table.a0))) * table.cell_volume
    return total / (2.0 * math.pi * eps) ** (1.5 * m)


class PhaseSpaceSampler:
    """
    Draws table cells with probability ∝ |A0| * cell volume (inverse CDF).

    Each sampler owns its RNG state; give every worker its own sampler or
    feed it uniforms from a per-trajectory stream via from_uniform.
    """

    def __init__(self, table: AmplitudeTable, seed: Optional[int] = None):
        mask = table.support_mask()
        if not mask.any():
            raise EmptySupportError("amplitude table has no cell above the support threshold")
        self.table = table
        self.indices = np.flatnonzero(mask)
        weights = np.abs(table.a0[self.indices]) * table.cell_volume
        cdf = np.cumsum(weights)
        self.cdf = cdf / cdf[-1]
        self.rng = np.random.Generator(np.random.Philox(seed))

    @property
    def support_size(self) -> int:
        return self.indices.size

    def cells_from_uniform(self, u) -> np.ndarray:
        """Map uniforms in [0, 1) to table cell indices."""
        pos = np.searchsorted(self.cdf, np.asarray(u, dtype=float), side="right")
        return self.indices[np.minimum(pos, self.indices.size - 1)]

    def from_uniform(self, u) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Args:
            u: Uniforms, shape (n,)

        Returns:
            (q0 (n, m), p0 (n, m), a0 (n,)) at the chosen cell centers
        """
        cells = self.cells_from_uniform(u)
        return self.table.q0[cells], self.table.p0[cells], self.table.a0[cells]

    def sample(self, size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.from_uniform(self.rng.random(size))


def build_sampler(table: AmplitudeTable, seed: Optional[int] = None) -> PhaseSpaceSampler:
    """Sampler over |A0|, deterministic for a given seed."""
    return PhaseSpaceSampler(table, seed)
