# fga_sh/oracle.py
"""
Deterministic quadrature for the zero- and one-hop terms of the
surface-hopping ansatz.

    n = 0:  (2 pi eps)^{-3m/2} ∫ A_T exp(i Theta_T / eps) dq0 dp0      (surface 0)
    n = 1:  (-i delta / eps) (2 pi eps)^{-3m/2}
            ∫_0^T dt1 ∫ V10(Q_t1) A_T exp(i Theta_T / eps) dq0 dp0     (0 -> 1 at t1)

The phase-space integral is the midpoint rule on the amplitude table; the
t1 integral is the composite trapezoid on the engine's own time grid, so the
trajectory segments match the stochastic runs exactly.
"""
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import structlog

from fga_sh.core import evolve_batch, initial_state, time_grid
from fga_sh.errors import ContractError, UnsupportedHopCountError
from fga_sh.initial_data import AmplitudeTable, GaussianWavePacket, amplitude_table_for_packet
from fga_sh.potentials import CallablePotential, DiabaticPotential
from fga_sh.reconstruction import superpose
from fga_sh.rules import default_time_step
from fga_sh.utils import WaveFunctionGrid

logger = structlog.get_logger()

MIN_TIME_NODES = 64


@dataclass(frozen=True)
class QuadratureSpec:
    """
    Resolutions for the deterministic terms.

    Attributes:
        grid: Output grid layout (values are ignored)
        table_resolution: Cells per phase-space axis
        time_nodes: Minimum number of t1 nodes (at least 64)
        dt: Trajectory step; defaults to eps / 10
        batch_size: Trajectories evolved per vectorized batch
    """

    grid: WaveFunctionGrid
    table_resolution: int = 128
    time_nodes: int = MIN_TIME_NODES
    dt: Optional[float] = None
    batch_size: int = 65536

    def step(self, eps: float) -> float:
        return self.dt if self.dt is not None else default_time_step(eps)


@dataclass
class AnsatzTerm:
    hop_count: int
    grid: WaveFunctionGrid


def _support(table: AmplitudeTable):
    mask = table.support_mask()
    return table.q0[mask], table.p0[mask], table.a0[mask]


def _no_hop_sum(
    table: AmplitudeTable,
    potential: DiabaticPotential,
    eps: float,
    final_time: float,
    quad: QuadratureSpec,
) -> np.ndarray:
    q0, p0, a0 = _support(table)
    prefactor = table.cell_volume / (2.0 * math.pi * eps) ** (1.5 * table.dimension)
    out = np.zeros(quad.grid.shape, dtype=complex)
    for lo in range(0, a0.size, quad.batch_size):
        sl = slice(lo, lo + quad.batch_size)
        records = evolve_batch(
            initial_state(q0[sl], p0[sl], a0[sl]),
            potential,
            final_time=final_time,
            dt=quad.step(eps),
            delta=0.0,
            eps=eps,
        )
        values = np.array([complex(r.final_state.A) for r in records])
        out += _sum_records(records, quad.grid, eps, values)
    return prefactor * out


def _sum_records(records, grid: WaveFunctionGrid, eps: float, values: np.ndarray) -> np.ndarray:
    q = np.stack([r.final_state.Q for r in records])
    p = np.stack([r.final_state.P for r in records])
    s = np.array([float(r.final_state.S) for r in records])
    return superpose(grid, q, p, s, values, eps)


def _one_hop_sum(
    table: AmplitudeTable,
    potential: DiabaticPotential,
    delta: float,
    eps: float,
    final_time: float,
    quad: QuadratureSpec,
) -> np.ndarray:
    q0, p0, a0 = _support(table)
    n_steps, _ = time_grid(final_time, quad.step(eps))
    n_steps = max(n_steps, max(quad.time_nodes, MIN_TIME_NODES) - 1)
    h = final_time / n_steps
    # trapezoid weights over t1 = k h, k = 0..n_steps
    t_weights = np.full(n_steps + 1, h)
    t_weights[0] = t_weights[-1] = 0.5 * h

    cells = a0.size
    nodes_per_batch = max(1, quad.batch_size // max(cells, 1))
    out = np.zeros(quad.grid.shape, dtype=complex)
    for first in range(0, n_steps + 1, nodes_per_batch):
        nodes = np.arange(first, min(first + nodes_per_batch, n_steps + 1))
        schedule = np.repeat(nodes, cells)
        records = evolve_batch(
            initial_state(np.tile(q0, (nodes.size, 1)), np.tile(p0, (nodes.size, 1)), np.tile(a0, nodes.size)),
            potential,
            final_time=final_time,
            dt=h,
            delta=delta,
            eps=eps,
            hop_schedule=schedule,
        )
        weights = t_weights[schedule]
        values = np.array([w * r.hops[0].coupling_value * complex(r.final_state.A) for w, r in zip(weights, records)])
        out += _sum_records(records, quad.grid, eps, values)
        logger.debug("oracle_nodes_done", done=int(nodes[-1]) + 1, total=n_steps + 1)
    prefactor = (-1j * delta / eps) * table.cell_volume / (2.0 * math.pi * eps) ** (1.5 * table.dimension)
    return prefactor * out


def fga_term(
    n: int,
    packet: GaussianWavePacket,
    potential: DiabaticPotential,
    delta: float,
    eps: float,
    final_time: float,
    quad: QuadratureSpec,
    table: Optional[AmplitudeTable] = None,
) -> AnsatzTerm:
    """
    Deterministic n-hop term of the ansatz for n in {0, 1}.

    Args:
        n: Hop count
        packet: Initial wave packet on surface 0
        potential: Matrix potential
        delta: Coupling scale
        eps: Semiclassical parameter
        final_time: Final time T
        quad: Quadrature resolutions and output grid
        table: Precomputed amplitude table (built from the packet otherwise)

    Returns:
        AnsatzTerm; n = 0 fills u0 only, n = 1 fills u1 only
    """
    if n not in (0, 1):
        raise UnsupportedHopCountError(f"deterministic terms exist for 0 or 1 hops only, got {n}")
    if not eps > 0:
        raise ContractError(f"eps must be positive, got {eps}")
    if table is None:
        table = amplitude_table_for_packet(packet, eps, resolution=quad.table_resolution)

    grid = quad.grid.with_components(None, None, t=final_time, eps=eps)
    if n == 0:
        grid.u0 = _no_hop_sum(table, potential, eps, final_time, quad)
    elif delta != 0.0:
        grid.u1 = _one_hop_sum(table, potential, delta, eps, final_time, quad)
    logger.info("oracle_term_done", hops=n, delta=delta, eps=eps, final_time=final_time)
    return AnsatzTerm(hop_count=n, grid=grid)


def scalar_fga(
    packet: GaussianWavePacket,
    surface: Callable,
    grad: Callable,
    hess: Callable,
    eps: float,
    final_time: float,
    quad: QuadratureSpec,
    table: Optional[AmplitudeTable] = None,
) -> WaveFunctionGrid:
    """
    Frozen Gaussian approximation for a single scalar surface.

    Args:
        packet: Initial wave packet
        surface, grad, hess: Scalar potential and its analytic derivatives
        eps: Semiclassical parameter
        final_time: Final time T
        quad: Quadrature resolutions and output grid

    Returns:
        Grid with the scalar solution in u0 and u1 = 0
    """
    scalar = CallablePotential(
        dimension=packet.dimension,
        v00=surface,
        v11=surface,
        grad00=grad,
        grad11=grad,
        hess00=hess,
        hess11=hess,
        name="scalar",
    )
    return fga_term(0, packet, scalar, 0.0, eps, final_time, quad, table).grid
