# fga_sh/reference.py
"""
Time-splitting pseudo-spectral reference solver for

    i eps du/dt = -(eps^2 / 2) d^2u/dx^2 + V(x) u,   V = [[V00, delta V01], [delta V10, V11]]

on a periodic 1-D grid. Each step is half kinetic, full potential, half
kinetic; both substeps are exact, so every step is unitary.
"""
import hashlib
import json
import math
import os
from typing import Dict, Optional, Tuple

import numpy as np
import structlog

from fga_sh import __version__
from fga_sh.errors import BoundaryContaminationError, ContractError
from fga_sh.initial_data import GaussianWavePacket
from fga_sh.potentials import DiabaticPotential
from fga_sh.utils import WaveFunctionGrid, get_cache_dir, is_power_of_two

logger = structlog.get_logger()

# below this rotation angle sin(theta)/|d| switches to its Taylor series
SMALL_ANGLE = 1e-8
GUARD_WIDTH = 10.0
GUARD_LEVEL = 1e-8


def propagator_entries(h00, h11, h01, tau: float, eps: float) -> Tuple[np.ndarray, ...]:
    """
    Entries (m00, m01, m10, m11) of exp(-i tau H / eps) for the Hermitian
    matrices H = [[h00, h01], [conj(h01), h11]], pointwise.

    Uses H = c I + d.sigma, exp(-i tau H / eps) = e^{-i tau c / eps}
    (cos(theta) I - i sin(theta) d.sigma / |d|) with theta = tau |d| / eps.
    """
    h00 = np.asarray(h00, dtype=float)
    h11 = np.asarray(h11, dtype=float)
    h01 = np.asarray(h01, dtype=complex)
    c = 0.5 * (h00 + h11)
    dz = 0.5 * (h00 - h11)
    dx = h01.real
    dy = -h01.imag
    norm = np.sqrt(dx * dx + dy * dy + dz * dz)
    theta = tau * norm / eps
    small = np.abs(theta) < SMALL_ANGLE
    safe = np.where(small, 1.0, norm)
    s = np.where(small, (tau / eps) * (1.0 - theta**2 / 6.0), np.sin(theta) / safe)
    cos = np.cos(theta)
    phase = np.exp(-1j * tau * c / eps)
    m00 = phase * (cos - 1j * s * dz)
    m11 = phase * (cos + 1j * s * dz)
    m01 = phase * (-1j * s * (dx - 1j * dy))
    m10 = phase * (-1j * s * (dx + 1j * dy))
    return m00, m01, m10, m11


def matrix_exponential(h: np.ndarray, tau: float, eps: float) -> np.ndarray:
    """exp(-i tau H / eps) for Hermitian H of shape (..., 2, 2)."""
    h = np.asarray(h, dtype=complex)
    m00, m01, m10, m11 = propagator_entries(h[..., 0, 0].real, h[..., 1, 1].real, h[..., 0, 1], tau, eps)
    return np.stack([np.stack([m00, m01], axis=-1), np.stack([m10, m11], axis=-1)], axis=-2)


def _check_spectral(u: WaveFunctionGrid) -> None:
    if u.dimension != 1:
        raise ContractError("the reference solver is one-dimensional")
    if not is_power_of_two(u.n):
        raise ContractError(f"spectral grid needs a power-of-two point count, got {u.n}")


def _potential_entries(u: WaveFunctionGrid, potential: DiabaticPotential, delta: float, tau: float, eps: float):
    x = u.axis[:, None]
    return propagator_entries(potential.v00(x), potential.v11(x), delta * potential.v01(x), tau, eps)


def _kinetic_factor(u: WaveFunctionGrid, tau: float, eps: float) -> np.ndarray:
    k = 2.0 * math.pi * np.fft.fftfreq(u.n, d=u.spacing)
    return np.exp(-0.5j * tau * eps * k * k)


def _apply_matrix(entries, u0, u1):
    m00, m01, m10, m11 = entries
    return m00 * u0 + m01 * u1, m10 * u0 + m11 * u1


def _apply_kinetic(factor, u0, u1):
    return np.fft.ifft(factor * np.fft.fft(u0)), np.fft.ifft(factor * np.fft.fft(u1))


def potential_step(u: WaveFunctionGrid, potential: DiabaticPotential, delta: float, tau: float, eps: float) -> WaveFunctionGrid:
    """Apply exp(-i tau V(x) / eps) pointwise."""
    _check_spectral(u)
    u0, u1 = _apply_matrix(_potential_entries(u, potential, delta, tau, eps), u.u0, u.u1)
    return u.with_components(u0, u1, t=u.t + tau)


def kinetic_step(u: WaveFunctionGrid, tau: float, eps: float) -> WaveFunctionGrid:
    """Multiply every Fourier mode by exp(-i tau eps k^2 / 2), component-wise."""
    _check_spectral(u)
    u0, u1 = _apply_kinetic(_kinetic_factor(u, tau, eps), u.u0, u.u1)
    return u.with_components(u0, u1, t=u.t + tau)


def boundary_fraction(u: WaveFunctionGrid, eps: float) -> float:
    """Share of the mass within 10 sqrt(eps) of either end of the domain."""
    width = GUARD_WIDTH * math.sqrt(eps)
    x = u.axis
    layer = (x < u.lower + width) | (x > u.upper - width)
    density = np.abs(u.u0) ** 2 + np.abs(u.u1) ** 2
    total = float(np.sum(density))
    if total == 0.0:
        return 0.0
    return float(np.sum(density[layer])) / total


def solve(
    u_in: WaveFunctionGrid,
    potential: DiabaticPotential,
    delta: float,
    final_time: float,
    dt: float,
    eps: float,
    strict: bool = False,
    guard_every: Optional[int] = None,
) -> WaveFunctionGrid:
    """
    Strang-split evolution from u_in over a time span final_time (may be negative).

    Args:
        u_in: Initial grid, 1-D with a power-of-two point count
        potential: Matrix potential
        delta: Coupling scale
        final_time: Time span; negative values integrate backwards
        dt: Maximum step size; the span is cut into ceil(|T| / dt) equal steps
        eps: Semiclassical parameter
        strict: Raise BoundaryContaminationError instead of warning when mass
            reaches the boundary layer
        guard_every: Steps between boundary checks (default: ~50 checks per run)

    Returns:
        Grid at time u_in.t + final_time
    """
    _check_spectral(u_in)
    if not eps > 0:
        raise ContractError(f"eps must be positive, got {eps}")
    if not dt > 0:
        raise ContractError(f"time step must be positive, got {dt}")
    if final_time == 0:
        return u_in.copy()
    n_steps = max(1, int(math.ceil(abs(final_time) / dt - 1e-9)))
    tau = final_time / n_steps
    guard_every = guard_every or max(1, n_steps // 50)

    half = _kinetic_factor(u_in, 0.5 * tau, eps)
    full = half * half
    entries = _potential_entries(u_in, potential, delta, tau, eps)

    u0, u1 = _apply_kinetic(half, u_in.u0, u_in.u1)
    warned = False
    for step in range(n_steps):
        u0, u1 = _apply_matrix(entries, u0, u1)
        last = step == n_steps - 1
        u0, u1 = _apply_kinetic(half if last else full, u0, u1)
        if (step + 1) % guard_every == 0 or last:
            fraction = boundary_fraction(u_in.with_components(u0, u1), eps)
            if fraction >= GUARD_LEVEL:
                if strict:
                    raise BoundaryContaminationError(
                        f"boundary mass fraction {fraction:.3e} at t = {u_in.t + (step + 1) * tau:.6g}"
                    )
                if not warned:
                    logger.warning("boundary_contamination", fraction=fraction, step=step + 1, steps=n_steps)
                    warned = True

    logger.debug("reference_solved", steps=n_steps, tau=tau, n=u_in.n)
    return u_in.with_components(u0, u1, t=u_in.t + final_time, eps=eps)


def packet_grid(packet: GaussianWavePacket, eps: float, lower: float, upper: float, n: int) -> WaveFunctionGrid:
    """Initial data u0 = packet, u1 = 0 sampled on a periodic grid."""
    grid = WaveFunctionGrid(lower=lower, upper=upper, n=n, dimension=packet.dimension, eps=eps)
    grid.u0 = packet.evaluate(grid.points(), eps).astype(complex)
    return grid


def reference_key(provenance: Dict) -> str:
    payload = json.dumps(provenance, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def reference_provenance(
    packet: GaussianWavePacket,
    potential: DiabaticPotential,
    delta: float,
    eps: float,
    final_time: float,
    dt: float,
    lower: float,
    upper: float,
    n: int,
) -> Dict:
    return {
        "potential": potential.describe(),
        "packet": {
            "center": [float(v) for v in packet.center],
            "alpha": float(packet.alpha),
            "momentum": [float(v) for v in packet.momentum],
            "prefactor": [float(np.real(packet.prefactor)), float(np.imag(packet.prefactor))],
        },
        "delta": float(delta),
        "eps": float(eps),
        "final_time": float(final_time),
        "dt": float(dt),
        "grid": {"lower": float(lower), "upper": float(upper), "n": int(n)},
        "solver": "strang-spectral",
        "version": __version__,
    }


def cached_reference(
    packet: GaussianWavePacket,
    potential: DiabaticPotential,
    delta: float,
    eps: float,
    final_time: float,
    dt: float,
    lower: float,
    upper: float,
    n: int,
    cache_dir: Optional[str] = None,
    strict: bool = False,
) -> WaveFunctionGrid:
    """
    Reference solution at final_time, reused from disk when available.

    The cache key hashes the model, packet, delta, eps, T, dt and grid; each
    entry is an .npz with the components and a .json provenance header.
    """
    provenance = reference_provenance(packet, potential, delta, eps, final_time, dt, lower, upper, n)
    key = reference_key(provenance)
    cache_dir = cache_dir or get_cache_dir()
    data_path = os.path.join(cache_dir, f"reference-{key}.npz")
    meta_path = os.path.join(cache_dir, f"reference-{key}.json")

    template = WaveFunctionGrid(lower=lower, upper=upper, n=n, eps=eps, t=final_time)
    if os.path.exists(data_path) and os.path.exists(meta_path):
        try:
            with np.load(data_path) as data:
                grid = template.with_components(data["u0"], data["u1"])
            logger.info("reference_cache_hit", key=key, path=data_path)
            return grid
        except (OSError, ValueError, KeyError, ContractError) as e:
            logger.warning("reference_cache_unreadable", key=key, error=str(e))

    logger.info("reference_cache_miss", key=key)
    u_in = packet_grid(packet, eps, lower, upper, n)
    result = solve(u_in, potential, delta, final_time, dt, eps, strict=strict)

    try:
        os.makedirs(cache_dir, exist_ok=True)
        np.savez(data_path, u0=result.u0, u1=result.u1)
        with open(meta_path, "w") as f:
            json.dump(provenance, f, indent=2, sort_keys=True)
    except OSError as e:
        logger.warning("reference_cache_write_failed", path=data_path, error=str(e))
    return result
