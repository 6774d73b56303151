# fga_sh/core.py
"""
Surface-hopping trajectory engine.

A trajectory carries (t, l, Q, P, S, A, dzQ, dzP). Between hops the
continuous fields follow

    dQ/dt = P,   dP/dt = -grad V_ll(Q),   dS/dt = |P|^2/2 - V_ll(Q),
    dA/dt = A/2 tr(Z^{-1} (dzP - i dzQ hess V_ll(Q))),
    d(dzQ)/dt = dzP,   d(dzP)/dt = -hess V_ll(Q) dzQ,

with Z = dzQ + i dzP. The surface index l jumps with rate lambda(Q) using one
Bernoulli draw per step; all continuous fields are continuous across a hop.

Every field may carry leading batch axes, so an ensemble is advanced with the
same code as a single trajectory.
"""
import dataclasses
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog

from fga_sh.errors import ContractError, SingularZError
from fga_sh.potentials import DiabaticPotential
from fga_sh.rules import (
    DEFAULT_PROBABILITY_CAP,
    RateModel,
    check_step_probability,
    default_time_step,
    make_rate_model,
    rate_at,
)

logger = structlog.get_logger()

SINGULAR_Z_THRESHOLD = 1e-12


@dataclass
class TrajectoryState:
    """Extended phase-space state; arrays may have leading batch axes."""

    t: float
    l: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    S: np.ndarray
    A: np.ndarray
    dzQ: np.ndarray
    dzP: np.ndarray

    @property
    def dimension(self) -> int:
        return self.Q.shape[-1]

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.Q.shape[:-1]

    @property
    def Z(self) -> np.ndarray:
        return self.dzQ + 1j * self.dzP

    def replace(self, **changes) -> "TrajectoryState":
        return dataclasses.replace(self, **changes)

    def select(self, index) -> "TrajectoryState":
        """One trajectory (or a sub-batch) out of a batched state."""
        return TrajectoryState(
            t=self.t,
            l=np.array(self.l[index]),
            Q=self.Q[index].copy(),
            P=self.P[index].copy(),
            S=np.array(self.S[index]),
            A=np.array(self.A[index]),
            dzQ=self.dzQ[index].copy(),
            dzP=self.dzP[index].copy(),
        )

    @classmethod
    def stack(cls, states: Sequence["TrajectoryState"]) -> "TrajectoryState":
        times = {s.t for s in states}
        if len(times) != 1:
            raise ContractError("can only stack states at a common time")
        return cls(
            t=states[0].t,
            l=np.stack([np.asarray(s.l) for s in states]),
            Q=np.stack([s.Q for s in states]),
            P=np.stack([s.P for s in states]),
            S=np.stack([np.asarray(s.S) for s in states]),
            A=np.stack([np.asarray(s.A) for s in states]),
            dzQ=np.stack([s.dzQ for s in states]),
            dzP=np.stack([s.dzP for s in states]),
        )


@dataclass
class TrajectoryDerivative:
    dQ: np.ndarray
    dP: np.ndarray
    dS: np.ndarray
    dA: np.ndarray
    d_dzQ: np.ndarray
    d_dzP: np.ndarray


@dataclass(frozen=True)
class HopEvent:
    """A surface switch; coupling_value is V_{to,from}(Q) at the hop."""

    time: float
    from_surface: int
    to_surface: int
    coupling_value: complex
    coupling_magnitude: float
    rate: float


@dataclass
class TrajectoryRecord:
    final_state: TrajectoryState
    hops: List[HopEvent]
    rate_integral: float
    initial_a: complex
    seed_tag: int = 0
    rate_model: RateModel = RateModel.STANDARD
    delta: float = 0.0
    eps: float = 1.0

    @property
    def hop_count(self) -> int:
        return len(self.hops)


def _batch_amplitude(a0, batch: Tuple[int, ...]) -> np.ndarray:
    # one amplitude per trajectory, or a single value shared by the batch
    a0 = np.asarray(a0, dtype=complex)
    if a0.size == math.prod(batch):
        return a0.reshape(batch).copy()
    try:
        return np.broadcast_to(a0, batch).copy()
    except ValueError:
        raise ContractError(f"amplitude of shape {a0.shape} does not fit batch shape {batch}") from None


def initial_state(q0, p0, a0) -> TrajectoryState:
    """
    State at t = 0 on surface 0 with S = 0, dzQ = I, dzP = -iI (so Z = 2I).

    q0 and p0 may carry leading batch axes; a0 is one value per trajectory
    or a single value shared by the batch.
    """
    q0 = np.asarray(q0, dtype=float)
    if q0.ndim == 0:
        q0 = q0[None]
    p0 = np.asarray(p0, dtype=float).reshape(q0.shape)
    batch = q0.shape[:-1]
    m = q0.shape[-1]
    eye = np.broadcast_to(np.eye(m), batch + (m, m))
    return TrajectoryState(
        t=0.0,
        l=np.zeros(batch, dtype=int),
        Q=q0.copy(),
        P=p0.copy(),
        S=np.zeros(batch),
        A=_batch_amplitude(a0, batch),
        dzQ=eye.astype(complex),
        dzP=(-1j * eye).astype(complex),
    )


def classical_energy(state: TrajectoryState, potential: DiabaticPotential) -> np.ndarray:
    return 0.5 * np.sum(state.P**2, axis=-1) + potential.diagonal(state.l, state.Q)


def ode_rhs(state: TrajectoryState, potential: DiabaticPotential) -> TrajectoryDerivative:
    """
    Right-hand side of the trajectory ODEs on the current surfaces.

    Raises:
        SingularZError: if |det Z| <= 1e-12 for any trajectory
    """
    Z = state.Z
    hess = potential.hess_diag(state.l, state.Q)
    coupled = state.dzP - 1j * (state.dzQ @ hess)

    if state.dimension == 1:
        det = Z[..., 0, 0]
    else:
        det = np.linalg.det(Z)
    det_abs = np.abs(det)
    if np.any(det_abs <= SINGULAR_Z_THRESHOLD):
        raise SingularZError(float(np.min(det_abs)), state.t)

    if state.dimension == 1:
        trace = coupled[..., 0, 0] / det
    else:
        trace = np.trace(np.linalg.solve(Z, coupled), axis1=-2, axis2=-1)

    return TrajectoryDerivative(
        dQ=state.P,
        dP=-potential.grad_diag(state.l, state.Q),
        dS=0.5 * np.sum(state.P**2, axis=-1) - potential.diagonal(state.l, state.Q),
        dA=0.5 * state.A * trace,
        d_dzQ=state.dzP,
        d_dzP=-(hess @ state.dzQ),
    )


def _advance(state: TrajectoryState, deriv: TrajectoryDerivative, h: float) -> TrajectoryState:
    return TrajectoryState(
        t=state.t + h,
        l=state.l,
        Q=state.Q + h * deriv.dQ,
        P=state.P + h * deriv.dP,
        S=state.S + h * deriv.dS,
        A=state.A + h * deriv.dA,
        dzQ=state.dzQ + h * deriv.d_dzQ,
        dzP=state.dzP + h * deriv.d_dzP,
    )


def rk4_step(state: TrajectoryState, dt: float, potential: DiabaticPotential) -> TrajectoryState:
    """Classical fourth-order Runge-Kutta step; the surface index is unchanged."""
    if not dt > 0:
        raise ContractError(f"time step must be positive, got {dt}")
    k1 = ode_rhs(state, potential)
    k2 = ode_rhs(_advance(state, k1, 0.5 * dt), potential)
    k3 = ode_rhs(_advance(state, k2, 0.5 * dt), potential)
    k4 = ode_rhs(_advance(state, k3, dt), potential)
    w = dt / 6.0
    return TrajectoryState(
        t=state.t + dt,
        l=state.l,
        Q=state.Q + w * (k1.dQ + 2 * k2.dQ + 2 * k3.dQ + k4.dQ),
        P=state.P + w * (k1.dP + 2 * k2.dP + 2 * k3.dP + k4.dP),
        S=state.S + w * (k1.dS + 2 * k2.dS + 2 * k3.dS + k4.dS),
        A=state.A + w * (k1.dA + 2 * k2.dA + 2 * k3.dA + k4.dA),
        dzQ=state.dzQ + w * (k1.d_dzQ + 2 * k2.d_dzQ + 2 * k3.d_dzQ + k4.d_dzQ),
        dzP=state.dzP + w * (k1.d_dzP + 2 * k2.d_dzP + 2 * k3.d_dzP + k4.d_dzP),
    )


def hop_rate(
    state: TrajectoryState,
    potential: DiabaticPotential,
    delta: float,
    eps: float,
    model: RateModel = RateModel.STANDARD,
) -> np.ndarray:
    """Jump rate at the state's position (same for 0->1 and 1->0)."""
    return rate_at(potential, state.Q, delta, eps, make_rate_model(model))


def time_grid(final_time: float, dt: float) -> Tuple[int, float]:
    """
    Number of uniform steps reaching final_time and the step actually used
    (at most dt).
    """
    if not final_time > 0:
        raise ContractError(f"final time must be positive, got {final_time}")
    if not dt > 0:
        raise ContractError(f"time step must be positive, got {dt}")
    n_steps = max(1, int(math.ceil(final_time / dt - 1e-9)))
    return n_steps, final_time / n_steps


def trajectory_stream(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for trajectory `index`, independent of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), int(index)])))


def _coupling_for_hop(potential: DiabaticPotential, from_surface: int, q: np.ndarray) -> complex:
    # V_{to, from}: hopping 0 -> 1 picks up V10, 1 -> 0 picks up V01
    value = potential.v10(q) if from_surface == 0 else potential.v01(q)
    return complex(np.asarray(value).reshape(-1)[0])


def evolve_batch(
    init: TrajectoryState,
    potential: DiabaticPotential,
    final_time: float,
    dt: float,
    delta: float,
    eps: float,
    rate_model: RateModel = RateModel.STANDARD,
    probability_cap: float = DEFAULT_PROBABILITY_CAP,
    uniforms: Optional[np.ndarray] = None,
    hop_schedule: Optional[np.ndarray] = None,
    seed_tags: Optional[Sequence[int]] = None,
) -> List[TrajectoryRecord]:
    """
    Evolve a batch of trajectories to final_time.

    Hops are decided at the start of each step from lambda at the step's
    starting position. With `uniforms` (shape (B, n_steps)) trajectory b hops
    at step k iff uniforms[b, k] < h * lambda. With `hop_schedule` (shape (B,),
    entries in 0..n_steps or -1 for never) trajectory b hops exactly once at
    step hop_schedule[b]; n_steps means a hop at final_time.

    Args:
        init: Batched initial state with batch shape (B,)
        potential: Matrix potential
        final_time: Final time T
        dt: Requested time step (the grid uses T / ceil(T / dt))
        delta: Coupling scale
        eps: Semiclassical parameter
        rate_model: Jump-rate model
        probability_cap: Maximum allowed h * lambda in stochastic mode
        uniforms: Per-step uniforms for stochastic hopping
        hop_schedule: Deterministic single-hop schedule
        seed_tags: Identifiers stored on the records

    Returns:
        One TrajectoryRecord per trajectory, in batch order
    """
    if init.Q.ndim != 2:
        raise ContractError("evolve_batch expects a state with a single batch axis")
    rate_model = make_rate_model(rate_model)
    batch = init.Q.shape[0]
    n_steps, h = time_grid(final_time, dt)
    if uniforms is not None and hop_schedule is not None:
        raise ContractError("pass either uniforms or hop_schedule, not both")
    if uniforms is not None:
        uniforms = np.asarray(uniforms, dtype=float)
        if uniforms.shape[0] != batch or uniforms.shape[1] < n_steps:
            raise ContractError(f"uniforms must have shape ({batch}, >= {n_steps})")
    if hop_schedule is not None:
        hop_schedule = np.asarray(hop_schedule, dtype=int).reshape(batch)
    if seed_tags is None:
        seed_tags = range(batch)

    state = init.replace(l=np.array(init.l, dtype=int).reshape(batch))
    hops: List[List[HopEvent]] = [[] for _ in range(batch)]
    rate_integral = np.zeros(batch)

    def apply_hops(mask, rates, t):
        for b in np.flatnonzero(mask):
            src = int(state.l[b])
            value = _coupling_for_hop(potential, src, state.Q[b])
            hops[b].append(HopEvent(
                time=t,
                from_surface=src,
                to_surface=1 - src,
                coupling_value=value,
                coupling_magnitude=abs(value),
                rate=float(rates[b]),
            ))
        state.l[mask] = 1 - state.l[mask]

    for k in range(n_steps):
        t = k * h
        rates = hop_rate(state, potential, delta, eps, rate_model)
        if hop_schedule is None:
            check_step_probability(rates, h, probability_cap)
            rate_integral += h * rates
            if uniforms is not None:
                mask = uniforms[:, k] < h * rates
                if mask.any():
                    apply_hops(mask, rates, t)
        else:
            rate_integral += h * rates
            mask = hop_schedule == k
            if mask.any():
                apply_hops(mask, rates, t)
        state = rk4_step(state, h, potential)
        state.t = (k + 1) * h

    if hop_schedule is not None:
        mask = hop_schedule == n_steps
        if mask.any():
            apply_hops(mask, hop_rate(state, potential, delta, eps, rate_model), final_time)

    logger.debug(
        "batch_evolved",
        trajectories=batch,
        steps=n_steps,
        hops=sum(len(events) for events in hops),
        rate_model=rate_model.value,
    )

    return [
        TrajectoryRecord(
            final_state=state.select(b),
            hops=hops[b],
            rate_integral=float(rate_integral[b]),
            initial_a=complex(init.A[b]),
            seed_tag=int(tag),
            rate_model=rate_model,
            delta=delta,
            eps=eps,
        )
        for b, tag in zip(range(batch), seed_tags)
    ]


def evolve_trajectory(init: TrajectoryState, config, potential: DiabaticPotential, rng: np.random.Generator) -> TrajectoryRecord:
    """
    Evolve one trajectory with stochastic hops drawn from `rng`.

    Args:
        init: Unbatched initial state
        config: Object with eps, delta, final_time, dt (None for eps / 10),
            rate_model and probability_cap attributes (a RunSpec works)
        potential: Matrix potential
        rng: Stream providing one uniform per step

    Returns:
        TrajectoryRecord
    """
    dt = config.dt if config.dt is not None else default_time_step(config.eps)
    n_steps, _ = time_grid(config.final_time, dt)
    batch = TrajectoryState.stack([init])
    record = evolve_batch(
        batch,
        potential,
        final_time=config.final_time,
        dt=dt,
        delta=config.delta,
        eps=config.eps,
        rate_model=getattr(config, "rate_model", RateModel.STANDARD),
        probability_cap=getattr(config, "probability_cap", DEFAULT_PROBABILITY_CAP),
        uniforms=rng.random((1, n_steps)),
    )[0]
    return record
