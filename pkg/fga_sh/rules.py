# fga_sh/rules.py
"""
Hop-rate rules for the surface-index jump process and the statistics that
follow from them.
"""
import enum
import math
from typing import Dict, Optional

import numpy as np
import structlog
from scipy import special, stats

from fga_sh.errors import ContractError, StepSizeError
from fga_sh.potentials import DiabaticPotential

logger = structlog.get_logger()

DEFAULT_PROBABILITY_CAP = 0.1
# gap above which the modified rate divides by |V00 - V11|
GAP_THRESHOLD = 1.0


class RateModel(str, enum.Enum):
    STANDARD = "standard"
    GAP_MODIFIED = "gap_modified"


def make_rate_model(name) -> RateModel:
    """
    Resolve a rate model from its config name.

    Args:
        name: "standard", "gap_modified" (a RateModel passes through)

    Returns:
        RateModel
    """
    if isinstance(name, RateModel):
        return name
    try:
        return RateModel(str(name).strip().lower().replace("-", "_"))
    except ValueError:
        raise ContractError(
            f"unknown rate model {name!r}; expected one of {[m.value for m in RateModel]}"
        ) from None


def rate_at(
    potential: DiabaticPotential,
    q: np.ndarray,
    delta: float,
    eps: float,
    model: RateModel = RateModel.STANDARD,
) -> np.ndarray:
    """
    Off-diagonal jump rate lambda_01 = lambda_10 at positions q.

    Args:
        potential: Matrix potential
        q: Positions, shape (..., m)
        delta: Coupling scale
        eps: Semiclassical parameter
        model: Rate model

    Returns:
        Nonnegative rates, shape (...)
    """
    if not eps > 0:
        raise ContractError(f"eps must be positive, got {eps}")
    if delta < 0:
        raise ContractError(f"delta must be nonnegative, got {delta}")
    coupling = np.abs(potential.v01(q))
    rate = (delta / eps) * coupling
    if model is RateModel.GAP_MODIFIED:
        gap = np.abs(potential.v00(q) - potential.v11(q))
        wide = gap > GAP_THRESHOLD
        rate = np.where(wide, rate / np.where(wide, gap, 1.0), rate)
    return rate


def check_step_probability(rate: np.ndarray, dt: float, cap: float = DEFAULT_PROBABILITY_CAP) -> None:
    """Raise StepSizeError if any rate * dt exceeds the cap."""
    rate = np.asarray(rate)
    if rate.size == 0:
        return
    worst = float(np.max(rate))
    if worst * dt > cap:
        logger.error("hop_probability_above_cap", rate=worst, dt=dt, cap=cap)
        raise StepSizeError(worst, dt, cap)


def default_time_step(eps: float) -> float:
    return eps / 10.0


def max_time_step(rate_sup: float, cap: float = DEFAULT_PROBABILITY_CAP) -> float:
    """Largest dt keeping rate_sup * dt within the cap."""
    if rate_sup <= 0:
        return math.inf
    return cap / rate_sup


def no_hop_probability(rate_integral) -> np.ndarray:
    """P(n = 0) = exp(-∫ lambda ds) along the no-hop path."""
    return np.exp(-np.asarray(rate_integral, dtype=float))


def hop_count_probabilities(rate: float, final_time: float, max_hops: int) -> np.ndarray:
    """
    P(n = k), k = 0..max_hops, for a constant rate (Poisson with mean rate * T).

    The last entry collects the tail P(n >= max_hops).
    """
    mean = rate * final_time
    pmf = stats.poisson.pmf(np.arange(max_hops), mean)
    return np.append(pmf, stats.poisson.sf(max_hops - 1, mean))


def series_tail_bound(delta: float, eps: float, final_time: float, coupling_sup: float, max_hops: int) -> float:
    """
    Bound on the relative size of the hop-count series beyond max_hops terms:
    sum_{k > max_hops} x^k / k! with x = delta T sup|V01| / eps.
    """
    x = delta * final_time * coupling_sup / eps
    if x == 0:
        return 0.0
    # e^x P(N > n) for N ~ Poisson(x)
    return float(math.exp(x) * special.gammainc(max_hops + 1, x))


def asymptotic_error_scale(delta: float, eps: float, final_time: float) -> float:
    """Size of the neglected semiclassical terms summed over hop counts: eps e^{delta T / eps}."""
    return eps * math.exp(delta * final_time / eps)


def describe_rate_model(model: RateModel, delta: float, eps: float) -> Dict:
    return {"rate_model": model.value, "rate_scale": delta / eps}
