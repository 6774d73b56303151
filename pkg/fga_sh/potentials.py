# fga_sh/potentials.py
"""
Diabatic 2x2 matrix potentials.

A potential exposes the two diagonal surfaces V00, V11 with analytic
gradients and Hessians, and the coupling V01. V10 is always conj(V01).
The coupling scale delta is NOT part of the potential; callers form
delta * V01 themselves.

All methods accept positions of shape (..., m) and broadcast over the
leading axes, so the same object serves single trajectories and batches.
"""
import abc
import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Optional, Union

import numpy as np
import structlog

from fga_sh.errors import ContractError

logger = structlog.get_logger()

SurfaceIndex = Union[int, np.ndarray]


class DiabaticPotential(abc.ABC):
    """Interface for two-level diabatic matrix potentials."""

    tag: str = "custom"
    dimension: int = 1

    @abc.abstractmethod
    def v00(self, q: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def v11(self, q: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def v01(self, q: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def grad00(self, q: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def grad11(self, q: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def hess00(self, q: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def hess11(self, q: np.ndarray) -> np.ndarray:
        ...

    def v10(self, q: np.ndarray) -> np.ndarray:
        # Hermitian by construction
        return np.conj(self.v01(q))

    def diagonal(self, l: SurfaceIndex, q: np.ndarray) -> np.ndarray:
        """V_ll(q) for a scalar or per-point surface index."""
        return np.where(np.asarray(l) == 0, self.v00(q), self.v11(q))

    def grad_diag(self, l: SurfaceIndex, q: np.ndarray) -> np.ndarray:
        lower = (np.asarray(l) == 0)[..., None]
        return np.where(lower, self.grad00(q), self.grad11(q))

    def hess_diag(self, l: SurfaceIndex, q: np.ndarray) -> np.ndarray:
        lower = (np.asarray(l) == 0)[..., None, None]
        return np.where(lower, self.hess00(q), self.hess11(q))

    def matrix(self, q: np.ndarray, delta: float) -> np.ndarray:
        """
        Full Hermitian matrix [[V00, delta V01], [delta V10, V11]].

        Args:
            q: Positions, shape (..., m)
            delta: Coupling scale

        Returns:
            Complex array of shape (..., 2, 2)
        """
        v00 = self.v00(q)
        out = np.empty(v00.shape + (2, 2), dtype=complex)
        out[..., 0, 0] = v00
        out[..., 1, 1] = self.v11(q)
        out[..., 0, 1] = delta * self.v01(q)
        out[..., 1, 0] = delta * self.v10(q)
        return out

    def params(self) -> Dict:
        return {}

    def describe(self) -> Dict:
        return {"tag": self.tag, "dimension": self.dimension, **self.params()}


def _x(q: np.ndarray) -> np.ndarray:
    return np.asarray(q, dtype=float)[..., 0]


def _as_grad(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=float)[..., None]


def _as_hess(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=float)[..., None, None]


@dataclass(frozen=True)
class SimpleCrossing(DiabaticPotential):
    """V00 = tanh x, V11 = -tanh x, V01 = coupling (1 by default)."""

    coupling: float = 1.0

    tag = "simple"
    dimension = 1

    def v00(self, q):
        return np.tanh(_x(q))

    def v11(self, q):
        return -np.tanh(_x(q))

    def v01(self, q):
        return np.full(np.shape(_x(q)), self.coupling, dtype=complex)

    def grad00(self, q):
        th = np.tanh(_x(q))
        return _as_grad(1.0 - th**2)

    def grad11(self, q):
        return -self.grad00(q)

    def hess00(self, q):
        th = np.tanh(_x(q))
        return _as_hess(-2.0 * th * (1.0 - th**2))

    def hess11(self, q):
        return -self.hess00(q)

    def params(self):
        return asdict(self)


@dataclass(frozen=True)
class DualCrossing(DiabaticPotential):
    """
    V00 = 0, V11 = -depth exp(-width x^2) + offset,
    V01 = amplitude exp(-spread x^2).

    The 0.015 coupling amplitude lives here, so this model is run with delta = 1.
    """

    depth: float = 0.1
    width: float = 0.28
    offset: float = 0.05
    amplitude: float = 0.015
    spread: float = 0.06

    tag = "dual"
    dimension = 1

    def v00(self, q):
        return np.zeros(np.shape(_x(q)))

    def v11(self, q):
        x = _x(q)
        return -self.depth * np.exp(-self.width * x**2) + self.offset

    def v01(self, q):
        x = _x(q)
        return (self.amplitude * np.exp(-self.spread * x**2)).astype(complex)

    def grad00(self, q):
        return _as_grad(np.zeros(np.shape(_x(q))))

    def grad11(self, q):
        x = _x(q)
        return _as_grad(2.0 * self.depth * self.width * x * np.exp(-self.width * x**2))

    def hess00(self, q):
        return _as_hess(np.zeros(np.shape(_x(q))))

    def hess11(self, q):
        x = _x(q)
        g = np.exp(-self.width * x**2)
        return _as_hess(2.0 * self.depth * self.width * g * (1.0 - 2.0 * self.width * x**2))

    def params(self):
        return asdict(self)


@dataclass(frozen=True)
class ExtendedCoupling(DiabaticPotential):
    """V00 = arctan(k x) + pi/2, V11 = -V00, V01 = coupling."""

    stiffness: float = 10.0
    coupling: float = 1.0

    tag = "extended"
    dimension = 1

    def v00(self, q):
        return np.arctan(self.stiffness * _x(q)) + math.pi / 2

    def v11(self, q):
        return -self.v00(q)

    def v01(self, q):
        return np.full(np.shape(_x(q)), self.coupling, dtype=complex)

    def grad00(self, q):
        k = self.stiffness
        x = _x(q)
        return _as_grad(k / (1.0 + (k * x) ** 2))

    def grad11(self, q):
        return -self.grad00(q)

    def hess00(self, q):
        k = self.stiffness
        x = _x(q)
        return _as_hess(-2.0 * k**3 * x / (1.0 + (k * x) ** 2) ** 2)

    def hess11(self, q):
        return -self.hess00(q)

    def params(self):
        return asdict(self)


@dataclass(frozen=True)
class FlatCoupling(DiabaticPotential):
    """
    Constant surfaces +gap/2 and -gap/2 with constant coupling, in any dimension.

    The hop rate is position independent, which makes the surface index an
    exact Poisson process.
    """

    gap: float = 0.0
    coupling: float = 1.0
    dimension: int = 1

    tag = "flat"

    def _shape(self, q):
        return np.shape(np.asarray(q, dtype=float)[..., 0])

    def v00(self, q):
        return np.full(self._shape(q), 0.5 * self.gap)

    def v11(self, q):
        return np.full(self._shape(q), -0.5 * self.gap)

    def v01(self, q):
        return np.full(self._shape(q), self.coupling, dtype=complex)

    def grad00(self, q):
        return np.zeros(self._shape(q) + (self.dimension,))

    def grad11(self, q):
        return self.grad00(q)

    def hess00(self, q):
        return np.zeros(self._shape(q) + (self.dimension, self.dimension))

    def hess11(self, q):
        return self.hess00(q)

    def params(self):
        return asdict(self)


class CallablePotential(DiabaticPotential):
    """
    Custom potential assembled from user-supplied analytic callables.

    Each callable takes positions of shape (..., m). Gradients must return
    (..., m) and Hessians (..., m, m). If v01 is omitted the surfaces are
    uncoupled.
    """

    tag = "custom"

    def __init__(
        self,
        dimension: int,
        v00: Callable,
        v11: Callable,
        grad00: Callable,
        grad11: Callable,
        hess00: Callable,
        hess11: Callable,
        v01: Optional[Callable] = None,
        name: str = "custom",
    ):
        if dimension < 1:
            raise ContractError(f"dimension must be positive, got {dimension}")
        self.dimension = dimension
        self.name = name
        self._v00 = v00
        self._v11 = v11
        self._v01 = v01
        self._grad00 = grad00
        self._grad11 = grad11
        self._hess00 = hess00
        self._hess11 = hess11

    def v00(self, q):
        return np.asarray(self._v00(q), dtype=float)

    def v11(self, q):
        return np.asarray(self._v11(q), dtype=float)

    def v01(self, q):
        if self._v01 is None:
            return np.zeros(np.shape(np.asarray(q)[..., 0]), dtype=complex)
        return np.asarray(self._v01(q), dtype=complex)

    def grad00(self, q):
        return np.asarray(self._grad00(q), dtype=float)

    def grad11(self, q):
        return np.asarray(self._grad11(q), dtype=float)

    def hess00(self, q):
        return np.asarray(self._hess00(q), dtype=float)

    def hess11(self, q):
        return np.asarray(self._hess11(q), dtype=float)

    def params(self):
        return {"name": self.name}


BUILTIN_MODELS = {
    "simple": SimpleCrossing,
    "dual": DualCrossing,
    "extended": ExtendedCoupling,
    "flat": FlatCoupling,
}


def make_potential(tag: str, **params) -> DiabaticPotential:
    """
    Build a built-in potential from its config tag.

    Args:
        tag: One of "simple", "dual", "extended", "flat"
        **params: Overrides for the model's parameters

    Returns:
        Potential instance
    """
    try:
        model_cls = BUILTIN_MODELS[tag.lower()]
    except KeyError:
        raise ContractError(
            f"unknown potential tag {tag!r}; expected one of {sorted(BUILTIN_MODELS)}"
        ) from None
    try:
        model = model_cls(**params)
    except TypeError as e:
        raise ContractError(f"bad parameters for potential {tag!r}: {e}") from None
    logger.debug("potential_built", **model.describe())
    return model


def _check_point(model: DiabaticPotential, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim == 0:
        q = q[None]
    if q.shape[-1] != model.dimension:
        raise ContractError(
            f"position has trailing dimension {q.shape[-1]}, potential expects {model.dimension}"
        )
    return q


def _check_surface(l: SurfaceIndex) -> SurfaceIndex:
    if not np.all(np.isin(np.asarray(l), (0, 1))):
        raise ContractError(f"surface index must be 0 or 1, got {l!r}")
    return l


def eval_diagonal(model: DiabaticPotential, l: SurfaceIndex, q) -> np.ndarray:
    """V_ll(q)."""
    q = _check_point(model, q)
    return model.diagonal(_check_surface(l), q)


def eval_coupling(model: DiabaticPotential, q) -> np.ndarray:
    """V01(q), without the delta factor."""
    q = _check_point(model, q)
    return model.v01(q)


def gradient(model: DiabaticPotential, l: SurfaceIndex, q) -> np.ndarray:
    """Analytic gradient of V_ll at q, shape (..., m)."""
    q = _check_point(model, q)
    return model.grad_diag(_check_surface(l), q)


def hessian(model: DiabaticPotential, l: SurfaceIndex, q) -> np.ndarray:
    """Analytic Hessian of V_ll at q, shape (..., m, m)."""
    q = _check_point(model, q)
    return model.hess_diag(_check_surface(l), q)


def coupling_sup(model: DiabaticPotential, lower: float, upper: float, n: int = 2001) -> float:
    """Max |V01| over a probe grid on [lower, upper]^m (one axis per dimension)."""
    axis = np.linspace(lower, upper, n)
    if model.dimension == 1:
        probe = axis[:, None]
    else:
        # diagonal line plus axis lines keeps the probe linear in n
        lines = [np.repeat(axis[:, None], model.dimension, axis=1)]
        for k in range(model.dimension):
            line = np.zeros((n, model.dimension))
            line[:, k] = axis
            lines.append(line)
        probe = np.concatenate(lines)
    return float(np.max(np.abs(model.v01(probe))))
