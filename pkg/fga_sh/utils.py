# fga_sh/utils.py
import json
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import structlog

from fga_sh.errors import ContractError

logger = structlog.get_logger()

WORKERS_ENV = "FGA_SH_WORKERS"
CACHE_DIR_ENV = "FGA_SH_CACHE_DIR"


@dataclass(eq=False)
class WaveFunctionGrid:
    """
    Two complex components sampled on a uniform grid over [lower, upper)^m
    with n points per axis (periodic layout: x_j = lower + j * dx).
    """

    lower: float
    upper: float
    n: int
    dimension: int = 1
    eps: float = 1.0
    t: float = 0.0
    u0: Optional[np.ndarray] = None
    u1: Optional[np.ndarray] = None
    stderr0: Optional[np.ndarray] = field(default=None, repr=False)
    stderr1: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.upper > self.lower:
            raise ContractError(f"empty grid interval [{self.lower}, {self.upper}]")
        if self.n < 2:
            raise ContractError("grid needs at least 2 points per axis")
        shape = self.shape
        if self.u0 is None:
            self.u0 = np.zeros(shape, dtype=complex)
        if self.u1 is None:
            self.u1 = np.zeros(shape, dtype=complex)
        self.u0 = np.asarray(self.u0, dtype=complex)
        self.u1 = np.asarray(self.u1, dtype=complex)
        if self.u0.shape != shape or self.u1.shape != shape:
            raise ContractError(f"components must have shape {shape}")

    @property
    def shape(self):
        return (self.n,) * self.dimension

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dimension

    @property
    def axis(self) -> np.ndarray:
        return self.lower + self.spacing * np.arange(self.n)

    def points(self) -> np.ndarray:
        """Grid points, shape (n, ..., n, m)."""
        mesh = np.meshgrid(*([self.axis] * self.dimension), indexing="ij")
        return np.stack(mesh, axis=-1)

    def component(self, index: int) -> np.ndarray:
        if index == 0:
            return self.u0
        if index == 1:
            return self.u1
        raise ContractError(f"component must be 0 or 1, got {index}")

    def same_layout(self, other: "WaveFunctionGrid") -> bool:
        return (
            self.n == other.n
            and self.dimension == other.dimension
            and np.isclose(self.lower, other.lower, rtol=0, atol=1e-9 * self.spacing)
            and np.isclose(self.upper, other.upper, rtol=0, atol=1e-9 * self.spacing)
        )

    def with_components(self, u0, u1, **changes) -> "WaveFunctionGrid":
        params = dict(lower=self.lower, upper=self.upper, n=self.n, dimension=self.dimension, eps=self.eps, t=self.t)
        params.update(changes)
        return WaveFunctionGrid(u0=u0, u1=u1, **params)

    def empty_like(self) -> "WaveFunctionGrid":
        return self.with_components(None, None)

    def copy(self) -> "WaveFunctionGrid":
        out = self.with_components(self.u0.copy(), self.u1.copy())
        out.stderr0 = None if self.stderr0 is None else self.stderr0.copy()
        out.stderr1 = None if self.stderr1 is None else self.stderr1.copy()
        return out


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def grid_points_for(lower: float, upper: float, eps: float, per_sqrt_eps: int = 8, power_of_two: bool = False) -> int:
    """Smallest point count with spacing <= sqrt(eps) / per_sqrt_eps."""
    n = int(np.ceil((upper - lower) * per_sqrt_eps / np.sqrt(eps)))
    if power_of_two:
        n = 1 << max(1, int(np.ceil(np.log2(n))))
    return max(n, 2)


def write_wavefunction_csv(grid: WaveFunctionGrid, path: str) -> None:
    """
    Write x, Re u0, Im u0, Re u1, Im u1, stderr0, stderr1 (1-D grids).

    Output is byte-identical for identical grids.
    """
    if grid.dimension != 1:
        raise ContractError("CSV export supports 1-D grids only")
    stderr0 = grid.stderr0 if grid.stderr0 is not None else np.zeros(grid.n)
    stderr1 = grid.stderr1 if grid.stderr1 is not None else np.zeros(grid.n)
    table = np.column_stack([
        grid.axis,
        grid.u0.real, grid.u0.imag,
        grid.u1.real, grid.u1.imag,
        stderr0, stderr1,
    ])
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    np.savetxt(
        path,
        table,
        fmt="%.17g",
        delimiter=",",
        header="x,re_u0,im_u0,re_u1,im_u1,stderr0,stderr1",
        comments="",
    )
    logger.debug("wavefunction_written", path=path, points=grid.n)


def read_wavefunction_csv(path: str, eps: float = 1.0) -> WaveFunctionGrid:
    """Read a grid written by write_wavefunction_csv."""
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise ContractError(f"cannot read wave function CSV {path}: {e}") from None
    if table.shape[1] != 7 or table.shape[0] < 2:
        raise ContractError(f"{path} is not a wave function CSV")
    x = table[:, 0]
    dx = (x[-1] - x[0]) / (len(x) - 1)
    grid = WaveFunctionGrid(
        lower=float(x[0]),
        upper=float(x[0] + len(x) * dx),
        n=len(x),
        eps=eps,
        u0=table[:, 1] + 1j * table[:, 2],
        u1=table[:, 3] + 1j * table[:, 4],
    )
    grid.stderr0 = table[:, 5]
    grid.stderr1 = table[:, 6]
    return grid


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if hasattr(value, "value"):
        return value.value
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def write_summary(summary: Dict, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def summary_to_json(summary: Dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True, default=_json_default)


def get_worker_count(default: Optional[int] = None) -> int:
    """Worker-pool size from FGA_SH_WORKERS, else the CPU count."""
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            workers = int(raw)
        except ValueError:
            logger.warning("invalid_worker_count", env=WORKERS_ENV, value=raw)
        else:
            if workers >= 1:
                return workers
            logger.warning("invalid_worker_count", env=WORKERS_ENV, value=raw)
    if default is not None:
        return default
    return os.cpu_count() or 1


def get_cache_dir() -> str:
    return os.environ.get(CACHE_DIR_ENV) or os.path.join(os.path.expanduser("~"), ".cache", "fga-sh")


def format_duration(seconds: float) -> str:
    """
    Format a duration in seconds to a human-readable string.

    Args:
        seconds: Duration in seconds

    Returns:
        Human-readable duration string
    """
    if seconds < 1:
        return f"{seconds * 1000:.0f} ms"
    elif seconds < 60:
        return f"{seconds:.1f} s"
    elif seconds < 3600:
        return f"{seconds / 60:.1f} min"
    else:
        return f"{seconds / 3600:.2f} h"
