# fga_sh/config.py
"""
Experiment configuration.

Files are INI-style with sections [potential], [packet], [run], [grid] and
optional [reference], [output], [study]. Keys in [potential] other than
`model` are passed to the potential's constructor. Vectors and lists are
comma-separated.
"""
import configparser
import io
import math
from typing import Any, Dict, List, Optional, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from fga_sh.errors import ConfigError, ContractError
from fga_sh.initial_data import GaussianWavePacket
from fga_sh.potentials import DiabaticPotential, coupling_sup, make_potential
from fga_sh.rules import DEFAULT_PROBABILITY_CAP, RateModel, default_time_step, make_rate_model, rate_at
from fga_sh.utils import WaveFunctionGrid, grid_points_for, is_power_of_two

logger = structlog.get_logger()

# grid spacing must resolve the eps-scale oscillation: dx <= sqrt(eps) / 8
GRID_POINTS_PER_SQRT_EPS = 8
PROBE_POINTS = 2001
SECTIONS = ("potential", "packet", "run", "grid", "reference", "output", "study")
LIST_FIELDS = {"center", "momentum", "ns", "deltas", "eps_values"}


class PotentialSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: str = "simple"
    params: Dict[str, Union[int, float, str]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_model(self) -> "PotentialSpec":
        make_potential(self.model, **self.params)
        return self

    def build(self) -> DiabaticPotential:
        return make_potential(self.model, **self.params)


class PacketSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    center: List[float]
    momentum: List[float]
    alpha: float = Field(gt=0)
    prefactor: float = 1.0

    @model_validator(mode="after")
    def check_lengths(self) -> "PacketSpec":
        if not self.center or len(self.center) != len(self.momentum):
            raise ValueError("packet center and momentum need the same nonzero length")
        return self

    @property
    def dimension(self) -> int:
        return len(self.center)

    def build(self) -> GaussianWavePacket:
        return GaussianWavePacket(
            center=np.array(self.center),
            alpha=self.alpha,
            momentum=np.array(self.momentum),
            prefactor=self.prefactor,
        )


class RunSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eps: float = Field(gt=0)
    delta: float = Field(ge=0)
    final_time: float = Field(gt=0)
    dt: Optional[float] = Field(default=None, gt=0)
    trajectories: int = Field(default=1000, ge=1)
    seed: int = 0
    rate_model: RateModel = RateModel.STANDARD
    probability_cap: float = Field(default=DEFAULT_PROBABILITY_CAP, gt=0, le=1)
    table_resolution: int = Field(default=128, ge=2)
    chunk_size: int = Field(default=1000, ge=1)
    max_hops: Optional[int] = Field(default=None, ge=0)

    @field_validator("rate_model", mode="before")
    @classmethod
    def parse_rate_model(cls, value):
        return make_rate_model(value)

    @property
    def time_step(self) -> float:
        return self.dt if self.dt is not None else default_time_step(self.eps)


class GridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lower: float = -8.0
    upper: float = 8.0
    n: Optional[int] = Field(default=None, ge=2)

    @model_validator(mode="after")
    def check_interval(self) -> "GridSpec":
        if not self.upper > self.lower:
            raise ValueError(f"grid upper bound {self.upper} must exceed lower bound {self.lower}")
        return self

    def points(self, eps: float) -> int:
        """Point count; defaults to the smallest power of two with dx <= sqrt(eps)/8."""
        if self.n is not None:
            return self.n
        return grid_points_for(self.lower, self.upper, eps, GRID_POINTS_PER_SQRT_EPS, power_of_two=True)


class ReferenceSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = False
    dt: Optional[float] = Field(default=None, gt=0)
    strict: bool = False
    cache: bool = True

    def time_step(self, eps: float) -> float:
        return self.dt if self.dt is not None else eps / 32.0


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = "results"
    name: str = "run"
    csv: bool = True
    summary: bool = True


class StudySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ns: List[int] = Field(default_factory=lambda: [100, 200, 400, 800, 1600])
    deltas: List[float] = Field(default_factory=list)
    eps_values: List[float] = Field(default_factory=lambda: [0.04, 0.01, 0.0025, 0.00125])
    replicates: int = Field(default=20, ge=1)
    threshold: float = Field(default=0.08, gt=0, lt=1)
    start_trajectories: int = Field(default=64, ge=1)
    max_trajectories: int = Field(default=1_000_000, ge=1)


class SimulationConfig(BaseModel):
    """Complete, validated description of one experiment."""

    model_config = ConfigDict(extra="forbid")

    potential: PotentialSpec = Field(default_factory=PotentialSpec)
    packet: PacketSpec
    run: RunSpec
    grid: GridSpec = Field(default_factory=GridSpec)
    reference: ReferenceSpec = Field(default_factory=ReferenceSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    study: StudySpec = Field(default_factory=StudySpec)

    @model_validator(mode="after")
    def check_consistency(self) -> "SimulationConfig":
        model = self.potential.build()
        if model.dimension != self.packet.dimension:
            raise ValueError(
                f"packet dimension {self.packet.dimension} does not match potential dimension {model.dimension}"
            )

        n = self.grid.points(self.run.eps)
        dx = (self.grid.upper - self.grid.lower) / n
        limit = math.sqrt(self.run.eps) / GRID_POINTS_PER_SQRT_EPS
        if dx > limit * (1 + 1e-12):
            raise ValueError(f"grid spacing {dx:.4g} exceeds sqrt(eps)/8 = {limit:.4g}; increase grid.n")
        if self.reference.enabled:
            if self.packet.dimension != 1:
                raise ValueError("the reference solver is one-dimensional")
            if not is_power_of_two(n):
                raise ValueError(f"reference runs need a power-of-two grid.n, got {n}")

        dt = self.run.time_step
        rate_sup = self.rate_sup(model)
        if rate_sup * dt > self.run.probability_cap:
            raise ValueError(
                f"hop probability rate*dt = {rate_sup * dt:.4g} exceeds cap {self.run.probability_cap} "
                f"on [{self.grid.lower}, {self.grid.upper}]; reduce dt below {self.run.probability_cap / rate_sup:.6g}"
            )
        return self

    def rate_sup(self, model: Optional[DiabaticPotential] = None) -> float:
        """Largest jump rate over the probe grid spanning the reconstruction domain."""
        model = model or self.potential.build()
        run = self.run
        if model.dimension == 1:
            probe = np.linspace(self.grid.lower, self.grid.upper, PROBE_POINTS)[:, None]
            return float(np.max(rate_at(model, probe, run.delta, run.eps, run.rate_model)))
        # standard rate bounds the gap-modified one
        return run.delta / run.eps * coupling_sup(model, self.grid.lower, self.grid.upper)

    def build_potential(self) -> DiabaticPotential:
        return self.potential.build()

    def build_packet(self) -> GaussianWavePacket:
        return self.packet.build()

    def build_grid(self) -> WaveFunctionGrid:
        return WaveFunctionGrid(
            lower=self.grid.lower,
            upper=self.grid.upper,
            n=self.grid.points(self.run.eps),
            dimension=self.packet.dimension,
            eps=self.run.eps,
            t=self.run.final_time,
        )

    def with_updates(self, **changes: Dict[str, Any]) -> "SimulationConfig":
        """
        Copy with per-section overrides, revalidated.

        Example:
            config.with_updates(run={"delta": 0.01, "seed": 7})
        """
        data = self.model_dump()
        for section, values in changes.items():
            if section not in data:
                raise ConfigError(f"unknown config section {section!r}")
            if section == "potential":
                values = dict(values)
                if "model" in values:
                    data["potential"]["model"] = values.pop("model")
                if "params" in values:
                    data["potential"]["params"] = dict(values["params"])
                else:
                    data["potential"]["params"].update(values)
                continue
            data[section].update(values)
        return _validate(data)


def _validate(data: Dict) -> SimulationConfig:
    try:
        return SimulationConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from None
    except ContractError as e:
        raise ConfigError(f"invalid configuration: {e}") from None


def _parse_value(key: str, raw: str) -> Any:
    raw = raw.strip()
    if key in LIST_FIELDS:
        return [_parse_scalar(item) for item in raw.split(",") if item.strip()]
    return _parse_scalar(raw)


def _parse_scalar(raw: str) -> Any:
    raw = raw.strip()
    lowered = raw.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if lowered in ("", "none"):
        return None
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def parse_config(text: str) -> SimulationConfig:
    """
    Parse configuration text.

    Args:
        text: INI-style configuration

    Returns:
        Validated SimulationConfig

    Raises:
        ConfigError: on syntax errors, unknown sections or failed validation
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse configuration: {e}") from None

    data: Dict[str, Dict] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        values = {key: _parse_value(key, raw) for key, raw in parser.items(section)}
        values = {key: value for key, value in values.items() if value is not None}
        if section == "potential":
            model = values.pop("model", "simple")
            values = {"model": model, "params": values}
        data[section] = values
    for required in ("packet", "run"):
        if required not in data:
            raise ConfigError(f"missing config section [{required}]")
    return _validate(data)


def load_config(path: str) -> SimulationConfig:
    """Read and validate a configuration file."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    config = parse_config(text)
    logger.debug("config_loaded", path=path, model=config.potential.model, eps=config.run.eps, delta=config.run.delta)
    return config


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, RateModel):
        return value.value
    return str(value)


def dump_config(config: SimulationConfig) -> str:
    """Serialize to INI text; parse_config(dump_config(c)) reproduces c."""
    parser = configparser.ConfigParser(interpolation=None)
    data = config.model_dump()
    for section in SECTIONS:
        values = data[section]
        if section == "potential":
            values = {"model": values["model"], **values["params"]}
        parser[section] = {key: _format_value(value) for key, value in values.items() if value is not None}
    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()
