"""Scenario configuration and fleet sampling for the workplace-charging use case."""
from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

from .kernel import derive_stream

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

HOUR = 3600.0
KWH = 3_600_000.0  # Ws

FCC_WATTS = 48_000.0
SCC_WATTS = 11_000.0


class ConfigError(ValueError):
    """Invalid scenario or experiment configuration."""


class ColumnKind(str, Enum):
    FCC = "FCC"
    SCC = "SCC"

    @property
    def rating_watts(self) -> float:
        return FCC_WATTS if self is ColumnKind.FCC else SCC_WATTS


class Strategy(str, Enum):
    FCFS = "FCFS"
    SHRD = "SHRD"


@dataclass
class ScenarioConfig:
    """All knobs of one simulated facility-day.

    Defaults reproduce the average-employee workplace scenario: arrivals
    06:00-08:00, 9-10 kWh demand, 8-9 h parking, 4-port columns, a 32 s
    handshake and a 1 MW sandbox cap.
    """

    ev_count: int = 30
    cc_count: int = 30
    cc_kind: Any = ColumnKind.FCC  # one kind, or a per-column list
    ports_per_column: int = 4
    strategy: Strategy = Strategy.FCFS
    es_cap_watts: float = 1_000_000.0
    arrival_window: tuple[float, float] = (6 * HOUR, 8 * HOUR)
    commute_km: float = 26.0
    energy_demand_range_ws: tuple[float, float] = (9 * KWH, 10 * KWH)
    parking_range_s: tuple[float, float] = (8 * HOUR, 9 * HOUR)
    waiting_tolerance_s: float = math.inf
    handshake_s: float = 32.0
    price_interval_s: float = 900.0
    ev_max_accept_watts: float = 150_000.0
    horizon_s: float = 24 * HOUR
    sampling: str = "uniform"

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        if isinstance(self.cc_kind, (list, tuple)):
            self.cc_kind = [ColumnKind(k) for k in self.cc_kind]
        else:
            self.cc_kind = ColumnKind(self.cc_kind)
        for name in ("arrival_window", "energy_demand_range_ws", "parking_range_s"):
            setattr(self, name, tuple(float(x) for x in getattr(self, name)))
        self.waiting_tolerance_s = float(self.waiting_tolerance_s)

    def column_kinds(self) -> list[ColumnKind]:
        if isinstance(self.cc_kind, list):
            return list(self.cc_kind)
        return [self.cc_kind] * self.cc_count

    def validate(self) -> "ScenarioConfig":
        if int(self.ev_count) != self.ev_count or self.ev_count < 0:
            raise ConfigError(f"ev_count must be a nonnegative integer, got {self.ev_count}")
        if int(self.cc_count) != self.cc_count or self.cc_count < 1:
            raise ConfigError(f"cc_count must be a positive integer, got {self.cc_count}")
        if isinstance(self.cc_kind, list) and len(self.cc_kind) != self.cc_count:
            raise ConfigError(
                f"cc_kind lists {len(self.cc_kind)} kinds for {self.cc_count} columns"
            )
        if self.ports_per_column < 1:
            raise ConfigError("ports_per_column must be >= 1")
        if not self.es_cap_watts > 0:
            raise ConfigError("es_cap_watts must be positive")
        for name in ("arrival_window", "energy_demand_range_ws", "parking_range_s"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ConfigError(f"{name} must satisfy lo <= hi, got [{lo}, {hi}]")
            if lo < 0:
                raise ConfigError(f"{name} must be nonnegative, got [{lo}, {hi}]")
        if self.energy_demand_range_ws[0] <= 0:
            raise ConfigError("energy demand must be positive")
        if not self.horizon_s > 0:
            raise ConfigError("horizon_s must be positive")
        if self.arrival_window[1] > self.horizon_s:
            raise ConfigError("arrival_window must lie inside [0, horizon_s]")
        if self.commute_km < 0:
            raise ConfigError("commute_km must be nonnegative")
        if self.waiting_tolerance_s < 0:
            raise ConfigError("waiting_tolerance_s must be nonnegative")
        if self.handshake_s < 0:
            raise ConfigError("handshake_s must be nonnegative")
        if not self.price_interval_s > 0:
            raise ConfigError("price_interval_s must be positive")
        if not self.ev_max_accept_watts > 0:
            raise ConfigError("ev_max_accept_watts must be positive")
        if self.sampling != "uniform":
            raise ConfigError(f"unsupported sampling law {self.sampling!r}")
        return self

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class EVSpec:
    id: int
    entrance_delay_s: float
    waiting_tolerance_s: float
    parking_duration_s: float
    energy_required_ws: float
    max_accept_watts: float
    # early leave, measured from connection; None means leave at departure
    leave_after_s: float | None = None

    @property
    def arrival_s(self) -> float:
        return self.entrance_delay_s


@dataclass(frozen=True)
class ColumnSpec:
    id: int
    kind: ColumnKind
    rating_watts: float
    ports: int


@dataclass(frozen=True)
class FacilitySpec:
    columns: tuple[ColumnSpec, ...]
    es_cap_watts: float

    @property
    def total_ports(self) -> int:
        return sum(c.ports for c in self.columns)


def sample_fleet(config: ScenarioConfig, root_seed: int) -> list[EVSpec]:
    """Draw the EV population; each EV and quantity has its own stream."""
    config.validate()
    fleet = []
    for i in range(config.ev_count):
        arrival = derive_stream(root_seed, ("ev", i, "arrival")).uniform(*config.arrival_window)
        parking = derive_stream(root_seed, ("ev", i, "parking")).uniform(*config.parking_range_s)
        demand = derive_stream(root_seed, ("ev", i, "demand")).uniform(*config.energy_demand_range_ws)
        fleet.append(
            EVSpec(
                id=i,
                entrance_delay_s=arrival,
                waiting_tolerance_s=config.waiting_tolerance_s,
                parking_duration_s=parking,
                energy_required_ws=demand,
                max_accept_watts=config.ev_max_accept_watts,
            )
        )
    return fleet


def build_facility(config: ScenarioConfig) -> FacilitySpec:
    config.validate()
    columns = tuple(
        ColumnSpec(j, kind, kind.rating_watts, config.ports_per_column)
        for j, kind in enumerate(config.column_kinds())
    )
    return FacilitySpec(columns, float(config.es_cap_watts))


# -- config files -----------------------------------------------------------

_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}


def _coerce(name: str, value: Any) -> Any:
    if name in ("arrival_window", "energy_demand_range_ws", "parking_range_s"):
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise ConfigError(f"{name} must be a two-element list")
        return tuple(float(v) for v in value)
    if name == "waiting_tolerance_s" and isinstance(value, str):
        if value.lower() in ("inf", "unbounded", "none"):
            return math.inf
        raise ConfigError(f"waiting_tolerance_s: cannot parse {value!r}")
    if name in ("ev_count", "cc_count", "ports_per_column"):
        if isinstance(value, bool) or int(value) != value:
            raise ConfigError(f"{name} must be an integer")
        return int(value)
    return value


def config_from_mapping(data: Mapping[str, Any], base: ScenarioConfig | None = None) -> ScenarioConfig:
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    changes = {k: _coerce(k, v) for k, v in data.items()}
    try:
        cfg = dataclasses.replace(base or ScenarioConfig(), **changes)
    except ValueError as exc:  # bad enum values
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_config(path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Read a TOML file whose keys mirror `ScenarioConfig` fields."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if "scenario" in data and isinstance(data["scenario"], dict):
        data = data["scenario"]
    return config_from_mapping(data, base)


def _toml_value(v: Any) -> str:
    if isinstance(v, Enum):
        return f'"{v.value}"'
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def dump_config(config: ScenarioConfig) -> str:
    lines = []
    for name in _FIELDS:
        lines.append(f"{name} = {_toml_value(getattr(config, name))}")
    return "\n".join(lines) + "\n"
