"""Scenario configuration: typed schema plus strict YAML loading.

Unknown keys anywhere in a config file are errors; every field of the
file maps one-to-one onto :class:`ScenarioConfig` and its sub-sections.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Any

import yaml

from .cost import Hyperparams
from .data import PartitionSpec

__all__ = [
    "ConfigError",
    "METHODS",
    "ScheduleConfig",
    "DeviceConfig",
    "ChannelConfig",
    "GraphConfig",
    "DatasetConfig",
    "ConsensusLimitConfig",
    "ScenarioConfig",
    "load_config",
    "dump_config",
]

METHODS = ("fedrt", "static_r", "static_t", "ce_fedavg", "mll_sgd")


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


def _from_mapping(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _check_range(pair, name: str, positive: bool = True):
    if (not isinstance(pair, (list, tuple)) or len(pair) != 2
            or pair[0] > pair[1]):
        raise ConfigError(f"{name} must be a [low, high] pair with low <= high")
    if positive and pair[0] <= 0:
        raise ConfigError(f"{name} must be positive")


@dataclass(frozen=True)
class ScheduleConfig:
    global_rounds: int
    edge_rounds: int
    local_iters: int
    batch_size: int
    gossip_steps: int
    model_bits: float
    lr: float
    momentum: float = 0.9

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(self.global_rounds, self.edge_rounds,
                           self.local_iters, self.batch_size,
                           self.gossip_steps, self.model_bits, self.lr)


@dataclass(frozen=True)
class DeviceConfig:
    mu_range: tuple
    alpha_base: float
    alpha_scale_range: tuple
    power: float
    f_min: float
    f_max: float
    energy_budget: float

    def __post_init__(self):
        _check_range(self.mu_range, "devices.mu_range")
        _check_range(self.alpha_scale_range, "devices.alpha_scale_range")
        for name in ("alpha_base", "power", "f_min", "f_max", "energy_budget"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"devices.{name} must be positive")
        if self.f_min > self.f_max:
            raise ConfigError("devices.f_min must not exceed f_max")


@dataclass(frozen=True)
class ChannelConfig:
    snr_db_range: tuple
    server_bandwidth_hz: float
    backhaul_mbps_range: tuple

    def __post_init__(self):
        _check_range(self.snr_db_range, "channel.snr_db_range", positive=False)
        _check_range(self.backhaul_mbps_range, "channel.backhaul_mbps_range")
        if self.server_bandwidth_hz <= 0:
            raise ConfigError("channel.server_bandwidth_hz must be positive")


@dataclass(frozen=True)
class GraphConfig:
    type: str = "complete"
    edge_prob: float = 1.0
    adjacency: Any = None

    def __post_init__(self):
        if self.type not in ("complete", "erdos_renyi", "explicit"):
            raise ConfigError(f"graph.type {self.type!r} not recognized")
        if self.type == "erdos_renyi" and not 0 < self.edge_prob <= 1:
            raise ConfigError("graph.edge_prob must lie in (0, 1]")
        if self.type == "explicit" and self.adjacency is None:
            raise ConfigError("graph.adjacency required for explicit graphs")


@dataclass(frozen=True)
class DatasetConfig:
    num_classes: int
    dim: int
    samples_per_class: int
    separation: float
    test_fraction: float = 0.2

    def __post_init__(self):
        if min(self.num_classes, self.dim, self.samples_per_class) < 1:
            raise ConfigError("dataset sizes must be >= 1")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("dataset.test_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class PartitionConfig:
    scheme: str = "iid"
    beta: float = 1.0
    labels_per_cluster: int = 2

    def spec(self) -> PartitionSpec:
        try:
            return PartitionSpec(self.scheme, self.beta,
                                 self.labels_per_cluster)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class ConsensusLimitConfig:
    """Ceiling on the post-gossip disagreement bound.

    proportional  gamma times the mean pairwise distance observed at the
                  first topology decision with nonzero spread
    constant      the fixed ``value``
    linear_decay  proportional anchor scaled down linearly to zero at the
                  final global round
    """

    schedule: str = "proportional"
    gamma: float = 1.0
    value: float = 0.0

    def __post_init__(self):
        if self.schedule not in ("proportional", "constant", "linear_decay"):
            raise ConfigError(
                f"consensus_limit.schedule {self.schedule!r} not recognized")
        if self.gamma <= 0:
            raise ConfigError("consensus_limit.gamma must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    method: str
    seed: int
    num_clusters: int
    devices_per_cluster: int
    schedule: ScheduleConfig
    devices: DeviceConfig
    channel: ChannelConfig
    dataset: DatasetConfig
    graph: GraphConfig = field(default_factory=GraphConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    consensus_limit: ConsensusLimitConfig = field(
        default_factory=ConsensusLimitConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(
                f"method {self.method!r} not one of {METHODS}")
        if self.num_clusters < 1 or self.devices_per_cluster < 1:
            raise ConfigError("cluster and device counts must be >= 1")

    @property
    def num_devices(self) -> int:
        return self.num_clusters * self.devices_per_cluster

    def replace(self, **kwargs) -> "ScenarioConfig":
        data = asdict(self)
        data.update(kwargs)
        return from_dict(data)


_SECTIONS = {
    "schedule": ScheduleConfig,
    "devices": DeviceConfig,
    "channel": ChannelConfig,
    "graph": GraphConfig,
    "dataset": DatasetConfig,
    "partition": PartitionConfig,
    "consensus_limit": ConsensusLimitConfig,
}


def from_dict(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    parsed = dict(raw)
    for name, cls in _SECTIONS.items():
        if name in parsed and isinstance(parsed[name], dict):
            parsed[name] = _from_mapping(cls, parsed[name], name)
    try:
        return ScenarioConfig(**parsed)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> ScenarioConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return from_dict(raw)


def dump_config(config: ScenarioConfig, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(asdict(config), fh, sort_keys=False)
