"""Fleet, GA and solver configuration with file loading and defaults.

Defaults mirror the reference drone deployment: 10 minute endurance, 6 m/s
cruise, 6.5 m coverage width, 500 m communication radius, four UAVs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class FleetSpec:
    """UAV fleet parameters; distances in metres, times in seconds."""

    k: int = 4
    endurance_s: float = 600.0
    cruise_speed_mps: float = 6.0
    coverage_width_m: float = 6.5
    comm_radius_m: float = 500.0

    def __post_init__(self):
        for name in ("k", "endurance_s", "cruise_speed_mps", "coverage_width_m", "comm_radius_m"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"fleet parameter {name} must be positive")

    @property
    def battery_distance_m(self) -> float:
        """Distance budget per battery charge: endurance x cruise speed."""
        return self.endurance_s * self.cruise_speed_mps

    @property
    def area_per_uav_m2(self) -> float:
        """Area one UAV covers per charge: endurance x speed x coverage width."""
        return self.endurance_s * self.cruise_speed_mps * self.coverage_width_m


@dataclass(frozen=True)
class GAParams:
    """Shared genetic-algorithm knobs for the partition GA and the RKGA."""

    population: int = 100
    generations: int = 50
    elite_frac: float = 0.1
    crossover_rate: float = 0.7
    mutation_rate: float = 0.1
    mutation_sigma_frac: float = 0.02
    tournament_size: int = 2
    stall_generations: int = 0  # 0 disables early stopping
    stall_rel_tol: float = 1e-3  # relative window improvement counting as "converged"

    def __post_init__(self):
        if self.population < 2:
            raise ConfigError("population must be at least 2")
        if self.generations < 0:
            raise ConfigError("generations must be non-negative")
        if not 0.0 < self.elite_frac <= 0.5:
            raise ConfigError("elite_frac must be in (0, 0.5]")

    @property
    def elite_count(self) -> int:
        return max(1, int(round(self.elite_frac * self.population)))


@dataclass(frozen=True)
class PartitionWeights:
    """Weights of the partition fitness terms plus the variance regulariser."""

    w_area: float = 1.0
    w_roundness: float = 1.0
    w_perimeter: float = 1.0
    epsilon: float = 1e-9

    def __post_init__(self):
        ws = (self.w_area, self.w_roundness, self.w_perimeter)
        if any(w < 0 for w in ws):
            raise ConfigError("fitness weights must be non-negative")
        if all(w == 0 for w in ws):
            raise ConfigError("at least one fitness weight must be positive")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")


@dataclass(frozen=True)
class MiqpBudget:
    """Branch-and-bound limits; exhaustion returns the incumbent."""

    max_nodes: int = 20000
    time_limit_s: float = 10.0


@dataclass(frozen=True)
class PlannerConfig:
    fleet: FleetSpec = field(default_factory=FleetSpec)
    partition_ga: GAParams = field(default_factory=lambda: GAParams(population=200, generations=15))
    rkga: GAParams = field(default_factory=lambda: GAParams(population=100, generations=50, stall_generations=15))
    weights: PartitionWeights = field(default_factory=PartitionWeights)
    miqp: MiqpBudget = field(default_factory=MiqpBudget)
    # fraction of the fleet distance budget a cell's estimated trail length may use
    battery_margin: float = 0.95

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


_SECTIONS = {
    "fleet": FleetSpec,
    "partition_ga": GAParams,
    "rkga": GAParams,
    "weights": PartitionWeights,
    "miqp": MiqpBudget,
}


def config_from_dict(data: dict) -> PlannerConfig:
    defaults = PlannerConfig()
    kwargs = {}
    unknown = set(data) - set(_SECTIONS) - {"battery_margin"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for section, cls in _SECTIONS.items():
        base = asdict(getattr(defaults, section))
        override = data.get(section, {})
        bad = set(override) - set(base)
        if bad:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(bad)}")
        base.update(override)
        try:
            kwargs[section] = cls(**base)
        except TypeError as exc:
            raise ConfigError(f"bad [{section}] config: {exc}") from exc
    kwargs["battery_margin"] = float(data.get("battery_margin", defaults.battery_margin))
    if not 0.1 <= kwargs["battery_margin"] <= 1.0:
        raise ConfigError("battery_margin must be in [0.1, 1.0]")
    return PlannerConfig(**kwargs)


def load_config(path) -> PlannerConfig:
    """Load a JSON config file; missing keys fall back to defaults."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(data)
