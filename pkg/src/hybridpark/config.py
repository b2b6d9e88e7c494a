"""Flat ``section.field: value`` configuration covering every tunable default."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from .action_mask import MaskConfig
from .collision import CollisionConfig
from .geometry import VehicleParams
from .hybrid_astar import HybridAStarConfig
from .ogm import OgmBuildConfig
from .sac import SacConfig
from .scenarios import GeneratorConfig
from .simulator import EnvConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingSchedule:
    eval_interval: int = 10_000
    eval_episodes: int = 20
    checkpoint_interval: int = 0
    train_scenarios: int = 60
    parallel_fraction: float = 0.3


@dataclass(frozen=True)
class AppConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    env: EnvConfig = field(default_factory=EnvConfig)
    collision: CollisionConfig = field(default_factory=CollisionConfig)
    mask: MaskConfig = field(default_factory=MaskConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    train: TrainingSchedule = field(default_factory=TrainingSchedule)
    astar: HybridAStarConfig = field(default_factory=HybridAStarConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    ogm: OgmBuildConfig = field(default_factory=OgmBuildConfig)

    def with_seed(self, seed: int) -> "AppConfig":
        return dataclasses.replace(self, sac=dataclasses.replace(self.sac, seed=int(seed)),
                                   astar=dataclasses.replace(self.astar, seed=int(seed)))


def _parse_value(text: str, current, key: str):
    try:
        if isinstance(current, bool):
            low = text.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(current).__name__}") from None
    raise ConfigError(f"{key}: unsupported field type {type(current).__name__}")


def parse_config(text: str, base: AppConfig | None = None) -> AppConfig:
    base = base or AppConfig()
    updates: dict[str, dict] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ConfigError(f"line {n}: expected 'section.field: value'")
        key = key.strip()
        section, dot, name = key.partition(".")
        if not dot or not hasattr(base, section):
            raise ConfigError(f"line {n}: unknown key {key!r}")
        sub = getattr(base, section)
        if name not in {f.name for f in dataclasses.fields(sub)}:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        updates.setdefault(section, {})[name] = _parse_value(value.strip(), getattr(sub, name), key)
    try:
        changed = {sec: dataclasses.replace(getattr(base, sec), **vals)
                   for sec, vals in updates.items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return dataclasses.replace(base, **changed)


def load_config(path) -> AppConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config(path.read_text())


def dump_config(cfg: AppConfig) -> str:
    lines = []
    for sec in dataclasses.fields(cfg):
        sub = getattr(cfg, sec.name)
        for f in dataclasses.fields(sub):
            v = getattr(sub, f.name)
            if isinstance(v, bool):
                text = "true" if v else "false"
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            lines.append(f"{sec.name}.{f.name}: {text}")
    return "\n".join(lines) + "\n"


def env_collision_consistent(cfg: AppConfig) -> bool:
    """The mask and planners must use the same inflated footprint."""
    return (math.isclose(cfg.mask.safety_margin, cfg.collision.safety_margin)
            and math.isclose(cfg.mask.dt, cfg.env.dt))
