"""Scenario configuration and its on-disk key/value format.

Config files are plain text, one ``key = value`` per line, ``#`` comments,
mirroring :class:`EnvConfig` fields one-to-one.  Nested values use dotted
keys (``reward_weights.w_enemy``, ``control_map.3``).  Unknown keys are
rejected.  Control specs are compact strings::

    external                  externally supplied actions (API / network)
    scripted:<name>[:skill]   built-in policy, optional skill in [0, 1]
    clone:<path>              k-NN behavior clone loaded from a model file

Tank ids are assigned red team first (0..N-1), then blue (N..2N-1), then
neutrals; the control map covers exactly the non-neutral ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, TextIO

from .errors import ConfigError
from .scoring import RewardWeights
from .world import Team

SCRIPTED_POLICY_NAMES = ("random", "patrol", "aggressive")

OBSTACLE_DENSITY_SCALE = 20  # obstacle count = round(density * 20)


@dataclass(frozen=True, slots=True)
class ControlSpec:
    kind: str  # "external" | "scripted" | "clone"
    name: str = ""
    skill: float = 1.0
    model: str = ""

    @staticmethod
    def parse(text: str) -> "ControlSpec":
        parts = text.strip().split(":")
        if parts[0] == "external" and len(parts) == 1:
            return ControlSpec(kind="external")
        if parts[0] == "scripted" and len(parts) in (2, 3):
            name = parts[1]
            if name not in SCRIPTED_POLICY_NAMES:
                raise ConfigError(f"unknown scripted policy {name!r}")
            skill = 1.0
            if len(parts) == 3:
                try:
                    skill = float(parts[2])
                except ValueError:
                    raise ConfigError(f"bad skill value {parts[2]!r}") from None
                if not 0.0 <= skill <= 1.0:
                    raise ConfigError(f"skill {skill} outside [0, 1]")
            return ControlSpec(kind="scripted", name=name, skill=skill)
        if parts[0] == "clone" and len(parts) >= 2:
            return ControlSpec(kind="clone", model=text.strip()[len("clone:"):])
        raise ConfigError(f"bad control spec {text!r}")

    def to_string(self) -> str:
        if self.kind == "external":
            return "external"
        if self.kind == "scripted":
            if self.skill != 1.0:
                return f"scripted:{self.name}:{_fmt(self.skill)}"
            return f"scripted:{self.name}"
        return f"clone:{self.model}"


EXTERNAL = ControlSpec(kind="external")


@dataclass(frozen=True)
class EnvConfig:
    # scenario
    team_size: int = 5
    neutral_count: int = 2
    obstacle_density: float = 0.5
    comm_range: float = 30.0
    max_steps: int = 1000
    # physics
    arena_side: float = 100.0
    dt: float = 0.1
    max_speed: float = 5.0
    max_turn_rate: float = math.pi / 2
    tank_radius: float = 1.5
    projectile_speed: float = 20.0
    projectile_lifetime: int = 25
    projectile_radius: float = 0.5
    reload_interval: int = 10
    obstacle_radius_min: float = 1.0
    obstacle_radius_max: float = 4.0
    tank_health: int = 1
    spawn_clearance: float = 1.0
    placement_max_attempts: int = 10_000
    # behavior flags
    two_hop_only: bool = False
    neutral_always_visible: bool = False
    team_includes_ally_kills: bool = False
    # rewards
    reward_weights: RewardWeights = RewardWeights()
    # control: None means the default map (red external, blue aggressive)
    control_map: dict[int, ControlSpec] | None = None

    # -- derived helpers ------------------------------------------------

    @property
    def total_tanks(self) -> int:
        return 2 * self.team_size + self.neutral_count

    @property
    def obstacle_count(self) -> int:
        return int(math.floor(self.obstacle_density * OBSTACLE_DENSITY_SCALE + 0.5))

    @property
    def projectile_range(self) -> float:
        return self.projectile_speed * self.dt * self.projectile_lifetime

    def team_of(self, tank_id: int) -> Team:
        if 0 <= tank_id < self.team_size:
            return Team.RED
        if tank_id < 2 * self.team_size:
            return Team.BLUE
        if tank_id < self.total_tanks:
            return Team.NEUTRAL
        raise ConfigError(f"tank id {tank_id} out of range")

    def team_ids(self, team: Team) -> range:
        n = self.team_size
        if team is Team.RED:
            return range(0, n)
        if team is Team.BLUE:
            return range(n, 2 * n)
        return range(2 * n, self.total_tanks)

    def resolved_control_map(self) -> dict[int, ControlSpec]:
        if self.control_map is not None:
            return dict(self.control_map)
        mapping = {i: EXTERNAL for i in self.team_ids(Team.RED)}
        for i in self.team_ids(Team.BLUE):
            mapping[i] = ControlSpec(kind="scripted", name="aggressive")
        return mapping

    def external_ids(self) -> list[int]:
        return sorted(
            i for i, spec in self.resolved_control_map().items()
            if spec.kind == "external"
        )

    def with_team_control(self, team: Team, spec: ControlSpec) -> "EnvConfig":
        mapping = self.resolved_control_map()
        for i in self.team_ids(team):
            mapping[i] = spec
        return replace(self, control_map=mapping)

    # -- validation ------------------------------------------------------

    def validate(self) -> None:
        if self.team_size < 1:
            raise ConfigError("team_size must be >= 1")
        if self.neutral_count < 0:
            raise ConfigError("neutral_count must be >= 0")
        if not 0.0 <= self.obstacle_density <= 1.0:
            raise ConfigError("obstacle_density must be within [0, 1]")
        if self.comm_range < 0.0:
            raise ConfigError("comm_range must be >= 0")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        for name in ("arena_side", "dt", "max_speed", "max_turn_rate",
                     "tank_radius", "projectile_speed", "projectile_radius"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ConfigError(f"{name} must be positive and finite")
        if self.projectile_lifetime < 1 or self.reload_interval < 0:
            raise ConfigError("projectile_lifetime/reload_interval out of range")
        if not 0.0 < self.obstacle_radius_min <= self.obstacle_radius_max:
            raise ConfigError("obstacle radius bounds out of order")
        if self.tank_health < 1:
            raise ConfigError("tank_health must be >= 1")
        if self.spawn_clearance < 0.0:
            raise ConfigError("spawn_clearance must be >= 0")
        try:
            self.reward_weights.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.control_map is not None:
            expected = set(self.team_ids(Team.RED)) | set(self.team_ids(Team.BLUE))
            got = set(self.control_map)
            if got != expected:
                raise ConfigError(
                    "control_map must cover exactly the non-neutral tank ids "
                    f"{sorted(expected)}, got {sorted(got)}"
                )
            for spec in self.control_map.values():
                if spec.kind not in ("external", "scripted", "clone"):
                    raise ConfigError(f"bad control kind {spec.kind!r}")
                if spec.kind == "scripted" and not 0.0 <= spec.skill <= 1.0:
                    raise ConfigError(f"skill {spec.skill} outside [0, 1]")

    # -- serialization ---------------------------------------------------

    def to_lines(self) -> list[str]:
        lines = [
            f"team_size = {self.team_size}",
            f"neutral_count = {self.neutral_count}",
            f"obstacle_density = {_fmt(self.obstacle_density)}",
            f"comm_range = {_fmt(self.comm_range)}",
            f"max_steps = {self.max_steps}",
            f"arena_side = {_fmt(self.arena_side)}",
            f"dt = {_fmt(self.dt)}",
            f"max_speed = {_fmt(self.max_speed)}",
            f"max_turn_rate = {_fmt(self.max_turn_rate)}",
            f"tank_radius = {_fmt(self.tank_radius)}",
            f"projectile_speed = {_fmt(self.projectile_speed)}",
            f"projectile_lifetime = {self.projectile_lifetime}",
            f"projectile_radius = {_fmt(self.projectile_radius)}",
            f"reload_interval = {self.reload_interval}",
            f"obstacle_radius_min = {_fmt(self.obstacle_radius_min)}",
            f"obstacle_radius_max = {_fmt(self.obstacle_radius_max)}",
            f"tank_health = {self.tank_health}",
            f"spawn_clearance = {_fmt(self.spawn_clearance)}",
            f"placement_max_attempts = {self.placement_max_attempts}",
            f"two_hop_only = {_fmt_bool(self.two_hop_only)}",
            f"neutral_always_visible = {_fmt_bool(self.neutral_always_visible)}",
            f"team_includes_ally_kills = {_fmt_bool(self.team_includes_ally_kills)}",
            f"reward_weights.w_enemy = {_fmt(self.reward_weights.w_enemy)}",
            f"reward_weights.w_death = {_fmt(self.reward_weights.w_death)}",
            f"reward_weights.w_ally = {_fmt(self.reward_weights.w_ally)}",
            f"reward_weights.w_neutral = {_fmt(self.reward_weights.w_neutral)}",
        ]
        if self.control_map is not None:
            for tank_id in sorted(self.control_map):
                spec = self.control_map[tank_id]
                lines.append(f"control_map.{tank_id} = {spec.to_string()}")
        return lines

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            "\n".join(self.to_lines()) + "\n", encoding="utf-8"
        )


_INT_KEYS = {
    "team_size", "neutral_count", "max_steps", "projectile_lifetime",
    "reload_interval", "tank_health", "placement_max_attempts",
}
_FLOAT_KEYS = {
    "obstacle_density", "comm_range", "arena_side", "dt", "max_speed",
    "max_turn_rate", "tank_radius", "projectile_speed", "projectile_radius",
    "obstacle_radius_min", "obstacle_radius_max", "spawn_clearance",
}
_BOOL_KEYS = {"two_hop_only", "neutral_always_visible", "team_includes_ally_kills"}
_WEIGHT_KEYS = {"w_enemy", "w_death", "w_ally", "w_neutral"}


def config_from_lines(lines: Iterable[str]) -> EnvConfig:
    values: dict[str, object] = {}
    weights: dict[str, float] = {}
    control: dict[int, ControlSpec] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in _BOOL_KEYS:
                values[key] = _parse_bool(value, key)
            elif key.startswith("reward_weights."):
                sub = key.split(".", 1)[1]
                if sub not in _WEIGHT_KEYS:
                    raise ConfigError(f"unknown key {key!r}")
                weights[sub] = float(value)
            elif key.startswith("control_map."):
                tank_id = int(key.split(".", 1)[1])
                control[tank_id] = ControlSpec.parse(value)
            else:
                raise ConfigError(f"unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    if weights:
        values["reward_weights"] = RewardWeights(**{
            k: weights.get(k, getattr(RewardWeights(), k)) for k in _WEIGHT_KEYS
        })
    if control:
        values["control_map"] = control
    config = EnvConfig(**values)  # type: ignore[arg-type]
    config.validate()
    return config


def load_config(source: str | Path | TextIO) -> EnvConfig:
    if hasattr(source, "read"):
        text = source.read()  # type: ignore[union-attr]
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
    return config_from_lines(text.splitlines())


def _parse_bool(value: str, key: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"bad boolean for {key!r}: {value!r}")


def _fmt(value: float) -> str:
    return repr(float(value))


def _fmt_bool(value: bool) -> str:
    return "true" if value else "false"
