"""Built-in control policies and the nearest-neighbor behavior clone.

Policies act on a :class:`View`: a lazy handle exposing the tank's own
pose and (rendered on first access) its observation grid.  Scripted
policies that ignore the raster therefore never pay for rendering.

Clone model files (``.twknn``) are little-endian binary::

    magic   6 bytes  b"TWKNN1"
    u16     container version (1)
    u32     k (neighbor count)
    u32     feature extractor name length, then that many UTF-8 bytes
    u32     number of stored pairs
    u32     feature dimension
    float32 features, pair-major, row-major
    float32 actions, pair-major, 3 per pair (throttle, steer, fire)
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .errors import ConfigError, NoDemonstrationsError
from .observation import EGO_PIXEL, GRID, U_PER_PX, world_to_ego
from .world import Action, Pose

if TYPE_CHECKING:
    from .config import ControlSpec, EnvConfig

CLONE_MAGIC = b"TWKNN1"
CLONE_VERSION = 1
FEATURE_EXTRACTOR = "avgpool8"
FEATURE_DIM = 4 * (GRID // 8) * (GRID // 8)  # 1024

NEUTRAL_RESAMPLE_TICKS = 20
REACTION_DELAY_MAX = 5

# Aggressive-policy tuning (declared, so tests can pin behavior)
STEER_GAIN = 2.0
ALIGNED_BEARING = math.pi / 4
FIRE_BEARING = 0.1
FIRE_RANGE_FRACTION = 0.8
CRUISE_THROTTLE = 0.6
CRUISE_STEER = 0.2
WAYPOINT_REACHED = 8.0


class View:
    """Per-tank, per-tick window a policy is allowed to look through."""

    __slots__ = ("tank_id", "pose", "_obs", "_render")

    def __init__(
        self,
        tank_id: int,
        pose: Pose | None = None,
        observation: np.ndarray | None = None,
        render: Callable[[], np.ndarray] | None = None,
    ):
        self.tank_id = tank_id
        self.pose = pose
        self._obs = observation
        self._render = render

    @property
    def observation(self) -> np.ndarray:
        if self._obs is None:
            if self._render is None:
                raise ValueError("view has no observation source")
            self._obs = self._render()
        return self._obs


class Policy:
    """Deterministic controller: same RNG stream + same views = same actions."""

    needs_observation = False

    def act(self, view: View) -> Action:
        raise NotImplementedError


class RandomPolicy(Policy):
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def act(self, view: View) -> Action:
        t, s, f = self.rng.uniform(-1.0, 1.0, size=3)
        return Action.clamped(t, s, f)


class NeutralDriver(Policy):
    """Wanders: resamples throttle/steer every 20 ticks, never fires."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._tick = 0
        self._throttle = 0.0
        self._steer = 0.0

    def act(self, view: View) -> Action:
        if self._tick % NEUTRAL_RESAMPLE_TICKS == 0:
            self._throttle, self._steer = self.rng.uniform(-1.0, 1.0, size=2)
        self._tick += 1
        return Action.clamped(self._throttle, self._steer, -1.0)


def _nearest_threat(grid: np.ndarray) -> tuple[float, float, float] | None:
    """Ego position and distance of the nearest threat chassis pixel."""
    rows, cols = np.nonzero(grid[1] >= 0.9)
    if rows.size == 0:
        return None
    ex = (cols.astype(np.float64) - EGO_PIXEL) * U_PER_PX
    ey = (EGO_PIXEL - rows.astype(np.float64)) * U_PER_PX
    d2 = ex * ex + ey * ey
    i = int(np.argmin(d2))  # ties resolve to the first pixel in row-major order
    return float(ex[i]), float(ey[i]), float(math.sqrt(d2[i]))


def _pursue(ex: float, ey: float) -> tuple[float, float]:
    """Throttle and steer toward an ego-frame point."""
    bearing = math.atan2(-ex, ey)  # 0 dead ahead, positive counterclockwise
    steer = min(1.0, max(-1.0, STEER_GAIN * bearing))
    throttle = 1.0 if abs(bearing) < ALIGNED_BEARING else 0.3
    return throttle, steer


def _fire_decision(threat, config: "EnvConfig") -> float:
    if threat is None:
        return -1.0
    ex, ey, dist = threat
    bearing = math.atan2(-ex, ey)
    in_range = dist <= FIRE_RANGE_FRACTION * config.projectile_range
    return 1.0 if (in_range and abs(bearing) <= FIRE_BEARING) else -1.0


class AggressivePolicy(Policy):
    """Chase the nearest visible threat; fire when lined up and in range."""

    needs_observation = True

    def __init__(self, config: "EnvConfig", rng: np.random.Generator):
        self.config = config
        self.rng = rng

    def act(self, view: View) -> Action:
        threat = _nearest_threat(view.observation)
        if threat is None:
            return Action.clamped(CRUISE_THROTTLE, CRUISE_STEER, -1.0)
        throttle, steer = _pursue(threat[0], threat[1])
        return Action.clamped(throttle, steer, _fire_decision(threat, self.config))


class PatrolPolicy(Policy):
    """Loop the four arena quadrant centers; fire like Aggressive on threats."""

    needs_observation = True

    def __init__(self, config: "EnvConfig", rng: np.random.Generator):
        self.config = config
        self.rng = rng
        s = config.arena_side
        self.waypoints = (
            (s * 0.25, s * 0.25), (s * 0.75, s * 0.25),
            (s * 0.75, s * 0.75), (s * 0.25, s * 0.75),
        )
        self._target = 0

    def act(self, view: View) -> Action:
        if view.pose is None:
            raise ValueError("patrol policy needs the tank's own pose")
        wx, wy = self.waypoints[self._target]
        if math.hypot(wx - view.pose.x, wy - view.pose.y) < WAYPOINT_REACHED:
            self._target = (self._target + 1) % len(self.waypoints)
            wx, wy = self.waypoints[self._target]
        ex, ey = world_to_ego(wx, wy, view.pose)
        throttle, steer = _pursue(ex, ey)
        threat = _nearest_threat(view.observation)
        return Action.clamped(throttle, steer, _fire_decision(threat, self.config))


class SkillWrappedPolicy(Policy):
    """Variable-skill teammate: action noise plus reaction delay.

    Output is ``clamp(skill * inner + (1 - skill) * uniform_noise)`` and the
    inner policy responds to the view from ``round((1 - skill) * 5)`` ticks
    ago (the delay buffer starts out filled with the first view).
    """

    def __init__(self, inner: Policy, skill: float, rng: np.random.Generator):
        if not 0.0 <= skill <= 1.0:
            raise ConfigError(f"skill {skill} outside [0, 1]")
        self.inner = inner
        self.skill = skill
        self.rng = rng
        self.delay = int(round((1.0 - skill) * REACTION_DELAY_MAX))
        self._views: list[View] = []

    @property
    def needs_observation(self) -> bool:  # type: ignore[override]
        return self.inner.needs_observation

    def act(self, view: View) -> Action:
        if not self._views:
            self._views = [view] * (self.delay + 1)
        else:
            self._views.append(view)
            self._views = self._views[-(self.delay + 1):]
        inner_action = self.inner.act(self._views[0])
        noise = self.rng.uniform(-1.0, 1.0, size=3)
        s = self.skill
        return Action.clamped(
            s * inner_action.throttle + (1.0 - s) * noise[0],
            s * inner_action.steer + (1.0 - s) * noise[1],
            s * inner_action.fire + (1.0 - s) * noise[2],
        )


def degrade_skill(
    inner: Policy, skill: float, rng: np.random.Generator
) -> SkillWrappedPolicy:
    return SkillWrappedPolicy(inner, skill, rng)


def pool_features(grid: np.ndarray) -> np.ndarray:
    """8x average pooling: (4, 128, 128) -> flat float32 vector of 1024."""
    g = np.asarray(grid, dtype=np.float32)
    pooled = g.reshape(4, GRID // 8, 8, GRID // 8, 8).mean(axis=(2, 4))
    return pooled.reshape(-1)


@dataclass
class CloneModel:
    features: np.ndarray  # (n, FEATURE_DIM) float32
    actions: np.ndarray  # (n, 3) float32
    k: int
    extractor: str = FEATURE_EXTRACTOR

    def __post_init__(self):
        if len(self.features) == 0:
            raise NoDemonstrationsError("clone model has no stored pairs")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    def predict(self, features: np.ndarray) -> Action:
        """Mean action of the k nearest stored features (stable ties)."""
        diff = self.features - features.astype(np.float32)
        d2 = np.einsum("ij,ij->i", diff, diff)
        k = min(self.k, len(self.features))
        order = np.argsort(d2, kind="stable")[:k]
        mean = self.actions[order].mean(axis=0)
        return Action.clamped(float(mean[0]), float(mean[1]), float(mean[2]))

    def save(self, path: str | Path) -> None:
        feats = np.ascontiguousarray(self.features, dtype="<f4")
        acts = np.ascontiguousarray(self.actions, dtype="<f4")
        name = self.extractor.encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(CLONE_MAGIC)
            fh.write(struct.pack("<HII", CLONE_VERSION, self.k, len(name)))
            fh.write(name)
            fh.write(struct.pack("<II", feats.shape[0], feats.shape[1]))
            fh.write(feats.tobytes())
            fh.write(acts.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "CloneModel":
        blob = Path(path).read_bytes()
        if blob[:6] != CLONE_MAGIC:
            raise ValueError(f"{path}: not a clone model file")
        version, k, name_len = struct.unpack_from("<HII", blob, 6)
        if version != CLONE_VERSION:
            raise ValueError(f"{path}: unsupported clone model version {version}")
        offset = 6 + 10
        extractor = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        n, dim = struct.unpack_from("<II", blob, offset)
        offset += 8
        feats = np.frombuffer(
            blob, dtype="<f4", count=n * dim, offset=offset
        ).reshape(n, dim).copy()
        offset += 4 * n * dim
        acts = np.frombuffer(
            blob, dtype="<f4", count=n * 3, offset=offset
        ).reshape(n, 3).copy()
        return cls(features=feats, actions=acts, k=k, extractor=extractor)


def fit_knn_clone(
    demos: Sequence[Sequence[tuple[np.ndarray, Action]]], k: int
) -> CloneModel:
    """Store every (pooled observation, action) pair from the demonstrations.

    Pairs keep demonstration order so distance ties break toward the
    earlier demo.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    features: list[np.ndarray] = []
    actions: list[tuple[float, float, float]] = []
    for demo in demos:
        for grid, action in demo:
            features.append(pool_features(grid))
            actions.append((action.throttle, action.steer, action.fire))
    if not features:
        raise NoDemonstrationsError("no demonstrations to fit a clone from")
    return CloneModel(
        features=np.stack(features).astype(np.float32),
        actions=np.asarray(actions, dtype=np.float32),
        k=k,
    )


class KnnClonePolicy(Policy):
    needs_observation = True

    def __init__(self, model: CloneModel):
        self.model = model

    def act(self, view: View) -> Action:
        return self.model.predict(pool_features(view.observation))


def make_policy(
    spec: "ControlSpec", config: "EnvConfig", rng: np.random.Generator
) -> Policy:
    """Instantiate the policy described by a control spec."""
    if spec.kind == "scripted":
        if spec.name == "random":
            inner: Policy = RandomPolicy(rng)
        elif spec.name == "patrol":
            inner = PatrolPolicy(config, rng)
        elif spec.name == "aggressive":
            inner = AggressivePolicy(config, rng)
        else:
            raise ConfigError(f"unknown scripted policy {spec.name!r}")
        if spec.skill != 1.0:
            # the wrapper's noise stream is split off so the inner policy
            # keeps the stream it would have had unwrapped
            return SkillWrappedPolicy(inner, spec.skill, rng.spawn(1)[0])
        return inner
    if spec.kind == "clone":
        try:
            model = CloneModel.load(spec.model)
        except (OSError, ValueError) as exc:
            raise ConfigError(
                f"cannot load clone model {spec.model!r}: {exc}"
            ) from None
        return KnnClonePolicy(model)
    raise ConfigError(f"cannot build a policy for control kind {spec.kind!r}")
