"""Ground-truth world state and deterministic physics stepping.

Conventions used throughout the package:

* Headings are radians in ``[0, 2pi)`` and increase counterclockwise.
* A tank with heading ``h`` faces the unit vector ``(-sin h, cos h)``,
  so heading ``0`` points along world ``+y``.
* The arena is the square ``[0, side] x [0, side]`` in arena-local
  coordinates; ``WorldState.arena_frame`` places that square in world
  coordinates (identity by default) so a whole world can be rigidly
  transformed without changing what any tank observes.
* One step advances the world by ``config.dt`` seconds in a fixed
  sub-step order: reload timers, tank integration, collision clamping,
  fire control, projectile flight/expiry, hit tests.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, Mapping

import numpy as np

from .errors import ArenaOvercrowdedError, IncompleteActionMapError

if TYPE_CHECKING:
    from .config import EnvConfig

TWO_PI = 2.0 * math.pi

# Fixed seed-splitting rule: every subsystem RNG is
# ``numpy.random.default_rng(SeedSequence(entropy=seed, spawn_key=(key,)))``.
STREAM_PLACEMENT = 0
STREAM_RESERVED = 1
STREAM_POLICY_BASE = 2  # per-tank policy stream key = base + tank id

# Action components are quantized to this many decimals on ingestion so a
# recorded trajectory (fixed 6-decimal text) replays the exact same floats.
ACTION_DECIMALS = 6

_SEED_MASK = 0xFFFFFFFFFFFFFFFF


def mask_seed(seed: int) -> int:
    """Seeds are 64-bit: negative or oversized values wrap deterministically."""
    return int(seed) & _SEED_MASK

_COLLISION_PASSES = 32


class Team(str, Enum):
    RED = "red"
    BLUE = "blue"
    NEUTRAL = "neutral"


_TEAM_INDEX = {Team.RED: 0, Team.BLUE: 1, Team.NEUTRAL: 2}


def normalize_heading(heading: float) -> float:
    """Wrap an angle into [0, 2pi)."""
    h = heading % TWO_PI
    return 0.0 if h >= TWO_PI else h


def heading_forward(heading: float) -> tuple[float, float]:
    """Unit forward vector for a heading (heading 0 faces +y)."""
    return (-math.sin(heading), math.cos(heading))


@dataclass(frozen=True, slots=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def forward(self) -> tuple[float, float]:
        return heading_forward(self.heading)

    def distance_to(self, other: "Pose") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True, slots=True)
class Action:
    """Continuous control triple; every component lives in [-1, 1]."""

    throttle: float = 0.0
    steer: float = 0.0
    fire: float = 0.0

    @staticmethod
    def clamped(throttle: float, steer: float, fire: float) -> "Action":
        """Ingest raw floats: clamp to [-1, 1] and quantize to 6 decimals."""
        return Action(_ingest(throttle), _ingest(steer), _ingest(fire))


def _ingest(value: float) -> float:
    v = float(value)
    if math.isnan(v):
        raise ValueError("action component is NaN")
    return round(min(1.0, max(-1.0, v)), ACTION_DECIMALS)


@dataclass(frozen=True, slots=True)
class TankState:
    id: int
    team: Team
    pose: Pose
    alive: bool = True
    reload_remaining: int = 0
    hp: int = 1


@dataclass(frozen=True, slots=True)
class Projectile:
    shooter_id: int
    pose: Pose
    age: int = 0


@dataclass(frozen=True, slots=True)
class Obstacle:
    center: Pose
    radius: float


@dataclass(frozen=True, slots=True)
class ArenaFrame:
    """Rigid placement of the arena square: world = R(rotation)*local + origin."""

    origin_x: float = 0.0
    origin_y: float = 0.0
    rotation: float = 0.0

    def to_local(self, x: float, y: float) -> tuple[float, float]:
        dx, dy = x - self.origin_x, y - self.origin_y
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return (c * dx + s * dy, -s * dx + c * dy)

    def to_world(self, lx: float, ly: float) -> tuple[float, float]:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return (c * lx - s * ly + self.origin_x, s * lx + c * ly + self.origin_y)


@dataclass(frozen=True, slots=True)
class KillEvent:
    shooter_id: int
    victim_id: int
    shooter_team: Team
    victim_team: Team
    tick: int


@dataclass(frozen=True, slots=True)
class WorldState:
    tick: int
    tanks: tuple[TankState, ...]
    projectiles: tuple[Projectile, ...]
    obstacles: tuple[Obstacle, ...]
    arena_side: float
    arena_frame: ArenaFrame = ArenaFrame()

    def tank_by_id(self, tank_id: int) -> TankState:
        tank = self.tanks[tank_id]
        if tank.id != tank_id:  # tanks are stored in ascending-id order
            raise KeyError(f"no tank with id {tank_id}")
        return tank

    def alive_tanks(self, team: Team | None = None) -> list[TankState]:
        return [
            t for t in self.tanks
            if t.alive and (team is None or t.team is team)
        ]


def spawn_world(config: "EnvConfig", seed: int) -> WorldState:
    """Place obstacles and tanks by rejection sampling.

    Placement draws come from the dedicated placement stream derived from
    ``seed``, so identical ``(config, seed)`` always yields an identical
    world.  Obstacles are placed first, then tanks in ascending-id order
    (red team, blue team, neutrals).  Any two placed bodies keep a gap of
    at least ``spawn_clearance`` between their outlines.

    Raises ArenaOvercrowdedError once the shared attempt budget is spent.
    """
    config.validate()
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=mask_seed(seed),
                               spawn_key=(STREAM_PLACEMENT,))
    )
    side = config.arena_side
    placed: list[tuple[float, float, float]] = []  # (x, y, body radius)
    attempts = 0

    def try_place(body_radius: float) -> tuple[float, float]:
        nonlocal attempts
        lo, hi = body_radius, side - body_radius
        if hi <= lo:
            raise ArenaOvercrowdedError(
                f"body of radius {body_radius} cannot fit a {side}x{side} arena"
            )
        while True:
            attempts += 1
            if attempts > config.placement_max_attempts:
                raise ArenaOvercrowdedError(
                    "arena overcrowded: placement failed after "
                    f"{config.placement_max_attempts} rejection attempts"
                )
            x = float(rng.uniform(lo, hi))
            y = float(rng.uniform(lo, hi))
            ok = all(
                math.hypot(x - px, y - py) - body_radius - pr
                >= config.spawn_clearance
                for px, py, pr in placed
            )
            if ok:
                placed.append((x, y, body_radius))
                return x, y

    obstacles = []
    for _ in range(config.obstacle_count):
        radius = float(
            rng.uniform(config.obstacle_radius_min, config.obstacle_radius_max)
        )
        x, y = try_place(radius)
        obstacles.append(Obstacle(center=Pose(x, y), radius=radius))

    tanks = []
    for tank_id in range(config.total_tanks):
        x, y = try_place(config.tank_radius)
        heading = normalize_heading(float(rng.uniform(0.0, TWO_PI)))
        tanks.append(
            TankState(
                id=tank_id,
                team=config.team_of(tank_id),
                pose=Pose(x, y, heading),
                hp=config.tank_health,
            )
        )

    return WorldState(
        tick=0,
        tanks=tuple(tanks),
        projectiles=(),
        obstacles=tuple(obstacles),
        arena_side=side,
    )


def integrate_tank(tank: TankState, action: Action, config: "EnvConfig") -> TankState:
    """Explicit Euler kinematics: heading updates first, then translation."""
    heading = normalize_heading(
        tank.pose.heading + action.steer * config.max_turn_rate * config.dt
    )
    fx, fy = heading_forward(heading)
    dist = action.throttle * config.max_speed * config.dt
    pose = Pose(tank.pose.x + fx * dist, tank.pose.y + fy * dist, heading)
    return replace(tank, pose=pose)


def fire_control(
    tank: TankState, fire: float, config: "EnvConfig"
) -> tuple[TankState, Projectile | None]:
    """Spawn a shell at the tank nose iff fire > 0 and the reload timer is 0."""
    if fire <= 0.0 or tank.reload_remaining != 0:
        return tank, None
    fx, fy = tank.pose.forward()
    nose = Pose(
        tank.pose.x + fx * config.tank_radius,
        tank.pose.y + fy * config.tank_radius,
        tank.pose.heading,
    )
    projectile = Projectile(shooter_id=tank.id, pose=nose, age=0)
    return replace(tank, reload_remaining=config.reload_interval), projectile


def step_world(
    state: WorldState,
    actions: Mapping[int, Action],
    config: "EnvConfig",
) -> tuple[WorldState, list[KillEvent]]:
    """Advance one tick; pure function of (state, actions, config).

    Every alive non-neutral tank must have an action; a missing neutral
    action is treated as all-zero (the env normally injects neutral
    driver actions).  Dead tanks are frozen and ignore action entries.

    Kinematics works on scratch arrays and rebuilds the immutable tank
    tuple once at the end; the sub-step order is part of the contract.
    """
    n = len(state.tanks)
    throttle = [0.0] * n
    steer = [0.0] * n
    fire = [0.0] * n
    for tank in state.tanks:
        if not tank.alive:
            continue
        action = actions.get(tank.id)
        if action is None:
            if tank.team is not Team.NEUTRAL:
                raise IncompleteActionMapError(
                    f"incomplete action map: no action for alive tank {tank.id}"
                )
            continue  # zero action
        i = tank.id
        throttle[i], steer[i], fire[i] = action.throttle, action.steer, action.fire

    xs = [t.pose.x for t in state.tanks]
    ys = [t.pose.y for t in state.tanks]
    headings = [t.pose.heading for t in state.tanks]
    alive = [t.alive for t in state.tanks]
    reload_left = [t.reload_remaining for t in state.tanks]
    hp = [t.hp for t in state.tanks]

    # (1) reload timers
    for i in range(n):
        if alive[i] and reload_left[i] > 0:
            reload_left[i] -= 1

    # (2) kinematics (explicit Euler, heading before translation), id order
    turn = config.max_turn_rate * config.dt
    speed = config.max_speed * config.dt
    for i in range(n):
        if not alive[i]:
            continue
        h = normalize_heading(headings[i] + steer[i] * turn)
        headings[i] = h
        dist = throttle[i] * speed
        if dist != 0.0:
            xs[i] -= math.sin(h) * dist
            ys[i] += math.cos(h) * dist

    # (3) positional collision clamping (never damages)
    _resolve_collisions(xs, ys, alive, state, config)

    # (4) fire control, ascending id
    spawned: list[Projectile] = []
    for i in range(n):
        if alive[i] and fire[i] > 0.0 and reload_left[i] == 0:
            fx, fy = heading_forward(headings[i])
            spawned.append(
                Projectile(
                    shooter_id=i,
                    pose=Pose(
                        xs[i] + fx * config.tank_radius,
                        ys[i] + fy * config.tank_radius,
                        headings[i],
                    ),
                    age=0,
                )
            )
            reload_left[i] = config.reload_interval

    # (5) projectile flight and expiry
    step_len = config.projectile_speed * config.dt
    in_flight: list[Projectile] = []
    for p in list(state.projectiles) + spawned:
        fx, fy = p.pose.forward()
        moved = Projectile(
            shooter_id=p.shooter_id,
            pose=Pose(p.pose.x + fx * step_len, p.pose.y + fy * step_len,
                      p.pose.heading),
            age=p.age + 1,
        )
        if moved.age < config.projectile_lifetime:
            in_flight.append(moved)

    # (6) hit tests: smallest victim id wins a multi-overlap, shooters are
    # immune to their own shells, dead tanks are transparent to fire
    events: list[KillEvent] = []
    hit_radius_sq = (config.tank_radius + config.projectile_radius) ** 2
    surviving: list[Projectile] = []
    for p in in_flight:
        victim = -1
        for i in range(n):
            if not alive[i] or i == p.shooter_id:
                continue
            dx = xs[i] - p.pose.x
            dy = ys[i] - p.pose.y
            if dx * dx + dy * dy <= hit_radius_sq:
                victim = i
                break
        if victim < 0:
            surviving.append(p)
            continue
        hp[victim] -= 1
        if hp[victim] <= 0:
            alive[victim] = False
            events.append(
                KillEvent(
                    shooter_id=p.shooter_id,
                    victim_id=victim,
                    shooter_team=state.tanks[p.shooter_id].team,
                    victim_team=state.tanks[victim].team,
                    tick=state.tick,
                )
            )

    tanks = tuple(
        TankState(
            id=i,
            team=state.tanks[i].team,
            pose=Pose(xs[i], ys[i], headings[i]),
            alive=alive[i],
            reload_remaining=reload_left[i],
            hp=hp[i],
        )
        if (alive[i] or state.tanks[i].alive)
        else state.tanks[i]  # already-dead tanks are frozen verbatim
        for i in range(n)
    )
    new_state = WorldState(
        tick=state.tick + 1,
        tanks=tanks,
        projectiles=tuple(surviving),
        obstacles=state.obstacles,
        arena_side=state.arena_side,
        arena_frame=state.arena_frame,
    )
    return new_state, events


def _resolve_collisions(
    xs: list[float],
    ys: list[float],
    alive: list[bool],
    state: WorldState,
    config: "EnvConfig",
) -> None:
    """Clamp alive tanks out of walls, obstacles, and each other.

    Relaxation passes run until stable (capped).  Only alive tanks move;
    dead tanks are solid but frozen.  Overlaps resolve by pushing the tank
    currently being processed, in ascending-id order, so the outcome is
    deterministic.  Wall clamping runs last: containment always wins.
    """
    r = config.tank_radius
    side = state.arena_side
    frame = state.arena_frame
    identity = (
        frame.rotation == 0.0 and frame.origin_x == 0.0 and frame.origin_y == 0.0
    )
    lo, hi = r, side - r
    n = len(xs)
    obstacles = state.obstacles

    def clamp_to_walls(x: float, y: float) -> tuple[float, float]:
        if identity:
            return (min(max(x, lo), hi), min(max(y, lo), hi))
        lx, ly = frame.to_local(x, y)
        cx = min(max(lx, lo), hi)
        cy = min(max(ly, lo), hi)
        if cx == lx and cy == ly:
            return x, y
        return frame.to_world(cx, cy)

    pair_d = 2.0 * r
    pair_d_sq = pair_d * pair_d
    for _ in range(_COLLISION_PASSES):
        moved = False
        for i in range(n):
            if not alive[i]:
                continue
            x, y = xs[i], ys[i]
            nx, ny = clamp_to_walls(x, y)

            for ob in obstacles:
                min_d = r + ob.radius
                dx, dy = nx - ob.center.x, ny - ob.center.y
                d_sq = dx * dx + dy * dy
                if d_sq < min_d * min_d:
                    if d_sq == 0.0:
                        dx, d = 1.0, 1.0  # degenerate: push along +x
                        dy = 0.0
                    else:
                        d = math.sqrt(d_sq)
                    nx = ob.center.x + dx / d * min_d
                    ny = ob.center.y + dy / d * min_d

            for j in range(n):
                if j == i:
                    continue
                dx, dy = nx - xs[j], ny - ys[j]
                d_sq = dx * dx + dy * dy
                if d_sq < pair_d_sq:
                    if d_sq == 0.0:
                        dx, d = 1.0, 1.0
                        dy = 0.0
                    else:
                        d = math.sqrt(d_sq)
                    nx = xs[j] + dx / d * pair_d
                    ny = ys[j] + dy / d * pair_d

            if nx != x or ny != y:
                xs[i], ys[i] = nx, ny
                moved = True
        if not moved:
            break

    for i in range(n):
        if alive[i]:
            xs[i], ys[i] = clamp_to_walls(xs[i], ys[i])


def apply_rigid_transform(
    state: WorldState, angle: float, tx: float, ty: float
) -> WorldState:
    """Rotate by ``angle`` about the origin then translate every entity,
    including the arena frame, preserving all relative geometry."""
    c, s = math.cos(angle), math.sin(angle)

    def move(pose: Pose) -> Pose:
        return Pose(
            c * pose.x - s * pose.y + tx,
            s * pose.x + c * pose.y + ty,
            normalize_heading(pose.heading + angle),
        )

    frame = state.arena_frame
    new_frame = ArenaFrame(
        origin_x=c * frame.origin_x - s * frame.origin_y + tx,
        origin_y=s * frame.origin_x + c * frame.origin_y + ty,
        rotation=normalize_heading(frame.rotation + angle),
    )
    return WorldState(
        tick=state.tick,
        tanks=tuple(replace(t, pose=move(t.pose)) for t in state.tanks),
        projectiles=tuple(replace(p, pose=move(p.pose)) for p in state.projectiles),
        obstacles=tuple(
            Obstacle(center=move(o.center), radius=o.radius) for o in state.obstacles
        ),
        arena_side=state.arena_side,
        arena_frame=new_frame,
    )


def state_hash(state: WorldState) -> str:
    """16-hex-char digest of the full ground truth, stable across runs."""
    h = hashlib.blake2b(digest_size=8)
    frame = state.arena_frame
    h.update(
        struct.pack(
            "<Q4d", state.tick, state.arena_side,
            frame.origin_x, frame.origin_y, frame.rotation,
        )
    )
    for t in state.tanks:
        h.update(
            struct.pack(
                "<IBBII3d",
                t.id, _TEAM_INDEX[t.team], int(t.alive), t.reload_remaining,
                max(t.hp, 0), t.pose.x, t.pose.y, t.pose.heading,
            )
        )
    for p in state.projectiles:
        h.update(
            struct.pack(
                "<II3d", p.shooter_id, p.age, p.pose.x, p.pose.y, p.pose.heading
            )
        )
    for o in state.obstacles:
        h.update(struct.pack("<3d", o.center.x, o.center.y, o.radius))
    return h.hexdigest()
