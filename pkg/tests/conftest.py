import math

import pytest

from tanksworld import EnvConfig, Obstacle, Pose, TankState, Team, WorldState


@pytest.fixture
def cfg() -> EnvConfig:
    return EnvConfig()


def make_tank(
    tank_id: int,
    team: Team,
    x: float,
    y: float,
    heading: float = 0.0,
    alive: bool = True,
    reload_remaining: int = 0,
    hp: int = 1,
) -> TankState:
    return TankState(
        id=tank_id, team=team, pose=Pose(x, y, heading), alive=alive,
        reload_remaining=reload_remaining, hp=hp,
    )


def make_world(
    tanks,
    obstacles=(),
    side: float = 100.0,
    tick: int = 0,
    projectiles=(),
) -> WorldState:
    """Build a world from (team, x, y[, heading][, alive]) tuples, ids in order."""
    built = []
    for i, spec in enumerate(tanks):
        team, x, y = spec[0], spec[1], spec[2]
        heading = spec[3] if len(spec) > 3 else 0.0
        alive = spec[4] if len(spec) > 4 else True
        built.append(make_tank(i, team, x, y, heading, alive))
    obs = tuple(
        Obstacle(center=Pose(o[0], o[1]), radius=o[2]) for o in obstacles
    )
    return WorldState(
        tick=tick,
        tanks=tuple(built),
        projectiles=tuple(projectiles),
        obstacles=obs,
        arena_side=side,
    )


def angles_close(a: float, b: float, tol: float = 1e-9) -> bool:
    d = (a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d) <= tol
