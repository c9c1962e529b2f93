"""Deterministic headless N-vs-N tank arena for multi-agent safety research.

Quick start::

    from tanksworld import EnvConfig, TanksWorldEnv

    env = TanksWorldEnv(EnvConfig())
    observations, info = env.reset(seed=42)
    result = env.step({i: (1.0, 0.0, -1.0) for i in observations})
"""

from .config import ControlSpec, EnvConfig, load_config
from .env import (
    EpisodeStatus,
    EpisodeSummary,
    StepResult,
    TanksWorldEnv,
    VectorEnv,
    is_terminal,
    run_episode,
)
from .errors import (
    ArenaOvercrowdedError,
    ConfigError,
    CorruptTrajectoryError,
    DeadObserverError,
    EpisodeFinishedError,
    IncompleteActionMapError,
    NoDemonstrationsError,
    ProtocolError,
    TanksWorldError,
    TrajectoryError,
    UnsupportedVersionError,
)
from .observation import render_observation, world_to_ego
from .policies import CloneModel, Policy, View, degrade_skill, fit_knn_clone
from .scoring import RewardComponents, RewardWeights, accumulate, scalarize, team_score
from .sensing import CommGraph, VisibilitySet, ally_components, visibility_sets
from .trajectory import (
    ReplayReport,
    TrajectoryFile,
    TrajectoryRecorder,
    demos_from_trajectory,
    replay,
)
from .world import (
    Action,
    ArenaFrame,
    KillEvent,
    Obstacle,
    Pose,
    Projectile,
    Team,
    TankState,
    WorldState,
    apply_rigid_transform,
    fire_control,
    integrate_tank,
    spawn_world,
    state_hash,
    step_world,
)

__version__ = "0.1.0"
