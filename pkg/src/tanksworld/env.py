"""Episode orchestration: reset/step loop, policies, termination.

Seed splitting: all subsystem RNG streams derive from the episode seed via
``numpy.random.SeedSequence(entropy=seed, spawn_key=(key,))`` with key 0
for entity placement and key ``2 + tank_id`` for the policy (scripted,
clone, or neutral driver) attached to that tank.  Identical
``(config, seed, external action stream)`` therefore reproduces an
episode bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import world as W
from .config import EnvConfig
from .errors import EpisodeFinishedError, IncompleteActionMapError
from .observation import render_observation
from .policies import NeutralDriver, Policy, View, make_policy
from .scoring import RewardComponents, accumulate, scalarize, team_score
from .sensing import VisibilitySet, team_visibility, visibility_sets
from .world import Action, KillEvent, Team, WorldState


@dataclass(frozen=True, slots=True)
class EpisodeStatus:
    running: bool
    reason: str | None = None  # "team_eliminated" | "max_steps"
    eliminated: tuple[Team, ...] = ()


def is_terminal(state: WorldState, tick: int, config: EnvConfig) -> EpisodeStatus:
    """Terminal when a combat team is wiped or the tick budget is spent.

    Neutral deaths never terminate an episode.
    """
    wiped = tuple(
        team for team in (Team.RED, Team.BLUE)
        if not any(t.alive for t in state.tanks if t.team is team)
    )
    if wiped:
        return EpisodeStatus(running=False, reason="team_eliminated",
                             eliminated=wiped)
    if tick >= config.max_steps:
        return EpisodeStatus(running=False, reason="max_steps")
    return EpisodeStatus(running=True)


@dataclass(slots=True)
class StepResult:
    """Per-external-tank outputs of one step.

    A tank that died during this step appears one last time with
    ``observations[tank_id] is None`` and its final reward delta; dead
    tanks are absent from every later result.
    """

    observations: dict[int, np.ndarray | None]
    reward_components: dict[int, RewardComponents]
    scalar_rewards: dict[int, float]
    done: bool
    info: dict = field(default_factory=dict)


class TanksWorldEnv:
    """One episodic world instance; single-threaded per call, cheap to copy
    by constructing another instance (instances share nothing mutable)."""

    def __init__(self, config: EnvConfig):
        config.validate()
        self.config = config
        self.control_map = config.resolved_control_map()
        self._external_ids = frozenset(
            i for i, spec in self.control_map.items() if spec.kind == "external"
        )
        self._state: WorldState | None = None
        self._policies: dict[int, Policy] = {}
        self._status = EpisodeStatus(running=False)
        self.seed: int | None = None
        self.cumulative: dict[int, RewardComponents] = {}
        self.event_log: list[KillEvent] = []
        self.last_actions: dict[int, Action] = {}
        self._vis_cache: dict = {}

    # -- lifecycle -------------------------------------------------------

    def reset(self, seed: int) -> tuple[dict[int, np.ndarray], dict]:
        self.seed = W.mask_seed(seed)
        self._state = W.spawn_world(self.config, self.seed)
        self._policies = {}
        for tank in self._state.tanks:
            rng = self._stream_for(tank.id)
            if tank.team is Team.NEUTRAL:
                self._policies[tank.id] = NeutralDriver(rng)
            else:
                spec = self.control_map[tank.id]
                if spec.kind != "external":
                    self._policies[tank.id] = make_policy(spec, self.config, rng)
        self.cumulative = {
            t.id: RewardComponents() for t in self._state.tanks
        }
        self.event_log = []
        self.last_actions = {}
        self._vis_cache = {}
        self._status = EpisodeStatus(running=True)
        observations = {
            i: self._render(self._state, i) for i in self.alive_external_ids()
        }
        return observations, self._info()

    def _stream_for(self, tank_id: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(
                entropy=self.seed, spawn_key=(W.STREAM_POLICY_BASE + tank_id,)
            )
        )

    # -- queries -----------------------------------------------------------

    @property
    def state(self) -> WorldState:
        if self._state is None:
            raise RuntimeError("environment not reset")
        return self._state

    @property
    def tick(self) -> int:
        return self.state.tick

    @property
    def done(self) -> bool:
        return not self._status.running

    @property
    def status(self) -> EpisodeStatus:
        return self._status

    def alive_external_ids(self) -> list[int]:
        return sorted(
            t.id for t in self.state.tanks if t.alive and t.id in self._external_ids
        )

    def visibility(self, tank_id: int, state: WorldState | None = None) -> VisibilitySet:
        """Visibility set for one tank, cached per tick and shared per team."""
        state = state or self.state
        team = state.tank_by_id(tank_id).team
        key = (state.tick, team)
        cached = self._vis_cache.get(key)
        if cached is None:
            cached = team_visibility(
                state, team, self.config.comm_range,
                two_hop_only=self.config.two_hop_only,
                neutral_always_visible=self.config.neutral_always_visible,
            )
            if len(self._vis_cache) > 32:  # delayed views look a few ticks back
                self._vis_cache.clear()
            self._vis_cache[key] = cached
        if tank_id in cached:
            return cached[tank_id]
        return visibility_sets(  # dead observers raise here
            state, tank_id, self.config.comm_range,
            two_hop_only=self.config.two_hop_only,
            neutral_always_visible=self.config.neutral_always_visible,
        )

    def observation_for(self, tank_id: int) -> np.ndarray:
        return self._render(self.state, tank_id)

    def state_hash(self) -> str:
        return W.state_hash(self.state)

    def team_scores(self) -> dict[Team, float]:
        teams = {t.id: t.team for t in self.state.tanks}
        include = self.config.team_includes_ally_kills
        return {
            team: team_score(self.cumulative, teams, team, include)
            for team in (Team.RED, Team.BLUE)
        }

    def _render(self, state: WorldState, tank_id: int) -> np.ndarray:
        return render_observation(
            state, tank_id, self.visibility(tank_id, state), self.config
        )

    def _make_view(self, tank_id: int) -> View:
        state = self.state
        pose = state.tank_by_id(tank_id).pose
        return View(
            tank_id, pose=pose, render=lambda: self._render(state, tank_id)
        )

    # -- stepping ----------------------------------------------------------

    def step(self, actions: Mapping[int, Action | tuple]) -> StepResult:
        """Advance one tick, driving scripted/clone/neutral tanks internally.

        ``actions`` must cover every alive externally controlled tank;
        entries for dead external tanks are ignored.
        """
        if self.done:
            raise EpisodeFinishedError("episode finished; call reset()")
        state = self.state

        full: dict[int, Action] = {}
        for tank_id in sorted(actions):
            if tank_id not in self._external_ids:
                raise ValueError(
                    f"action supplied for non-external tank {tank_id}"
                )
            tank = state.tank_by_id(tank_id)
            if not tank.alive:
                continue
            full[tank_id] = _ingest(actions[tank_id])
        missing = [i for i in self.alive_external_ids() if i not in full]
        if missing:
            raise IncompleteActionMapError(
                f"incomplete action map: missing external tanks {missing}"
            )
        for tank in state.tanks:
            if tank.alive and tank.id in self._policies:
                full[tank.id] = self._policies[tank.id].act(
                    self._make_view(tank.id)
                )

        return self._advance(full, render=True)

    def force_step(self, actions: Mapping[int, Action | tuple]) -> StepResult:
        """Apply a verbatim action map, bypassing all live policies.

        Replay uses this: recorded actions for every controlled tank
        (including neutrals) are fed straight into the physics.
        """
        if self.done:
            raise EpisodeFinishedError("episode finished; call reset()")
        full = {i: _ingest(a) for i, a in actions.items()}
        return self._advance(full, render=False)

    def _advance(self, full: dict[int, Action], render: bool) -> StepResult:
        before = self.state
        external_alive_before = set(self.alive_external_ids())
        new_state, events = W.step_world(before, full, self.config)
        self._state = new_state
        self.last_actions = dict(sorted(full.items()))
        self.event_log.extend(events)

        deltas = accumulate(events)
        for tank_id, delta in deltas.items():
            self.cumulative[tank_id].add(delta)
        self._status = is_terminal(new_state, new_state.tick, self.config)

        observations: dict[int, np.ndarray | None] = {}
        components: dict[int, RewardComponents] = {}
        scalars: dict[int, float] = {}
        for tank_id in sorted(external_alive_before):
            tank = new_state.tank_by_id(tank_id)
            delta = deltas.get(tank_id, RewardComponents())
            if tank.alive:
                observations[tank_id] = (
                    self._render(new_state, tank_id) if render else None
                )
            else:
                observations[tank_id] = None  # died this tick: final entry
            components[tank_id] = delta
            scalars[tank_id] = scalarize(delta, self.config.reward_weights)

        return StepResult(
            observations=observations,
            reward_components=components,
            scalar_rewards=scalars,
            done=self.done,
            info=self._info(),
        )

    def _info(self) -> dict:
        state = self.state
        alive = {team: 0 for team in Team}
        for t in state.tanks:
            if t.alive:
                alive[t.team] += 1
        scores = self.team_scores()
        return {
            "tick": state.tick,
            "alive": {team.value: n for team, n in alive.items()},
            "team_scores": {team.value: s for team, s in scores.items()},
            "status": self._status.reason or "running",
            "eliminated": [team.value for team in self._status.eliminated],
        }


def _ingest(action: Action | tuple) -> Action:
    if isinstance(action, Action):
        return Action.clamped(action.throttle, action.steer, action.fire)
    throttle, steer, fire = action
    return Action.clamped(throttle, steer, fire)


@dataclass(slots=True)
class EpisodeSummary:
    seed: int
    ticks: int
    reason: str
    eliminated: tuple[Team, ...]
    team_scores: dict[Team, float]
    components: dict[int, RewardComponents]
    final_hash: str


ExternalDriver = Callable[[int, dict[int, np.ndarray | None]], Mapping[int, Action]]


def run_episode(
    env: TanksWorldEnv,
    seed: int,
    recorder=None,
    external_driver: ExternalDriver | None = None,
) -> EpisodeSummary:
    """Drive one full episode; optionally record it.

    ``external_driver(tick, observations) -> actions`` supplies actions for
    externally controlled tanks; omit it for fully scripted scenarios.
    """
    observations, _ = env.reset(seed)
    if recorder is not None:
        recorder.on_reset(env, seed)
    while not env.done:
        if external_driver is not None:
            acts = external_driver(env.tick, observations)
        elif env.alive_external_ids():
            raise IncompleteActionMapError(
                "episode has external tanks but no external driver"
            )
        else:
            acts = {}
        result = env.step(acts)
        if recorder is not None:
            recorder.on_step(env, pre_observations=observations)
        observations = result.observations
    if recorder is not None:
        recorder.finalize(env)
    return EpisodeSummary(
        seed=seed,
        ticks=env.tick,
        reason=env.status.reason or "running",
        eliminated=env.status.eliminated,
        team_scores=env.team_scores(),
        components={i: c.copy() for i, c in env.cumulative.items()},
        final_hash=env.state_hash(),
    )


class VectorEnv:
    """Thin batch wrapper: K independent instances stepped in sequence.

    Per-instance determinism is untouched; instances share no state, so a
    caller may also step them from separate threads.
    """

    def __init__(self, configs: Sequence[EnvConfig] | EnvConfig, k: int | None = None):
        if isinstance(configs, EnvConfig):
            if k is None:
                raise ValueError("k required when passing a single config")
            configs = [configs] * k
        self.envs = [TanksWorldEnv(c) for c in configs]

    def __len__(self) -> int:
        return len(self.envs)

    def reset(self, seeds: Sequence[int]):
        return [env.reset(seed) for env, seed in zip(self.envs, seeds, strict=True)]

    def step(self, actions: Sequence[Mapping[int, Action | tuple]]):
        return [
            env.step(acts) for env, acts in zip(self.envs, actions, strict=True)
        ]

    @property
    def dones(self) -> list[bool]:
        return [env.done for env in self.envs]
