"""Acceptance gate: one test per top-level criterion, exact tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line
per criterion.  Throughput is an engineering target reported for review
rather than asserted (see the printed INFO line).
"""

import math
import time

import numpy as np

from tanksworld import (
    Action,
    EnvConfig,
    RewardComponents,
    Team,
    TanksWorldEnv,
    TrajectoryRecorder,
    accumulate,
    apply_rigid_transform,
    render_observation,
    run_episode,
    spawn_world,
    step_world,
    team_score,
    visibility_sets,
)
from tanksworld._mem import tune_allocator
from tanksworld.config import ControlSpec
from tanksworld.policies import fit_knn_clone, pool_features
from tanksworld.sensing import VisibilitySet
from tanksworld.trajectory import TrajectoryFile, replay

from conftest import make_world
from test_sensing import closure_oracle, random_world

RANDOM = ControlSpec("scripted", "random")


def announce(name: str, detail: str) -> None:
    print(f"\nACCEPTANCE {name}: PASS ({detail})")


def all_random(config: EnvConfig) -> EnvConfig:
    return (
        config.with_team_control(Team.RED, RANDOM)
        .with_team_control(Team.BLUE, RANDOM)
    )


def play_out(state, config, tick_actions, max_ticks=200):
    """Engine-level scripted scenario driver; returns cumulative components."""
    cumulative: dict[int, RewardComponents] = {
        t.id: RewardComponents() for t in state.tanks
    }
    for tick in range(max_ticks):
        acts = tick_actions(tick, state)
        state, events = step_world(state, acts, config)
        for tank_id, delta in accumulate(events).items():
            cumulative[tank_id].add(delta)
        if not any(t.alive and t.team is Team.BLUE for t in state.tanks) and \
           not any(t.alive and t.team is Team.RED for t in state.tanks):
            break
    return state, cumulative


class TestRewardBounds:
    """5v5 with 2 neutrals under default weights hits the stated extremes."""

    def teams_of(self, state):
        return {t.id: t.team for t in state.tanks}

    def test_clean_sweep_scores_plus_five_exactly(self, cfg):
        # five firing lanes: each red faces the blue straight ahead
        tanks = [(Team.RED, 10.0 + 8 * i, 40.0, 0.0) for i in range(5)]
        tanks += [(Team.BLUE, 10.0 + 8 * i, 52.0, 0.0) for i in range(5)]
        tanks += [(Team.NEUTRAL, 90.0, 10.0, 0.0), (Team.NEUTRAL, 90.0, 20.0, 0.0)]
        state = make_world(tanks)

        def script(tick, current):
            fire = 1.0 if tick == 0 else 0.0
            return {
                t.id: Action(fire=fire) if t.team is Team.RED else Action()
                for t in current.tanks
                if t.alive and t.team is not Team.NEUTRAL
            }

        final, cumulative = play_out(state, cfg, script, max_ticks=40)
        teams = self.teams_of(final)
        assert not any(t.alive for t in final.tanks if t.team is Team.BLUE)
        assert team_score(cumulative, teams, Team.RED) == 5.0
        assert team_score(cumulative, teams, Team.BLUE) == -5.0
        announce("reward-bounds-max",
                 "red sweep of 5 blues scores exactly +5")

    def test_worst_case_scores_minus_seven_exactly(self, cfg):
        # phase 1: red 0/1 destroy the neutrals parked in their lanes;
        # phase 2: the blues behind execute all five reds
        tanks = [(Team.RED, 10.0 + 8 * i, 40.0, 0.0) for i in range(5)]
        tanks += [(Team.BLUE, 10.0 + 8 * i, 20.0, 0.0) for i in range(5)]
        tanks += [(Team.NEUTRAL, 10.0, 50.0, 0.0), (Team.NEUTRAL, 18.0, 50.0, 0.0)]
        state = make_world(tanks)

        def script(tick, current):
            neutrals_gone = not any(
                t.alive for t in current.tanks if t.team is Team.NEUTRAL
            )
            acts = {}
            for t in current.tanks:
                if not t.alive or t.team is Team.NEUTRAL:
                    continue
                if t.team is Team.RED:
                    acts[t.id] = Action(fire=1.0 if tick == 0 else 0.0)
                else:
                    acts[t.id] = Action(fire=1.0 if neutrals_gone else 0.0)
            return acts

        final, cumulative = play_out(state, cfg, script, max_ticks=60)
        teams = self.teams_of(final)
        assert not any(t.alive for t in final.tanks if t.team is Team.RED)
        assert not any(t.alive for t in final.tanks if t.team is Team.NEUTRAL)
        assert team_score(cumulative, teams, Team.RED) == -7.0
        assert team_score(cumulative, teams, Team.BLUE) == 5.0
        announce("reward-bounds-min",
                 "wiped red team plus both neutrals scores exactly -7")

    def test_thousand_random_episodes_stay_in_bounds(self):
        start = time.monotonic()
        config = all_random(EnvConfig(max_steps=80))
        env = TanksWorldEnv(config)
        worst, best = 0.0, 0.0
        for seed in range(1000):
            env.reset(seed)
            while not env.done:
                env.step({})
            scores = env.team_scores()
            for score in scores.values():
                assert -7.0 <= score <= 5.0
                worst, best = min(worst, score), max(best, score)
        elapsed = time.monotonic() - start
        assert elapsed < 120.0, f"runtime budget exceeded: {elapsed:.1f}s"
        announce(
            "reward-bounds-random",
            f"1000 episodes in {elapsed:.1f}s, scores within "
            f"[{worst:g}, {best:g}] of [-7, +5]",
        )


class TestObservationContract:
    def test_five_hundred_random_states(self, cfg):
        rng = np.random.default_rng(0)
        checked = 0
        states = 0
        for seed in range(100):
            state = spawn_world(cfg, seed=seed)
            for _ in range(5):
                for _ in range(3):
                    acts = {
                        t.id: Action.clamped(*rng.uniform(-1, 1, 3))
                        for t in state.tanks if t.alive
                    }
                    state, _ = step_world(state, acts, cfg)
                states += 1
                for tank in state.tanks:
                    if not tank.alive or tank.team is Team.NEUTRAL:
                        continue
                    grid = render_observation(state, tank.id, None, cfg)
                    assert grid.shape == (4, 128, 128)
                    assert float(grid.min()) >= 0.0
                    assert float(grid.max()) <= 1.0
                    assert grid[0, 64, 64] == 1.0
                    checked += 1
        assert states == 500
        announce("observation-contract",
                 f"{checked} observations over {states} states, exact")


class TestEgoFrameInvariance:
    def test_hundred_random_transforms(self, cfg):
        rng = np.random.default_rng(42)
        base_states = []
        for seed in (3, 17, 29):
            state = spawn_world(cfg, seed=seed)
            for _ in range(4):
                acts = {
                    t.id: Action.clamped(*rng.uniform(-1, 1, 3))
                    for t in state.tanks if t.alive
                }
                state, _ = step_world(state, acts, cfg)
            base_states.append(state)

        def diff(a, b):
            return int((a != b).sum())

        def observer_shift(state, tank_id, dx, dy):
            import dataclasses

            tanks = list(state.tanks)
            tank = tanks[tank_id]
            tanks[tank_id] = dataclasses.replace(
                tank,
                pose=dataclasses.replace(
                    tank.pose, x=tank.pose.x + dx, y=tank.pose.y + dy
                ),
            )
            return dataclasses.replace(state, tanks=tuple(tanks))

        transforms = 0
        worst_margin = None
        while transforms < 100:
            state = base_states[transforms % len(base_states)]
            angle = float(rng.uniform(0.0, 2 * math.pi))
            tx, ty = (float(v) for v in rng.uniform(-30.0, 30.0, size=2))
            moved = apply_rigid_transform(state, angle, tx, ty)
            tank_id = int(rng.choice([
                t.id for t in state.tanks if t.alive and t.team is not Team.NEUTRAL
            ]))
            base = render_observation(state, tank_id, None, cfg)
            transformed = render_observation(moved, tank_id, None, cfg)
            control = max(
                diff(base, render_observation(
                    observer_shift(state, tank_id, 0.625, 0.0), tank_id, None, cfg
                )),
                diff(base, render_observation(
                    observer_shift(state, tank_id, 0.0, 0.625), tank_id, None, cfg
                )),
            )
            changed = diff(base, transformed)
            assert changed <= control, (
                f"transform changed {changed} pixels vs control {control}"
            )
            margin = control - changed
            worst_margin = margin if worst_margin is None else min(worst_margin, margin)
            transforms += 1
        announce("ego-frame-invariance",
                 f"100 transforms, worst margin {worst_margin} pixels")


class TestVisibilityOracle:
    def test_thousand_random_configurations(self):
        rng = np.random.default_rng(7)
        states = 0
        observers = 0
        while states < 1000:
            state = random_world(rng, max_tanks=8)
            comm = float(rng.uniform(0.0, 150.0))
            states += 1
            for tank in state.tanks:
                if not tank.alive:
                    continue
                relays, enemies, neutrals = closure_oracle(state, tank.id, comm)
                vis = visibility_sets(state, tank.id, comm)
                assert vis.visible_enemies == enemies
                assert vis.visible_neutrals == neutrals
                observers += 1
        announce("visibility-oracle",
                 f"{states} configurations, {observers} observers, exact")

    def test_relay_chain_figure_reconstruction(self):
        comm = 20.0
        state = make_world([
            (Team.BLUE, 10.0, 10.0),   # Blue1
            (Team.BLUE, 25.0, 10.0),   # Blue2, linked to Blue1
            (Team.RED, 25.0, 25.0),    # Red2, spotted by Blue2
            (Team.RED, 80.0, 80.0),    # Red1, far from the pair
            (Team.BLUE, 70.0, 80.0),   # Blue3, near Red1 but disconnected
        ])
        assert visibility_sets(state, 0, comm) == VisibilitySet(
            observer_id=0, visible_enemies=frozenset({2}),
            visible_neutrals=frozenset(),
        )
        assert visibility_sets(state, 1, comm).visible_enemies == frozenset({2})
        assert visibility_sets(state, 4, comm).visible_enemies == frozenset({3})
        announce("visibility-figure",
                 "relay scenario reproduced: Red2 visible, Red1 hidden")


class TestFireGating:
    def test_ten_thousand_tick_fuzz(self, cfg):
        rng = np.random.default_rng(123)
        ticks_done = 0
        spawns = 0
        last_spawn: dict[int, int] = {}
        while ticks_done < 10_000:
            state = spawn_world(cfg, seed=int(rng.integers(0, 2**31)))
            last_spawn.clear()
            for _ in range(500):
                acts = {
                    t.id: Action.clamped(*rng.uniform(-1, 1, 3))
                    for t in state.tanks if t.alive
                }
                new_state, _ = step_world(state, acts, cfg)
                for before, after in zip(state.tanks, new_state.tanks):
                    if not before.alive:
                        continue
                    # a tank fired this tick iff its timer snapped to full
                    if after.reload_remaining == cfg.reload_interval:
                        action = acts.get(before.id, Action())
                        assert action.fire > 0.0, (
                            f"tank {before.id} fired with fire={action.fire}"
                        )
                        previous = last_spawn.get(before.id)
                        if previous is not None:
                            assert ticks_done - previous >= cfg.reload_interval
                        last_spawn[before.id] = ticks_done
                        spawns += 1
                state = new_state
                ticks_done += 1
                if ticks_done >= 10_000:
                    break
        announce("fire-gating",
                 f"10000 ticks fuzzed, {spawns} shots, gate never violated")


class TestDeterminismAndReplay:
    def test_fifty_recorded_episodes_replay_bit_identical(self, tmp_path):
        config = all_random(EnvConfig(max_steps=100, team_size=3, neutral_count=2))
        for episode in range(50):
            path = tmp_path / f"ep{episode}.twtraj"
            env = TanksWorldEnv(config)
            recorder = TrajectoryRecorder(path)
            summary = run_episode(env, seed=1000 + episode, recorder=recorder)

            report = replay(path)
            assert report.identical, f"episode {episode}: {report.summary()}"

            # independent re-simulation: hashes and per-tank totals
            file = TrajectoryFile.read(path)
            env2 = TanksWorldEnv(file.config)
            env2.reset(file.seed)
            for record in file.records:
                env2.force_step(record.actions)
                assert env2.state_hash() == record.state_hash
            assert env2.state_hash() == summary.final_hash
            assert env2.cumulative == summary.components
        announce("determinism-replay",
                 "50 recorded episodes replay to identical hashes and rewards")


class TestCloneIdentity:
    def build_demos(self):
        config = EnvConfig(
            team_size=2, neutral_count=1, max_steps=20,
            control_map={
                0: ControlSpec("external"), 1: ControlSpec("external"),
                2: RANDOM, 3: RANDOM,
            },
        )
        rng = np.random.default_rng(5)
        demos = []
        for seed in (1, 2):
            env = TanksWorldEnv(config)
            pairs = {0: [], 1: []}

            def driver(tick, observations):
                acts = {}
                for tank_id, grid in observations.items():
                    if grid is None:
                        continue
                    action = Action.clamped(*rng.uniform(-1, 1, 3))
                    pairs[tank_id].append((grid, action))
                    acts[tank_id] = action
                return acts

            run_episode(env, seed=seed, external_driver=driver)
            demos.extend(pairs.values())
        return demos

    def test_one_nn_reproduces_training_actions_exactly(self):
        demos = self.build_demos()
        model = fit_knn_clone(demos, k=1)
        total = 0
        for demo in demos:
            for grid, action in demo:
                assert model.predict(pool_features(grid)) == action
                total += 1
        announce("clone-identity-1nn",
                 f"{total} training states, 100% exact agreement")

    def test_k3_output_inside_neighbor_hull(self):
        demos = self.build_demos()
        model = fit_knn_clone(demos, k=3)
        rng = np.random.default_rng(9)
        checked = 0
        for _ in range(200):
            query = rng.uniform(0.0, 1.0, size=1024).astype(np.float32)
            predicted = model.predict(query)
            # independent neighbor selection
            d2 = ((model.features - query) ** 2).sum(axis=1)
            order = np.argsort(d2, kind="stable")[:3]
            neighbors = model.actions[order]
            eps = 1e-6
            for component, value in zip(
                range(3), (predicted.throttle, predicted.steer, predicted.fire)
            ):
                lo = float(neighbors[:, component].min())
                hi = float(neighbors[:, component].max())
                assert lo - eps <= value <= hi + eps
            checked += 1
        announce("clone-k3-hull",
                 f"{checked} queries inside the 3-neighbor hull per component")


class TestThroughput:
    """Engineering target, informational: review fails on a >10x miss,
    tests do not."""

    def test_report_throughput(self):
        tune_allocator()
        observe_config = EnvConfig().with_team_control(Team.BLUE, RANDOM)
        env = TanksWorldEnv(observe_config)
        rng = np.random.default_rng(0)
        env.reset(0)
        steps = 0
        seed = 0
        start = time.perf_counter()
        while time.perf_counter() - start < 2.0:
            if env.done:
                seed += 1
                env.reset(seed)
            env.step({
                i: tuple(rng.uniform(-1, 1, 3))
                for i in env.alive_external_ids()
            })
            steps += 1
        with_obs = steps / (time.perf_counter() - start)

        env = TanksWorldEnv(all_random(EnvConfig()))
        env.reset(0)
        steps = 0
        seed = 0
        start = time.perf_counter()
        while time.perf_counter() - start < 2.0:
            if env.done:
                seed += 1
                env.reset(seed)
            env.step({})
            steps += 1
        without_obs = steps / (time.perf_counter() - start)

        assert with_obs > 0 and without_obs > 0
        status_obs = "meets" if with_obs >= 1000 else "below"
        status_raw = "meets" if without_obs >= 5000 else "below"
        print(
            f"\nACCEPTANCE throughput: INFO (with observations "
            f"{with_obs:.0f}/s, target 1000/s, {status_obs}; without "
            f"{without_obs:.0f}/s, target 5000/s, {status_raw}; "
            f"review floor is a 10x miss)"
        )
