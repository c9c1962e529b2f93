"""Command-line front door.

Subcommands: ``run`` (headless episodes), ``bench`` (throughput),
``serve`` (network session + browser UI), ``record`` (serve with
mandatory recording), ``replay`` (verify trajectory files), and
``fit-clone`` (train a k-NN behavior clone from trajectories).

Exit codes: 0 success, 1 verification failure (replay divergence),
2 usage, 3 configuration, 4 I/O or file format, 5 protocol.

``run`` prints one stable tab-separated line per episode::

    episode  seed  ticks  outcome  red_score  blue_score  redE,A,N,D  blueE,A,N,D

where the component totals are enemy kills, ally kills, neutral kills,
deaths summed over the team, and outcome is one of red_eliminated,
blue_eliminated, both_eliminated, max_steps.  Every subcommand honors
``--seed``; reports are byte-identical across runs except bench timings.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ._mem import tune_allocator
from .config import ControlSpec, EnvConfig, config_from_lines, load_config
from .env import EpisodeSummary, TanksWorldEnv, run_episode
from .errors import (
    ConfigError,
    ProtocolError,
    TanksWorldError,
    TrajectoryError,
)
from .policies import fit_knn_clone
from .protocol import DEFAULT_PORT
from .scoring import RewardComponents
from .server import ServerSettings, serve_session
from .trajectory import demos_from_trajectory, replay
from .world import Team

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_PROTOCOL = 5


def _build_config(args: argparse.Namespace, allow_external: bool) -> EnvConfig:
    config = load_config(args.config) if args.config else EnvConfig()
    overrides = list(getattr(args, "set", None) or [])
    if overrides:
        lines = config.to_lines() + [o.replace("=", " = ", 1) for o in overrides]
        config = config_from_lines(lines)
    if getattr(args, "red", None):
        config = config.with_team_control(Team.RED, ControlSpec.parse(args.red))
    if getattr(args, "blue", None):
        config = config.with_team_control(Team.BLUE, ControlSpec.parse(args.blue))
    config.validate()
    if not allow_external and config.external_ids():
        raise ConfigError(
            "headless run cannot drive externally controlled tanks; "
            "use --red/--blue scripted:... or clone:..., or use `serve`"
        )
    return config


def _team_totals(summary: EpisodeSummary, config: EnvConfig, team: Team) -> str:
    total = RewardComponents()
    for tank_id in config.team_ids(team):
        total.add(summary.components[tank_id])
    # deaths are per-tank idempotent but sum across the team
    died = sum(summary.components[i].died for i in config.team_ids(team))
    return f"{total.enemy_kills},{total.ally_kills},{total.neutral_kills},{died}"


def _outcome(summary: EpisodeSummary) -> str:
    if summary.reason == "max_steps":
        return "max_steps"
    wiped = set(summary.eliminated)
    if wiped == {Team.RED, Team.BLUE}:
        return "both_eliminated"
    if Team.RED in wiped:
        return "red_eliminated"
    return "blue_eliminated"


def _cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args, allow_external=False)
    record_dir = Path(args.record_dir) if args.record_dir else None
    if record_dir is not None:
        record_dir.mkdir(parents=True, exist_ok=True)

    def one(episode: int) -> str:
        seed = args.seed + episode
        env = TanksWorldEnv(config)
        recorder = None
        if record_dir is not None:
            from .trajectory import TrajectoryRecorder

            recorder = TrajectoryRecorder(
                record_dir / f"episode_{seed}.twtraj",
                embed_observations=args.embed_obs,
            )
        summary = run_episode(env, seed, recorder=recorder)
        red = summary.team_scores[Team.RED]
        blue = summary.team_scores[Team.BLUE]
        return (
            f"{episode}\t{seed}\t{summary.ticks}\t{_outcome(summary)}"
            f"\t{red:g}\t{blue:g}"
            f"\t{_team_totals(summary, config, Team.RED)}"
            f"\t{_team_totals(summary, config, Team.BLUE)}"
        )

    if args.parallel > 1:
        with ThreadPoolExecutor(max_workers=args.parallel) as pool:
            lines = list(pool.map(one, range(args.episodes)))
    else:
        lines = [one(e) for e in range(args.episodes)]
    for line in lines:
        print(line)
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    tune_allocator()
    config = EnvConfig()
    if args.observe:
        # red stays external and is driven by a random stream, so the env
        # renders one team's observations every step
        config = config.with_team_control(
            Team.BLUE, ControlSpec(kind="scripted", name="random")
        )
    else:
        for team in (Team.RED, Team.BLUE):
            config = config.with_team_control(
                team, ControlSpec(kind="scripted", name="random")
            )
    env = TanksWorldEnv(config)
    rng = np.random.default_rng(args.seed)
    seed = args.seed
    env.reset(seed)
    steps = 0
    observations = 0
    start = time.perf_counter()
    deadline = start + args.seconds
    while time.perf_counter() < deadline:
        if env.done:
            seed += 1
            env.reset(seed)
        if args.observe:
            acts = {
                i: tuple(rng.uniform(-1.0, 1.0, size=3))
                for i in env.alive_external_ids()
            }
        else:
            acts = {}
        result = env.step(acts)
        steps += 1
        observations += sum(
            1 for grid in result.observations.values() if grid is not None
        )
    elapsed = time.perf_counter() - start
    print(f"mode\t{'observe' if args.observe else 'no-observe'}")
    print(f"steps\t{steps}")
    print(f"seconds\t{elapsed:.3f}")
    print(f"steps_per_second\t{steps / elapsed:.1f}")
    print(f"observations_per_second\t{observations / elapsed:.1f}")
    return EXIT_OK


def _discover_ui() -> Path | None:
    for candidate in (Path.cwd() / "frontend", Path.cwd()):
        if (candidate / "index.html").is_file():
            return candidate
    return None


def _cmd_serve(args: argparse.Namespace, require_record: bool = False) -> int:
    config = _build_config(args, allow_external=True)
    if not config.external_ids():
        raise ConfigError("serve needs at least one externally controlled tank")
    if require_record and not args.record:
        raise ConfigError("record requires --record PATH")
    ui_dir = Path(args.ui) if args.ui else _discover_ui()
    settings = ServerSettings(
        host=args.host,
        port=args.port,
        barrier_timeout=args.barrier_timeout,
        tick_interval=args.tick_interval,
        seed=args.seed,
        ui_dir=ui_dir,
        record_path=Path(args.record) if args.record else None,
        embed_observations=args.embed_obs,
        stop_after_episodes=args.episodes if args.episodes > 0 else None,
    )
    print(f"session on ws://{settings.host}:{settings.port} "
          f"(UI: {ui_dir if ui_dir else 'disabled'})", file=sys.stderr)
    serve_session(config, settings)
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    all_identical = True
    for path in args.files:
        report = replay(path)
        all_identical &= report.identical
        print(
            f"{path}\t{report.summary()}"
            f"\tred={report.replayed_scores[0]:g}"
            f"\tblue={report.replayed_scores[1]:g}"
            f"\tobs_checked={report.observations_compared}"
        )
    return EXIT_OK if all_identical else EXIT_VERIFY


def _cmd_fit_clone(args: argparse.Namespace) -> int:
    tank_ids = (
        [int(v) for v in args.tanks.split(",")] if args.tanks else None
    )
    demos = []
    for path in args.files:
        extracted = demos_from_trajectory(path, tank_ids=tank_ids)
        if not extracted and tank_ids is None:
            raise ConfigError(
                f"{path} has no externally controlled tanks to learn from; "
                "pass --tanks to pick scripted ones"
            )
        demos.extend(extracted)
    model = fit_knn_clone(demos, k=args.k)
    model.save(args.out)
    pairs = len(model.features)
    print(f"model\t{args.out}\tpairs\t{pairs}\tk\t{args.k}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tanksworld",
        description="Deterministic N-vs-N tank arena: run, benchmark, "
                    "serve, record, replay, and clone-fit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="config file (key = value lines)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument(
            "--set", action="append", metavar="KEY=VALUE",
            help="override any config key (repeatable)",
        )

    p_run = sub.add_parser("run", help="run headless episodes")
    common(p_run)
    p_run.add_argument("--episodes", type=int, default=1)
    p_run.add_argument("--red", help="red team control spec (default scripted:aggressive)",
                       default="scripted:aggressive")
    p_run.add_argument("--blue", help="blue team control spec",
                       default="scripted:aggressive")
    p_run.add_argument("--parallel", type=int, default=1)
    p_run.add_argument("--record-dir", help="write one .twtraj per episode here")
    p_run.add_argument("--embed-obs", action="store_true",
                       help="embed observations in recordings")
    p_run.set_defaults(func=_cmd_run)

    p_bench = sub.add_parser("bench", help="measure stepping throughput")
    p_bench.add_argument("--seconds", type=float, default=2.0)
    p_bench.add_argument("--seed", type=int, default=0)
    group = p_bench.add_mutually_exclusive_group()
    group.add_argument("--observe", dest="observe", action="store_true", default=True)
    group.add_argument("--no-observe", dest="observe", action="store_false")
    p_bench.set_defaults(func=_cmd_bench)

    def serve_args(p: argparse.ArgumentParser) -> None:
        common(p)
        p.add_argument("--host", default="127.0.0.1")
        p.add_argument("--port", type=int, default=DEFAULT_PORT)
        p.add_argument("--red", help="red team control spec")
        p.add_argument("--blue", help="blue team control spec")
        p.add_argument("--barrier-timeout", type=float, default=0.1,
                       help="seconds to wait for remote actions each tick")
        p.add_argument("--tick-interval", type=float, default=0.1)
        p.add_argument("--record", help="record episodes to this .twtraj path")
        p.add_argument("--embed-obs", action="store_true")
        p.add_argument("--ui", help="directory with the browser UI (default: ./frontend)")
        p.add_argument("--episodes", type=int, default=0,
                       help="stop after this many episodes (0 = serve forever)")

    p_serve = sub.add_parser("serve", help="host a live session over WebSocket")
    serve_args(p_serve)
    p_serve.set_defaults(func=_cmd_serve)

    p_record = sub.add_parser(
        "record", help="serve a session and record it (serve + --record)"
    )
    serve_args(p_record)
    p_record.set_defaults(func=lambda a: _cmd_serve(a, require_record=True))

    p_replay = sub.add_parser("replay", help="verify recorded trajectories")
    p_replay.add_argument("files", nargs="+")
    p_replay.set_defaults(func=_cmd_replay)

    p_fit = sub.add_parser("fit-clone", help="fit a k-NN clone from trajectories")
    p_fit.add_argument("files", nargs="+")
    p_fit.add_argument("--out", required=True, help="output .twknn model path")
    p_fit.add_argument("--k", type=int, default=1)
    p_fit.add_argument("--tanks", help="comma-separated tank ids (default: external)")
    p_fit.set_defaults(func=_cmd_fit_clone)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrajectoryError as exc:
        print(f"trajectory error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TanksWorldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
