"""Episode recording and bit-exact replay (`.twtraj` files).

Line-oriented text container, chosen for diff-ability::

    TANKSWORLD-TRAJ v1            magic, fixed for version 1
    H <key> = <value>             header: full config (resolved control
                                  map included), then seed / created /
                                  embed_observations metadata
    O <tick> <id> <base64>        optional pre-step observation, uint8-
                                  quantized, channel-major row-major
    T <tick> <hash> <id>:<t>,<s>,<f> ...
                                  one line per tick: the 16-hex state hash
                                  *after* the step and every controlled
                                  tank's action, ascending id, fixed
                                  6-decimal components
    F ticks=<n> score_red=<r> score_blue=<b> checksum=<16hex>
                                  footer; present only when finalized

The checksum is 64-bit FNV-1a over the raw bytes of every record line
("O " and "T " lines, newline included, in file order) and is fixed
forever for v1.  Observations are not embedded by default: they are
re-derivable from (config, seed, actions), and replay re-renders and
compares them when they are present.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, TYPE_CHECKING, Iterable

import numpy as np

from .config import EnvConfig, config_from_lines
from .errors import (
    CorruptTrajectoryError,
    TrajectoryError,
    UnsupportedVersionError,
)
from .observation import quantize_grid
from .world import Action, Team

if TYPE_CHECKING:
    from .env import TanksWorldEnv

MAGIC = "TANKSWORLD-TRAJ v1"
FILE_SUFFIX = ".twtraj"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes, value: int = _FNV_OFFSET) -> int:
    for byte in data:
        value = ((value ^ byte) * _FNV_PRIME) & _U64
    return value


class TrajectoryRecorder:
    """Append-only writer; one episode per file.

    Call ``on_reset`` right after the env reset, ``on_step`` after every
    env step, and ``finalize`` at episode end.  A file missing its footer
    is readable but flagged unfinalized.
    """

    def __init__(self, sink: str | Path | IO[str], embed_observations: bool = False):
        if hasattr(sink, "write"):
            self._fh: IO[str] = sink  # type: ignore[assignment]
            self._owns = False
        else:
            self._fh = open(sink, "w", encoding="utf-8", newline="\n")
            self._owns = True
        self.embed_observations = embed_observations
        self._checksum = _FNV_OFFSET
        self._finalized = False

    def _write(self, line: str, record: bool = False) -> None:
        data = line + "\n"
        if record:
            self._checksum = fnv1a64(data.encode("utf-8"), self._checksum)
        self._fh.write(data)
        self._fh.flush()

    def on_reset(self, env: "TanksWorldEnv", seed: int) -> None:
        self._write(MAGIC)
        config = env.config
        if config.control_map is None:
            # embed the resolved map so the file is self-contained
            lines = EnvConfig(
                **{**_config_kwargs(config), "control_map": config.resolved_control_map()}
            ).to_lines()
        else:
            lines = config.to_lines()
        for line in lines:
            self._write(f"H {line}")
        self._write(f"H seed = {int(seed)}")
        created = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        self._write(f"H created = {created}")
        self._write(f"H embed_observations = "
                    f"{'true' if self.embed_observations else 'false'}")

    def on_step(self, env: "TanksWorldEnv", pre_observations=None) -> None:
        tick = env.tick - 1  # index of the step that just ran
        if self.embed_observations and pre_observations:
            for tank_id in sorted(pre_observations):
                grid = pre_observations[tank_id]
                if grid is None:
                    continue
                blob = base64.b64encode(quantize_grid(grid).tobytes()).decode("ascii")
                self._write(f"O {tick} {tank_id} {blob}", record=True)
        parts = [
            f"{tank_id}:{a.throttle:.6f},{a.steer:.6f},{a.fire:.6f}"
            for tank_id, a in sorted(env.last_actions.items())
        ]
        self._write(
            f"T {tick} {env.state_hash()} " + " ".join(parts), record=True
        )

    def finalize(self, env: "TanksWorldEnv") -> None:
        if self._finalized:
            return
        scores = env.team_scores()
        self._write(
            f"F ticks={env.tick}"
            f" score_red={scores[Team.RED]!r}"
            f" score_blue={scores[Team.BLUE]!r}"
            f" checksum={self._checksum:016x}"
        )
        self._finalized = True
        if self._owns:
            self._fh.close()

    def abort(self) -> None:
        if self._owns and not self._fh.closed:
            self._fh.close()


def _config_kwargs(config: EnvConfig) -> dict:
    return {
        f: getattr(config, f) for f in EnvConfig.__dataclass_fields__
    }


@dataclass(slots=True)
class TickRecord:
    tick: int
    state_hash: str
    actions: dict[int, Action]
    observations: dict[int, bytes] = field(default_factory=dict)


@dataclass(slots=True)
class Footer:
    ticks: int
    score_red: float
    score_blue: float
    checksum: str


@dataclass(slots=True)
class TrajectoryFile:
    config: EnvConfig
    seed: int
    created: str
    embed_observations: bool
    records: list[TickRecord]
    footer: Footer | None

    @property
    def finalized(self) -> bool:
        return self.footer is not None

    @classmethod
    def read(cls, path: str | Path) -> "TrajectoryFile":
        text = Path(path).read_text(encoding="utf-8")
        lines = text.split("\n")
        if not lines or lines[0] != MAGIC:
            head = lines[0] if lines else ""
            if head.startswith("TANKSWORLD-TRAJ"):
                raise UnsupportedVersionError(f"unsupported version: {head!r}")
            raise UnsupportedVersionError(f"{path}: not a trajectory file")

        header: list[str] = []
        seed: int | None = None
        created = ""
        embed = False
        records: list[TickRecord] = []
        pending_obs: dict[tuple[int, int], bytes] = {}
        footer: Footer | None = None
        checksum = _FNV_OFFSET

        for raw in lines[1:]:
            if not raw:
                continue
            if footer is not None:
                raise CorruptTrajectoryError("content after footer")
            tag, _, rest = raw.partition(" ")
            if tag == "H":
                key = rest.split("=", 1)[0].strip()
                value = rest.split("=", 1)[1].strip() if "=" in rest else ""
                if key == "seed":
                    seed = int(value)
                elif key == "created":
                    created = value
                elif key == "embed_observations":
                    embed = value == "true"
                else:
                    header.append(rest)
            elif tag == "O":
                checksum = fnv1a64((raw + "\n").encode("utf-8"), checksum)
                try:
                    tick_s, tank_s, blob = rest.split(" ", 2)
                    pending_obs[(int(tick_s), int(tank_s))] = base64.b64decode(
                        blob, validate=True
                    )
                except (ValueError, base64.binascii.Error) as exc:
                    raise CorruptTrajectoryError(f"bad O record: {exc}") from None
            elif tag == "T":
                checksum = fnv1a64((raw + "\n").encode("utf-8"), checksum)
                records.append(_parse_tick(rest, pending_obs))
            elif tag == "F":
                footer = _parse_footer(rest)
            else:
                raise CorruptTrajectoryError(f"unknown record tag {tag!r}")

        if seed is None:
            raise CorruptTrajectoryError("header missing seed")
        if pending_obs:
            raise CorruptTrajectoryError("observation records with no tick record")
        for index, record in enumerate(records):
            if record.tick != index:
                raise CorruptTrajectoryError(
                    f"tick records not contiguous at {record.tick}"
                )
        if footer is not None:
            if f"{checksum:016x}" != footer.checksum:
                raise CorruptTrajectoryError("corrupt file: checksum mismatch")
            if footer.ticks != len(records):
                raise CorruptTrajectoryError("corrupt file: tick count mismatch")
        try:
            config = config_from_lines(header)
        except Exception as exc:
            raise CorruptTrajectoryError(f"bad embedded config: {exc}") from None
        return cls(
            config=config, seed=seed, created=created,
            embed_observations=embed, records=records, footer=footer,
        )


def _parse_tick(
    rest: str, pending_obs: dict[tuple[int, int], bytes]
) -> TickRecord:
    try:
        parts = rest.split(" ")
        tick = int(parts[0])
        digest = parts[1]
        if len(digest) != 16:
            raise ValueError("bad state hash length")
        actions: dict[int, Action] = {}
        for chunk in parts[2:]:
            tank_s, _, rest3 = chunk.partition(":")
            throttle, steer, fire = (float(v) for v in rest3.split(","))
            actions[int(tank_s)] = Action.clamped(throttle, steer, fire)
    except ValueError as exc:
        raise CorruptTrajectoryError(f"bad T record: {exc}") from None
    observations = {
        tank_id: blob
        for (obs_tick, tank_id), blob in list(pending_obs.items())
        if obs_tick == tick
    }
    for key in [k for k in pending_obs if k[0] == tick]:
        del pending_obs[key]
    return TickRecord(
        tick=tick, state_hash=digest, actions=actions, observations=observations
    )


def _parse_footer(rest: str) -> Footer:
    try:
        fields = dict(part.split("=", 1) for part in rest.split(" "))
        return Footer(
            ticks=int(fields["ticks"]),
            score_red=float(fields["score_red"]),
            score_blue=float(fields["score_blue"]),
            checksum=fields["checksum"],
        )
    except (KeyError, ValueError) as exc:
        raise CorruptTrajectoryError(f"bad footer: {exc}") from None


@dataclass(slots=True)
class ReplayReport:
    identical: bool
    ticks: int
    first_divergence_tick: int | None
    recorded_scores: tuple[float, float]
    replayed_scores: tuple[float, float]
    observations_compared: int
    observation_mismatches: int

    def summary(self) -> str:
        if self.identical:
            return f"identical ticks={self.ticks}"
        where = (
            f"tick {self.first_divergence_tick}"
            if self.first_divergence_tick is not None
            else "final scores"
        )
        return f"divergent at {where}"


def replay(source: str | Path | TrajectoryFile) -> ReplayReport:
    """Rebuild the episode from the file alone and verify it tick by tick."""
    from .env import TanksWorldEnv

    file = source if isinstance(source, TrajectoryFile) else TrajectoryFile.read(source)
    if not file.finalized:
        raise TrajectoryError("unfinalized trajectory cannot be replayed")
    assert file.footer is not None

    env = TanksWorldEnv(file.config)
    env.reset(file.seed)
    first_divergence: int | None = None
    obs_compared = 0
    obs_mismatches = 0

    for record in file.records:
        if record.observations:
            for tank_id in sorted(record.observations):
                tank = env.state.tank_by_id(tank_id)
                if not tank.alive:
                    obs_mismatches += 1
                    continue
                rendered = quantize_grid(env.observation_for(tank_id)).tobytes()
                obs_compared += 1
                if rendered != record.observations[tank_id]:
                    obs_mismatches += 1
                    if first_divergence is None:
                        first_divergence = record.tick
        if env.done:
            if first_divergence is None:
                first_divergence = record.tick
            break
        env.force_step(record.actions)
        if env.state_hash() != record.state_hash and first_divergence is None:
            first_divergence = record.tick

    scores = env.team_scores()
    replayed = (scores[Team.RED], scores[Team.BLUE])
    recorded = (file.footer.score_red, file.footer.score_blue)
    identical = (
        first_divergence is None
        and obs_mismatches == 0
        and replayed == recorded
        and env.tick == file.footer.ticks
    )
    return ReplayReport(
        identical=identical,
        ticks=env.tick,
        first_divergence_tick=first_divergence,
        recorded_scores=recorded,
        replayed_scores=replayed,
        observations_compared=obs_compared,
        observation_mismatches=obs_mismatches,
    )


def demos_from_trajectory(
    source: str | Path | TrajectoryFile,
    tank_ids: Iterable[int] | None = None,
) -> list[list[tuple[np.ndarray, Action]]]:
    """Extract (observation, action) pairs for cloning, one list per tank.

    Embedded observations are used when present; otherwise the episode is
    re-simulated and observations re-rendered, which is exact because the
    engine is deterministic.
    """
    from .env import TanksWorldEnv
    from .observation import dequantize_grid

    file = source if isinstance(source, TrajectoryFile) else TrajectoryFile.read(source)
    ids = sorted(tank_ids) if tank_ids is not None else file.config.external_ids()
    if not ids:
        return []
    demos: dict[int, list[tuple[np.ndarray, Action]]] = {i: [] for i in ids}

    embedded = file.embed_observations and all(
        any(i in r.observations for r in file.records) for i in ids
    )
    if embedded:
        for record in file.records:
            for tank_id in ids:
                blob = record.observations.get(tank_id)
                action = record.actions.get(tank_id)
                if blob is None or action is None:
                    continue
                grid = dequantize_grid(
                    np.frombuffer(blob, dtype=np.uint8).reshape(4, 128, 128)
                )
                demos[tank_id].append((grid, action))
        return [demos[i] for i in ids]

    env = TanksWorldEnv(file.config)
    env.reset(file.seed)
    for record in file.records:
        if env.done:
            break
        for tank_id in ids:
            action = record.actions.get(tank_id)
            if action is None or not env.state.tank_by_id(tank_id).alive:
                continue
            demos[tank_id].append((env.observation_for(tank_id), action))
        env.force_step(record.actions)
    return [demos[i] for i in ids]
