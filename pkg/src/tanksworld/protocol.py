"""Wire protocol "twp/1": one canonical JSON message per WebSocket text frame.

Every message carries ``v`` (protocol version) and ``sid`` (session id)
plus a ``type`` tag.  Encoding is canonical: keys sorted, no whitespace,
integral numbers written without a fractional part (ECMAScript number
formatting), so ``encode(decode(frame)) == frame`` holds byte-exactly
for conformant frames in every implementation of the protocol.
Decoding is strict: unknown message types, missing fields, unexpected
fields, and wrong value types are all rejected with an error naming the
offender.  Observation grids travel as base64 of the uint8-quantized
raster, channel-major row-major (4*128*128 bytes).

Message types:

* ``hello``     client -> server: role (agent|human|viewer), requested tanks
* ``assigned``  server -> client: granted tanks plus the config echo
* ``state``     server -> human/viewer: entity-level frame for rendering
* ``obs``       server -> agent: per-tank observation raster
* ``action``    client -> server: one tank's action for one tick
* ``reset``     either direction: start a new episode with a seed
* ``error``     server -> client: code and text

Action components are clamped to [-1, 1] on receipt; a clamped message is
flagged on the decoded object (not on the wire).
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ProtocolError

PROTOCOL_VERSION = "twp/1"
DEFAULT_PORT = 8736
GRID_BYTES = 4 * 128 * 128

ROLES = ("agent", "human", "viewer")


@dataclass(frozen=True, slots=True)
class EntitySummary:
    id: int
    team: str
    x: float
    y: float
    heading: float
    alive: bool


@dataclass(frozen=True, slots=True)
class ObstacleSummary:
    x: float
    y: float
    r: float


@dataclass(frozen=True, slots=True)
class RewardSummary:
    enemy_kills: int
    ally_kills: int
    neutral_kills: int
    died: int
    scalar: float


@dataclass(frozen=True, slots=True)
class Hello:
    session_id: str
    role: str
    tanks: tuple[int, ...] = ()


@dataclass(frozen=True, slots=True)
class Assigned:
    session_id: str
    tanks: tuple[int, ...]
    config: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class StateFrame:
    session_id: str
    tick: int
    done: bool
    entities: tuple[EntitySummary, ...]
    obstacles: tuple[ObstacleSummary, ...]
    arena_side: float
    comm_range: float
    visibility: dict[str, tuple[int, ...]] | None
    rewards: dict[int, RewardSummary]
    scores: dict[str, float]


@dataclass(frozen=True, slots=True)
class ObsFrame:
    session_id: str
    tick: int
    tank: int
    grid: str  # base64 uint8 payload
    done: bool


@dataclass(frozen=True, slots=True)
class ActionMsg:
    session_id: str
    tick: int
    tank: int
    throttle: float
    steer: float
    fire: float
    clamped: bool = field(default=False, compare=False)  # decode-side flag


@dataclass(frozen=True, slots=True)
class ResetMsg:
    session_id: str
    seed: int


@dataclass(frozen=True, slots=True)
class ErrorMsg:
    session_id: str
    code: str
    text: str


Message = Hello | Assigned | StateFrame | ObsFrame | ActionMsg | ResetMsg | ErrorMsg

_TYPE_TAG: dict[type, str] = {
    Hello: "hello",
    Assigned: "assigned",
    StateFrame: "state",
    ObsFrame: "obs",
    ActionMsg: "action",
    ResetMsg: "reset",
    ErrorMsg: "error",
}
_TAG_TYPE = {tag: cls for cls, tag in _TYPE_TAG.items()}


def encode_message(message: Message) -> str:
    payload: dict[str, Any] = {
        "v": PROTOCOL_VERSION,
        "sid": message.session_id,
        "type": _TYPE_TAG[type(message)],
    }
    if isinstance(message, Hello):
        payload["role"] = message.role
        payload["tanks"] = list(message.tanks)
    elif isinstance(message, Assigned):
        payload["tanks"] = list(message.tanks)
        payload["config"] = list(message.config)
    elif isinstance(message, StateFrame):
        payload["tick"] = message.tick
        payload["done"] = message.done
        payload["entities"] = [
            {
                "id": e.id, "team": e.team, "x": e.x, "y": e.y,
                "heading": e.heading, "alive": e.alive,
            }
            for e in message.entities
        ]
        payload["obstacles"] = [
            {"x": o.x, "y": o.y, "r": o.r} for o in message.obstacles
        ]
        payload["arena_side"] = message.arena_side
        payload["comm_range"] = message.comm_range
        payload["visibility"] = (
            None if message.visibility is None
            else {k: list(v) for k, v in message.visibility.items()}
        )
        payload["rewards"] = {
            str(tank_id): {
                "enemy_kills": r.enemy_kills, "ally_kills": r.ally_kills,
                "neutral_kills": r.neutral_kills, "died": r.died,
                "scalar": r.scalar,
            }
            for tank_id, r in message.rewards.items()
        }
        payload["scores"] = dict(message.scores)
    elif isinstance(message, ObsFrame):
        payload["tick"] = message.tick
        payload["tank"] = message.tank
        payload["grid"] = message.grid
        payload["done"] = message.done
    elif isinstance(message, ActionMsg):
        payload["tick"] = message.tick
        payload["tank"] = message.tank
        payload["throttle"] = message.throttle
        payload["steer"] = message.steer
        payload["fire"] = message.fire
    elif isinstance(message, ResetMsg):
        payload["seed"] = message.seed
    elif isinstance(message, ErrorMsg):
        payload["code"] = message.code
        payload["text"] = message.text
    return json.dumps(_minimal_numbers(payload), sort_keys=True,
                      separators=(",", ":"))


def _minimal_numbers(value):
    """Integral floats encode as integers so JSON matches across languages."""
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, dict):
        return {k: _minimal_numbers(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_minimal_numbers(v) for v in value]
    return value


_REQUIRED: dict[str, set[str]] = {
    "hello": {"v", "sid", "type", "role", "tanks"},
    "assigned": {"v", "sid", "type", "tanks", "config"},
    "state": {
        "v", "sid", "type", "tick", "done", "entities", "obstacles",
        "arena_side", "comm_range", "visibility", "rewards", "scores",
    },
    "obs": {"v", "sid", "type", "tick", "tank", "grid", "done"},
    "action": {"v", "sid", "type", "tick", "tank", "throttle", "steer", "fire"},
    "reset": {"v", "sid", "type", "seed"},
    "error": {"v", "sid", "type", "code", "text"},
}


def _reject_nonfinite(value: str):
    raise ProtocolError(f"non-finite number {value!r} in message")


def decode_message(frame: str | bytes) -> Message:
    if isinstance(frame, bytes):
        try:
            frame = frame.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"frame is not UTF-8: {exc}") from None
    try:
        payload = json.loads(frame, parse_constant=_reject_nonfinite)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed JSON frame: {exc}") from None
    if not isinstance(payload, dict):
        raise ProtocolError("frame must be a JSON object")

    tag = payload.get("type")
    if tag not in _REQUIRED:
        raise ProtocolError(f"unknown message type {tag!r}")
    required = _REQUIRED[tag]
    missing = required - payload.keys()
    if missing:
        raise ProtocolError(f"{tag}: missing field {sorted(missing)[0]!r}")
    unknown = payload.keys() - required
    if unknown:
        raise ProtocolError(f"{tag}: unknown field {sorted(unknown)[0]!r}")
    if payload["v"] != PROTOCOL_VERSION:
        raise ProtocolError(f"protocol version mismatch: {payload['v']!r}")
    sid = _expect_str(payload, "sid")

    if tag == "hello":
        role = _expect_str(payload, "role")
        if role not in ROLES:
            raise ProtocolError(f"hello: bad role {role!r}")
        return Hello(session_id=sid, role=role,
                     tanks=_expect_int_list(payload, "tanks"))
    if tag == "assigned":
        return Assigned(
            session_id=sid,
            tanks=_expect_int_list(payload, "tanks"),
            config=_expect_str_list(payload, "config"),
        )
    if tag == "state":
        return _decode_state(payload, sid)
    if tag == "obs":
        grid = _expect_str(payload, "grid")
        try:
            raw = base64.b64decode(grid, validate=True)
        except Exception as exc:
            raise ProtocolError(f"obs: bad grid payload: {exc}") from None
        if len(raw) != GRID_BYTES:
            raise ProtocolError(
                f"obs: grid must decode to {GRID_BYTES} bytes, got {len(raw)}"
            )
        return ObsFrame(
            session_id=sid, tick=_expect_int(payload, "tick"),
            tank=_expect_int(payload, "tank"), grid=grid,
            done=_expect_bool(payload, "done"),
        )
    if tag == "action":
        throttle = _expect_num(payload, "throttle")
        steer = _expect_num(payload, "steer")
        fire = _expect_num(payload, "fire")
        clamped = not all(-1.0 <= v <= 1.0 for v in (throttle, steer, fire))
        clamp = lambda v: min(1.0, max(-1.0, v))  # noqa: E731
        return ActionMsg(
            session_id=sid, tick=_expect_int(payload, "tick"),
            tank=_expect_int(payload, "tank"),
            throttle=clamp(throttle), steer=clamp(steer), fire=clamp(fire),
            clamped=clamped,
        )
    if tag == "reset":
        return ResetMsg(session_id=sid, seed=_expect_int(payload, "seed"))
    return ErrorMsg(session_id=sid, code=_expect_str(payload, "code"),
                    text=_expect_str(payload, "text"))


def _decode_state(payload: dict, sid: str) -> StateFrame:
    entities = []
    raw_entities = payload["entities"]
    if not isinstance(raw_entities, list):
        raise ProtocolError("state: entities must be a list")
    for item in raw_entities:
        entities.append(
            EntitySummary(
                id=_expect_int(item, "id", "entities"),
                team=_expect_str(item, "team", "entities"),
                x=_expect_num(item, "x", "entities"),
                y=_expect_num(item, "y", "entities"),
                heading=_expect_num(item, "heading", "entities"),
                alive=_expect_bool(item, "alive", "entities"),
            )
        )
        unknown = item.keys() - {"id", "team", "x", "y", "heading", "alive"}
        if unknown:
            raise ProtocolError(f"entities: unknown field {sorted(unknown)[0]!r}")
    obstacles = []
    for item in payload["obstacles"]:
        obstacles.append(
            ObstacleSummary(
                x=_expect_num(item, "x", "obstacles"),
                y=_expect_num(item, "y", "obstacles"),
                r=_expect_num(item, "r", "obstacles"),
            )
        )
        unknown = item.keys() - {"x", "y", "r"}
        if unknown:
            raise ProtocolError(f"obstacles: unknown field {sorted(unknown)[0]!r}")
    visibility = payload["visibility"]
    if visibility is not None:
        if not isinstance(visibility, dict) or set(visibility) != {
            "enemies", "neutrals",
        }:
            raise ProtocolError("state: visibility must have enemies and neutrals")
        visibility = {
            "enemies": _expect_int_list(visibility, "enemies", "visibility"),
            "neutrals": _expect_int_list(visibility, "neutrals", "visibility"),
        }
    rewards = {}
    if not isinstance(payload["rewards"], dict):
        raise ProtocolError("state: rewards must be an object")
    for key, item in payload["rewards"].items():
        try:
            tank_id = int(key)
        except ValueError:
            raise ProtocolError(f"rewards: bad tank id {key!r}") from None
        unknown = item.keys() - {
            "enemy_kills", "ally_kills", "neutral_kills", "died", "scalar",
        }
        if unknown:
            raise ProtocolError(f"rewards: unknown field {sorted(unknown)[0]!r}")
        rewards[tank_id] = RewardSummary(
            enemy_kills=_expect_int(item, "enemy_kills", "rewards"),
            ally_kills=_expect_int(item, "ally_kills", "rewards"),
            neutral_kills=_expect_int(item, "neutral_kills", "rewards"),
            died=_expect_int(item, "died", "rewards"),
            scalar=_expect_num(item, "scalar", "rewards"),
        )
    scores = payload["scores"]
    if not isinstance(scores, dict) or set(scores) != {"red", "blue"}:
        raise ProtocolError("state: scores must have red and blue")
    return StateFrame(
        session_id=sid,
        tick=_expect_int(payload, "tick"),
        done=_expect_bool(payload, "done"),
        entities=tuple(entities),
        obstacles=tuple(obstacles),
        arena_side=_expect_num(payload, "arena_side"),
        comm_range=_expect_num(payload, "comm_range"),
        visibility=visibility,
        rewards=rewards,
        scores={"red": _expect_num(scores, "red", "scores"),
                "blue": _expect_num(scores, "blue", "scores")},
    )


def _ctx(where: str | None, name: str) -> str:
    return f"{where}.{name}" if where else name


def _expect_str(payload: dict, name: str, where: str | None = None) -> str:
    value = payload.get(name)
    if not isinstance(value, str):
        raise ProtocolError(f"field {_ctx(where, name)!r} must be a string")
    return value


def _expect_int(payload: dict, name: str, where: str | None = None) -> int:
    value = payload.get(name)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ProtocolError(f"field {_ctx(where, name)!r} must be an integer")
    return value


def _expect_bool(payload: dict, name: str, where: str | None = None) -> bool:
    value = payload.get(name)
    if not isinstance(value, bool):
        raise ProtocolError(f"field {_ctx(where, name)!r} must be a boolean")
    return value


def _expect_num(payload: dict, name: str, where: str | None = None) -> float:
    value = payload.get(name)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolError(f"field {_ctx(where, name)!r} must be a number")
    value = float(value)
    if not math.isfinite(value):
        raise ProtocolError(f"field {_ctx(where, name)!r} must be finite")
    return value


def _expect_int_list(
    payload: dict, name: str, where: str | None = None
) -> tuple[int, ...]:
    value = payload.get(name)
    if not isinstance(value, list) or any(
        not isinstance(v, int) or isinstance(v, bool) for v in value
    ):
        raise ProtocolError(f"field {_ctx(where, name)!r} must be a list of ints")
    return tuple(value)


def _expect_str_list(
    payload: dict, name: str, where: str | None = None
) -> tuple[str, ...]:
    value = payload.get(name)
    if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
        raise ProtocolError(f"field {_ctx(where, name)!r} must be a list of strings")
    return tuple(value)


def encode_grid(grid: np.ndarray) -> str:
    """Base64 of the uint8-quantized observation, channel-major row-major."""
    from .observation import quantize_grid

    return base64.b64encode(quantize_grid(grid).tobytes()).decode("ascii")


def decode_grid(data: str) -> np.ndarray:
    raw = base64.b64decode(data, validate=True)
    if len(raw) != GRID_BYTES:
        raise ProtocolError(f"grid must be {GRID_BYTES} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(4, 128, 128).copy()
