"""WebSocket session server: remote agents and humans drive a live env.

One server hosts one session (one env).  Clients send ``hello`` with a
role; agent/human roles claim externally controlled tanks, viewers just
watch.  The episode starts once every external tank is claimed.  Each
tick the server emits frames (entity-level ``state`` frames to
humans/viewers, raster ``obs`` frames to agents), then gathers one
action per claimed tank behind a barrier: when all actions arrive or the
barrier timeout fires, missing tanks act all-zero and the env advances.
Ticks are paced to ``tick_interval`` so humans can drive at ~10 ticks/s.

Role isolation: agents only ever receive their own tanks' observation
rasters; humans receive entity frames filtered to what their tanks'
communication component can see; viewers receive ground truth but
cannot act.  The CLI ``serve`` command also serves the browser UI as
static files from this same port.
"""

from __future__ import annotations

import asyncio
import threading
import uuid
from dataclasses import dataclass, field
from http import HTTPStatus
from pathlib import Path
from typing import Iterable

from websockets.asyncio.server import ServerConnection, serve as ws_serve
from websockets.datastructures import Headers
from websockets.exceptions import ConnectionClosed
from websockets.http11 import Request, Response

from .config import EnvConfig
from .env import StepResult, TanksWorldEnv
from .errors import ProtocolError
from .protocol import (
    ActionMsg,
    Assigned,
    EntitySummary,
    ErrorMsg,
    Hello,
    Message,
    ObsFrame,
    ObstacleSummary,
    ResetMsg,
    RewardSummary,
    StateFrame,
    decode_message,
    encode_grid,
    encode_message,
)
from .scoring import RewardComponents, scalarize
from .trajectory import FILE_SUFFIX, TrajectoryRecorder
from .world import Action, Team

DEFAULT_BARRIER_TIMEOUT = 0.1
DEFAULT_TICK_INTERVAL = 0.1

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}


@dataclass
class ServerSettings:
    host: str = "127.0.0.1"
    port: int = 8736
    barrier_timeout: float = DEFAULT_BARRIER_TIMEOUT
    tick_interval: float = DEFAULT_TICK_INTERVAL
    seed: int = 0
    ui_dir: Path | None = None
    record_path: Path | None = None
    embed_observations: bool = False
    stop_after_episodes: int | None = None


@dataclass
class _Client:
    connection: ServerConnection
    role: str
    tanks: set[int] = field(default_factory=set)


class SessionServer:
    def __init__(self, config: EnvConfig, settings: ServerSettings | None = None):
        config.validate()
        self.config = config
        self.settings = settings or ServerSettings()
        self.env = TanksWorldEnv(config)
        self.session_id = uuid.uuid4().hex[:12]
        self.clients: dict[ServerConnection, _Client] = {}
        self.claims: dict[int, ServerConnection] = {}
        self.episode_index = 0
        self.ready = threading.Event()  # set once the socket is listening
        self.bound_port: int | None = None
        self._external = set(config.external_ids())
        self._pending: dict[int, Action] = {}
        self._action_event: asyncio.Event | None = None
        self._claims_event: asyncio.Event | None = None
        self._reset_request: int | None = None
        self._stop: asyncio.Future | None = None
        self._loop: asyncio.AbstractEventLoop | None = None
        self._episode_live = False

    # -- entry points ------------------------------------------------------

    def run(self) -> None:
        asyncio.run(self._main())

    def request_stop(self) -> None:
        if self._loop and self._stop and not self._stop.done():
            self._loop.call_soon_threadsafe(
                lambda: self._stop.set_result(None) if not self._stop.done() else None
            )

    async def _main(self) -> None:
        self._loop = asyncio.get_running_loop()
        self._stop = self._loop.create_future()
        self._action_event = asyncio.Event()
        self._claims_event = asyncio.Event()
        async with ws_serve(
            self._handler,
            self.settings.host,
            self.settings.port,
            process_request=self._process_request,
        ) as server:
            self.bound_port = server.sockets[0].getsockname()[1] if server.sockets else None
            episode_task = asyncio.ensure_future(self._session_loop())
            self.ready.set()
            try:
                await self._stop
            finally:
                episode_task.cancel()

    # -- static UI ---------------------------------------------------------

    def _process_request(self, connection: ServerConnection, request: Request):
        if request.headers.get("Upgrade", "").lower() == "websocket":
            return None
        ui_dir = self.settings.ui_dir
        if ui_dir is None:
            return connection.respond(HTTPStatus.NOT_FOUND, "no UI configured\n")
        path = request.path.split("?", 1)[0]
        if path in ("", "/"):
            path = "/index.html"
        target = (ui_dir / path.lstrip("/")).resolve()
        try:
            target.relative_to(ui_dir.resolve())
        except ValueError:
            return connection.respond(HTTPStatus.FORBIDDEN, "forbidden\n")
        if not target.is_file():
            return connection.respond(HTTPStatus.NOT_FOUND, "not found\n")
        body = target.read_bytes()
        content_type = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        headers = Headers(
            [("Content-Type", content_type), ("Content-Length", str(len(body)))]
        )
        return Response(HTTPStatus.OK, "OK", headers, body)

    # -- connection handling ------------------------------------------------

    async def _send(self, connection: ServerConnection, message: Message) -> None:
        try:
            await connection.send(encode_message(message))
        except ConnectionClosed:
            pass

    async def _error(self, connection: ServerConnection, code: str, text: str) -> None:
        await self._send(
            connection, ErrorMsg(session_id=self.session_id, code=code, text=text)
        )

    async def _handler(self, connection: ServerConnection) -> None:
        client: _Client | None = None
        try:
            raw = await connection.recv()
            try:
                hello = decode_message(raw)
            except ProtocolError as exc:
                await self._error(connection, "bad_message", str(exc))
                return  # version mismatch or garbage: disconnect
            if not isinstance(hello, Hello):
                await self._error(connection, "expected_hello", "first message must be hello")
                return
            client = await self._admit(connection, hello)
            if client is None:
                return
            async for raw in connection:
                await self._on_message(client, raw)
        except ConnectionClosed:
            pass
        finally:
            if client is not None:
                self._drop_client(client)

    async def _admit(self, connection: ServerConnection, hello: Hello) -> _Client | None:
        client = _Client(connection=connection, role=hello.role)
        if hello.role == "viewer":
            requested: list[int] = []
        else:
            requested = list(hello.tanks)
            if not requested:
                unclaimed = sorted(self._external - self.claims.keys())
                requested = unclaimed[:1] if hello.role == "human" else unclaimed
            for tank_id in requested:
                if tank_id not in self._external:
                    await self._error(
                        connection, "bad_tank",
                        f"tank {tank_id} is not externally controllable",
                    )
                    return None
                if tank_id in self.claims:
                    await self._error(connection, "tank_taken",
                                      f"tank {tank_id} already claimed")
                    return None
            if hello.role == "human" and requested:
                teams = {self.config.team_of(i) for i in requested}
                if len(teams) > 1:
                    await self._error(connection, "mixed_teams",
                                      "a human may only claim one team's tanks")
                    return None
            if not requested:
                await self._error(connection, "no_tanks", "no unclaimed tanks left")
                return None
        for tank_id in requested:
            self.claims[tank_id] = connection
            client.tanks.add(tank_id)
        self.clients[connection] = client
        await self._send(
            connection,
            Assigned(
                session_id=self.session_id,
                tanks=tuple(sorted(client.tanks)),
                config=tuple(self.config.to_lines()),
            ),
        )
        if self._episode_live and client.role in ("viewer", "human"):
            await self._send(connection, self._state_frame(client, None))
        assert self._claims_event is not None
        self._claims_event.set()
        return client

    def _drop_client(self, client: _Client) -> None:
        self.clients.pop(client.connection, None)
        for tank_id in client.tanks:
            if self.claims.get(tank_id) is client.connection:
                del self.claims[tank_id]
        assert self._claims_event is not None
        self._claims_event.set()

    async def _on_message(self, client: _Client, raw: str | bytes) -> None:
        try:
            message = decode_message(raw)
        except ProtocolError as exc:
            # malformed frame: report and keep the connection alive
            await self._error(client.connection, "bad_message", str(exc))
            return
        if isinstance(message, ActionMsg):
            if client.role == "viewer":
                await self._error(client.connection, "viewer_cannot_act",
                                  "viewers cannot send actions")
                return
            if message.tank not in client.tanks:
                await self._error(client.connection, "not_your_tank",
                                  f"tank {message.tank} is not yours")
                return
            if not self._episode_live or message.tick != self.env.tick:
                return  # stale or early; the barrier only takes current-tick actions
            self._pending[message.tank] = Action.clamped(
                message.throttle, message.steer, message.fire
            )
            assert self._action_event is not None
            self._action_event.set()
        elif isinstance(message, ResetMsg):
            if client.role == "viewer":
                await self._error(client.connection, "viewer_cannot_act",
                                  "viewers cannot reset")
                return
            if self._episode_live:
                await self._error(client.connection, "episode_running",
                                  "reset is only allowed between episodes")
                return
            self._reset_request = message.seed
            assert self._claims_event is not None
            self._claims_event.set()
        elif isinstance(message, Hello):
            await self._error(client.connection, "already_joined",
                              "hello is only valid once")
        # other inbound types are ignored

    # -- frames -------------------------------------------------------------

    def _reward_summaries(
        self, tank_ids: Iterable[int], result: StepResult | None
    ) -> dict[int, RewardSummary]:
        out: dict[int, RewardSummary] = {}
        for tank_id in sorted(tank_ids):
            delta = (
                result.reward_components.get(tank_id) if result else None
            ) or RewardComponents()
            out[tank_id] = RewardSummary(
                enemy_kills=delta.enemy_kills,
                ally_kills=delta.ally_kills,
                neutral_kills=delta.neutral_kills,
                died=delta.died,
                scalar=scalarize(delta, self.config.reward_weights),
            )
        return out

    def _state_frame(self, client: _Client, result: StepResult | None) -> StateFrame:
        env = self.env
        state = env.state
        if client.role == "viewer":
            entities = [t for t in state.tanks if t.alive]
            visibility = None
        else:
            alive_claimed = [
                i for i in sorted(client.tanks) if state.tank_by_id(i).alive
            ]
            team = (
                self.config.team_of(next(iter(client.tanks)))
                if client.tanks else Team.RED
            )
            enemies: set[int] = set()
            neutrals: set[int] = set()
            for tank_id in alive_claimed:
                vis = env.visibility(tank_id)
                enemies |= vis.visible_enemies
                neutrals |= vis.visible_neutrals
            visible = enemies | neutrals
            entities = [
                t for t in state.tanks
                if t.alive and (t.team is team or t.id in visible)
            ]
            visibility = {
                "enemies": tuple(sorted(enemies)),
                "neutrals": tuple(sorted(neutrals)),
            }
        scores = env.team_scores()
        return StateFrame(
            session_id=self.session_id,
            tick=env.tick,
            done=env.done,
            entities=tuple(
                EntitySummary(
                    id=t.id, team=t.team.value, x=t.pose.x, y=t.pose.y,
                    heading=t.pose.heading, alive=t.alive,
                )
                for t in entities
            ),
            obstacles=tuple(
                ObstacleSummary(x=o.center.x, y=o.center.y, r=o.radius)
                for o in state.obstacles
            ),
            arena_side=state.arena_side,
            comm_range=self.config.comm_range,
            visibility=visibility,
            rewards=self._reward_summaries(client.tanks, result),
            scores={team.value: s for team, s in scores.items()},
        )

    async def _broadcast_frames(self, result: StepResult | None) -> None:
        env = self.env
        sends = []
        for client in list(self.clients.values()):
            if client.role in ("viewer", "human"):
                sends.append(self._send(client.connection,
                                        self._state_frame(client, result)))
            else:
                for tank_id in sorted(client.tanks):
                    if not env.state.tank_by_id(tank_id).alive:
                        continue
                    grid = (
                        result.observations.get(tank_id) if result else None
                    )
                    if grid is None:
                        grid = env.observation_for(tank_id)
                    sends.append(
                        self._send(
                            client.connection,
                            ObsFrame(
                                session_id=self.session_id,
                                tick=env.tick,
                                tank=tank_id,
                                grid=encode_grid(grid),
                                done=env.done,
                            ),
                        )
                    )
        if sends:
            await asyncio.gather(*sends)

    # -- episode loop ---------------------------------------------------------

    async def _session_loop(self) -> None:
        assert self._claims_event is not None and self._action_event is not None
        seed = self.settings.seed
        while True:
            await self._wait_for_claims()
            recorder = self._make_recorder()
            self.env.reset(seed)
            if recorder is not None:
                recorder.on_reset(self.env, seed)
            self._episode_live = True
            pre_obs = {
                i: self.env.observation_for(i)
                for i in self.env.alive_external_ids()
            }
            await self._broadcast_frames(None)
            while not self.env.done:
                result = await self._run_tick(recorder, pre_obs)
                pre_obs = result.observations
                await self._broadcast_frames(result)
            if recorder is not None:
                recorder.finalize(self.env)
            self._episode_live = False
            self.episode_index += 1
            if (
                self.settings.stop_after_episodes is not None
                and self.episode_index >= self.settings.stop_after_episodes
            ):
                self.request_stop()
                return
            seed = await self._wait_for_reset(seed + 1)

    async def _wait_for_claims(self) -> None:
        assert self._claims_event is not None
        while self._external - self.claims.keys():
            self._claims_event.clear()
            await self._claims_event.wait()

    async def _wait_for_reset(self, default_seed: int) -> int:
        assert self._claims_event is not None
        while self._reset_request is None:
            self._claims_event.clear()
            await self._claims_event.wait()
        seed = self._reset_request
        self._reset_request = None
        announce = ResetMsg(session_id=self.session_id, seed=seed)
        await asyncio.gather(*[
            self._send(c.connection, announce) for c in self.clients.values()
        ])
        return seed

    def _make_recorder(self) -> TrajectoryRecorder | None:
        path = self.settings.record_path
        if path is None:
            return None
        if self.episode_index > 0:
            path = path.with_name(
                f"{path.stem}_{self.episode_index}{path.suffix or FILE_SUFFIX}"
            )
        return TrajectoryRecorder(
            path, embed_observations=self.settings.embed_observations
        )

    async def _run_tick(self, recorder, pre_obs) -> StepResult:
        assert self._action_event is not None
        loop = asyncio.get_running_loop()
        start = loop.time()
        barrier_deadline = start + self.settings.barrier_timeout
        self._pending = {}
        while True:
            needed = {
                i for i in self.env.alive_external_ids() if i in self.claims
            } - self._pending.keys()
            if not needed:
                break
            remaining = barrier_deadline - loop.time()
            if remaining <= 0:
                break
            self._action_event.clear()
            try:
                await asyncio.wait_for(self._action_event.wait(), remaining)
            except asyncio.TimeoutError:
                break
        actions: dict[int, Action] = {
            i: self._pending.get(i, Action())  # timeout: all-zero action
            for i in self.env.alive_external_ids()
        }
        pace = start + self.settings.tick_interval - loop.time()
        if pace > 0:
            await asyncio.sleep(pace)
        result = self.env.step(actions)
        if recorder is not None:
            recorder.on_step(self.env, pre_observations=pre_obs)
        return result


def serve_session(config: EnvConfig, settings: ServerSettings | None = None) -> None:
    """Blocking entry point used by the CLI."""
    SessionServer(config, settings).run()
