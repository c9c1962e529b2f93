"""Ego-relative 4-channel 128x128 observation rendering.

Each tank perceives a 160x160 world-unit window centered on itself
(1.25 u/pixel), rotated so its own heading points up (toward decreasing
row index).  Channels: 0 allies including ego, 1 visible threats,
2 visible neutrals, 3 obstacles plus arena walls.

Drawing rules (a pixel is filled iff its center lies inside the shape):

* allies/threats: filled 3.0 x 4.5 u oriented chassis rectangle at 1.0
  plus a 4-pixel heading ray at 0.5 extending from the nose;
* neutrals: filled disc of tank radius at 1.0 (position only, no
  orientation cue);
* obstacles: filled discs at 1.0;
* walls: the one-pixel border band of pixels whose center lies within
  half a pixel (0.625 u) of the arena boundary square.

Dead tanks and entities outside a tank's visibility set are absent.
Rendering is a pure function: identical inputs give bit-identical grids.
"""

from __future__ import annotations

import math
import threading
from typing import TYPE_CHECKING

import numpy as np

from .errors import DeadObserverError
from .sensing import VisibilitySet, visibility_sets
from .world import Pose, Team, WorldState

if TYPE_CHECKING:
    from .config import EnvConfig

GRID = 128
WINDOW = 160.0
U_PER_PX = WINDOW / GRID  # 1.25
HALF_PX = U_PER_PX / 2.0
EGO_PIXEL = GRID // 2  # ego center sits at (row 64, col 64)

CH_ALLY, CH_THREAT, CH_NEUTRAL, CH_OBSTACLE = 0, 1, 2, 3
CHASSIS_HALF_W = 1.5
CHASSIS_HALF_L = 2.25
RAY_PIXELS = 4
RAY_VALUE = 0.5

# Ego coordinates of every pixel center; float32 keeps renders cheap.
_COLS = np.arange(GRID, dtype=np.float32)
_EX = np.broadcast_to((_COLS - EGO_PIXEL) * U_PER_PX, (GRID, GRID)).copy()
_EY = np.broadcast_to(
    ((EGO_PIXEL - _COLS) * U_PER_PX)[:, None], (GRID, GRID)
).copy()

_TANK_PAD = 3  # chassis half-diagonal (2.7 u) plus slack, in pixels
_PATCH = 2 * _TANK_PAD + 1
_OFF = np.arange(-_TANK_PAD, _TANK_PAD + 1, dtype=np.int64)
_OFF_R = np.repeat(_OFF, _PATCH)
_OFF_C = np.tile(_OFF, _PATCH)

_TLS = threading.local()


def _scratch() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    bufs = getattr(_TLS, "bufs", None)
    if bufs is None:
        bufs = tuple(np.empty((GRID, GRID), dtype=np.float32) for _ in range(3))
        _TLS.bufs = bufs
    return bufs


def world_to_ego(x: float, y: float, ego: Pose) -> tuple[float, float]:
    """Translate by -ego position, rotate by -ego heading; forward is +y."""
    dx, dy = x - ego.x, y - ego.y
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    return (c * dx + s * dy, -s * dx + c * dy)


def ego_to_pixel(ex: float, ey: float) -> tuple[int, int]:
    """Index of the pixel whose cell contains an ego-frame point."""
    col = math.floor(EGO_PIXEL + ex / U_PER_PX + 0.5)
    row = math.floor(EGO_PIXEL - ey / U_PER_PX + 0.5)
    return row, col


def render_observation(
    state: WorldState,
    tank_id: int,
    vis: VisibilitySet | None,
    config: "EnvConfig",
) -> np.ndarray:
    """Render one tank's observation grid; shape (4, 128, 128) in [0, 1]."""
    observer = state.tank_by_id(tank_id)
    if not observer.alive:
        raise DeadObserverError(f"cannot render observation for dead tank {tank_id}")
    if vis is None:
        vis = visibility_sets(
            state, tank_id, config.comm_range,
            two_hop_only=config.two_hop_only,
            neutral_always_visible=config.neutral_always_visible,
        )

    grid = np.zeros((4, GRID, GRID), dtype=np.float32)
    ego = observer.pose

    rects: list[tuple[int, float, float, float]] = []
    discs: list[tuple[int, float, float, float]] = []
    for tank in state.tanks:
        if not tank.alive:
            continue
        if tank.team is observer.team:
            channel = CH_ALLY
        elif tank.team is Team.NEUTRAL:
            if tank.id in vis.visible_neutrals:
                ex, ey = world_to_ego(tank.pose.x, tank.pose.y, ego)
                discs.append((CH_NEUTRAL, ex, ey, config.tank_radius))
            continue
        else:
            if tank.id not in vis.visible_enemies:
                continue
            channel = CH_THREAT
        ex, ey = world_to_ego(tank.pose.x, tank.pose.y, ego)
        rects.append((channel, ex, ey, tank.pose.heading - ego.heading))

    for ob in state.obstacles:
        ex, ey = world_to_ego(ob.center.x, ob.center.y, ego)
        discs.append((CH_OBSTACLE, ex, ey, ob.radius))

    # chassis before rays, so a ray never overwrites any chassis pixel
    flat = grid.reshape(-1)
    _fill_chassis_batch(flat, rects)
    _draw_ray_batch(flat, rects)
    _fill_disc_batch(flat, discs)
    _fill_wall_band(grid[CH_OBSTACLE], state, ego)

    return grid


def _centers_to_pixels(ex: np.ndarray, ey: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r0 = np.floor(EGO_PIXEL - ey / U_PER_PX + 0.5).astype(np.int64)
    c0 = np.floor(EGO_PIXEL + ex / U_PER_PX + 0.5).astype(np.int64)
    return r0, c0


def _fill_chassis_batch(
    flat: np.ndarray, items: list[tuple[int, float, float, float]]
) -> None:
    """Fill every oriented chassis rectangle in one vectorized pass.

    ``flat`` is the whole 4-channel grid raveled; each item carries its
    destination channel so allies and threats share the pass.
    """
    if not items:
        return
    arr = np.asarray(items, dtype=np.float64)
    keep = (np.abs(arr[:, 1]) < WINDOW) & (np.abs(arr[:, 2]) < WINDOW)
    if not keep.all():
        arr = arr[keep]
        if arr.shape[0] == 0:
            return
    channel = arr[:, 0].astype(np.int64)
    ex, ey, heading = arr[:, 1], arr[:, 2], arr[:, 3]
    r0, c0 = _centers_to_pixels(ex, ey)
    rows = r0[:, None] + _OFF_R[None, :]
    cols = c0[:, None] + _OFF_C[None, :]
    valid = (rows >= 0) & (rows < GRID) & (cols >= 0) & (cols < GRID)
    dx = (cols - EGO_PIXEL) * U_PER_PX - ex[:, None]
    dy = (EGO_PIXEL - rows) * U_PER_PX - ey[:, None]
    c = np.cos(heading)[:, None]
    s = np.sin(heading)[:, None]
    lx = c * dx + s * dy
    ly = c * dy - s * dx
    hit = valid & (np.abs(lx) <= CHASSIS_HALF_W) & (np.abs(ly) <= CHASSIS_HALF_L)
    index = (channel[:, None] * (GRID * GRID) + rows * GRID + cols)[hit]
    flat[index] = 1.0


_RAY_DISTS = CHASSIS_HALF_L + (np.arange(RAY_PIXELS, dtype=np.float64) + 0.5) * U_PER_PX


def _draw_ray_batch(
    flat: np.ndarray, items: list[tuple[int, float, float, float]]
) -> None:
    """Heading rays: lift ray pixels to 0.5 without touching chassis pixels."""
    if not items:
        return
    arr = np.asarray(items, dtype=np.float64)
    channel = arr[:, 0].astype(np.int64)
    ex, ey, heading = arr[:, 1], arr[:, 2], arr[:, 3]
    fx = -np.sin(heading)
    fy = np.cos(heading)
    px = ex[:, None] + fx[:, None] * _RAY_DISTS[None, :]
    py = ey[:, None] + fy[:, None] * _RAY_DISTS[None, :]
    rows, cols = _centers_to_pixels(px, py)
    valid = (rows >= 0) & (rows < GRID) & (cols >= 0) & (cols < GRID)
    index = (
        np.broadcast_to(channel[:, None], rows.shape) * (GRID * GRID)
        + rows * GRID + cols
    )[valid]
    np.maximum.at(flat, index, np.float32(RAY_VALUE))


_DISC_OFFSETS: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _disc_offsets(pad: int) -> tuple[np.ndarray, np.ndarray]:
    cached = _DISC_OFFSETS.get(pad)
    if cached is None:
        off = np.arange(-pad, pad + 1, dtype=np.int64)
        patch = 2 * pad + 1
        cached = (np.repeat(off, patch), np.tile(off, patch))
        _DISC_OFFSETS[pad] = cached
    return cached


def _fill_disc_batch(
    flat: np.ndarray, items: list[tuple[int, float, float, float]]
) -> None:
    """Fill every disc (any channel) in one vectorized pass."""
    if not items:
        return
    arr = np.asarray(items, dtype=np.float64)
    keep = (np.abs(arr[:, 1]) < WINDOW) & (np.abs(arr[:, 2]) < WINDOW)
    if not keep.all():
        arr = arr[keep]
        if arr.shape[0] == 0:
            return
    channel = arr[:, 0].astype(np.int64)
    ex, ey, radius = arr[:, 1], arr[:, 2], arr[:, 3]
    pad = int(float(radius.max()) / U_PER_PX) + 2
    off_r, off_c = _disc_offsets(pad)
    r0, c0 = _centers_to_pixels(ex, ey)
    rows = r0[:, None] + off_r[None, :]
    cols = c0[:, None] + off_c[None, :]
    valid = (rows >= 0) & (rows < GRID) & (cols >= 0) & (cols < GRID)
    dx = (cols - EGO_PIXEL) * U_PER_PX - ex[:, None]
    dy = (EGO_PIXEL - rows) * U_PER_PX - ey[:, None]
    hit = valid & (dx * dx + dy * dy <= (radius * radius)[:, None])
    index = (channel[:, None] * (GRID * GRID) + rows * GRID + cols)[hit]
    flat[index] = 1.0


def _fill_wall_band(channel: np.ndarray, state: WorldState, ego: Pose) -> None:
    """Mark pixels whose center lies within half a pixel of the boundary.

    Pixel centers are mapped ego -> world -> arena-local in one affine,
    where the border test is a Chebyshev annulus around the square.
    """
    frame = state.arena_frame
    alpha = ego.heading - frame.rotation
    kx, ky = frame.to_local(ego.x, ego.y)
    ca, sa = math.cos(alpha), math.sin(alpha)
    half = state.arena_side / 2.0

    ax, ay, tmp = _scratch()
    np.multiply(_EX, ca, out=ax)
    np.multiply(_EY, sa, out=tmp)
    ax -= tmp
    ax += kx - half
    np.multiply(_EX, sa, out=ay)
    np.multiply(_EY, ca, out=tmp)
    ay += tmp
    ay += ky - half
    np.abs(ax, out=ax)
    np.abs(ay, out=ay)
    np.maximum(ax, ay, out=ax)
    ax -= half
    np.abs(ax, out=ax)
    np.copyto(channel, 1.0, where=ax <= HALF_PX)


def quantize_grid(grid: np.ndarray) -> np.ndarray:
    """Map a [0, 1] float grid to uint8 for transport or embedding."""
    return np.clip(np.rint(grid * 255.0), 0, 255).astype(np.uint8)


def dequantize_grid(data: np.ndarray) -> np.ndarray:
    return data.astype(np.float32) / 255.0
