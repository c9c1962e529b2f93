/**
 * Top-down canvas renderer.  World coordinates map straight onto the
 * canvas (y grows downward on screen), which keeps steering ergonomic:
 * the right arrow turns the sprite clockwise.
 *
 * Display convention: the player's own team renders blue, threats green,
 * neutral wanderers red, obstacles gray.  A viewer with no tank sees the
 * blue team blue and the red team green.
 */

import { StateFrame } from "./protocol.js";
import { ViewModel } from "./viewmodel.js";

export interface Canvas2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  globalAlpha: number;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
  save(): void;
  restore(): void;
  translate(x: number, y: number): void;
  rotate(angle: number): void;
}

export interface DrawStats {
  tanksDrawn: number;
  obstaclesDrawn: number;
  commCircles: number;
  bannerShown: boolean;
}

const COLOR_ALLY = "#4da3ff";
const COLOR_THREAT = "#51d88a";
const COLOR_NEUTRAL = "#ff5d5d";
const COLOR_OBSTACLE = "#8a8a8a";
const COLOR_BACKDROP = "#101418";
const COLOR_BORDER = "#d0d0d0";

const TANK_W = 3.0;
const TANK_L = 4.5;

function ownTeam(vm: ViewModel, frame: StateFrame): string {
  if (vm.assignedTank !== null) {
    const own = frame.entities.find((e) => e.id === vm.assignedTank);
    if (own) {
      return own.team;
    }
  }
  return "blue";
}

export function drawFrame(
  ctx: Canvas2D, vm: ViewModel, size: number,
): DrawStats {
  const stats: DrawStats = {
    tanksDrawn: 0, obstaclesDrawn: 0, commCircles: 0, bannerShown: false,
  };
  const frame = vm.latest;
  ctx.fillStyle = COLOR_BACKDROP;
  ctx.fillRect(0, 0, size, size);
  if (frame === null) {
    ctx.fillStyle = COLOR_BORDER;
    ctx.font = "16px monospace";
    ctx.fillText("waiting for session...", size / 2 - 90, size / 2);
    return stats;
  }
  const scale = size / frame.arenaSide;

  ctx.strokeStyle = COLOR_BORDER;
  ctx.lineWidth = 1;
  ctx.strokeRect(0, 0, frame.arenaSide * scale, frame.arenaSide * scale);

  ctx.fillStyle = COLOR_OBSTACLE;
  for (const ob of frame.obstacles) {
    ctx.beginPath();
    ctx.arc(ob.x * scale, ob.y * scale, ob.r * scale, 0, Math.PI * 2);
    ctx.fill();
    stats.obstaclesDrawn += 1;
  }

  const team = ownTeam(vm, frame);
  if (vm.showCommRange) {
    ctx.strokeStyle = COLOR_ALLY;
    ctx.globalAlpha = 0.35;
    for (const e of frame.entities) {
      if (!e.alive || e.team !== team) {
        continue;
      }
      ctx.beginPath();
      ctx.arc(e.x * scale, e.y * scale, frame.commRange * scale, 0, Math.PI * 2);
      ctx.stroke();
      stats.commCircles += 1;
    }
    ctx.globalAlpha = 1.0;
  }

  for (const e of frame.entities) {
    if (!e.alive) {
      continue;
    }
    const color = e.team === "neutral"
      ? COLOR_NEUTRAL
      : e.team === team ? COLOR_ALLY : COLOR_THREAT;
    ctx.save();
    ctx.translate(e.x * scale, e.y * scale);
    ctx.rotate(e.heading);
    ctx.fillStyle = color;
    ctx.fillRect(
      (-TANK_W / 2) * scale, (-TANK_L / 2) * scale,
      TANK_W * scale, TANK_L * scale,
    );
    // heading wedge on the nose
    ctx.beginPath();
    ctx.moveTo(0, (TANK_L / 2 + 1.5) * scale);
    ctx.lineTo((-TANK_W / 3) * scale, (TANK_L / 2) * scale);
    ctx.lineTo((TANK_W / 3) * scale, (TANK_L / 2) * scale);
    ctx.closePath();
    ctx.fill();
    if (e.id === vm.assignedTank) {
      ctx.strokeStyle = "#ffffff";
      ctx.strokeRect(
        (-TANK_W / 2 - 0.5) * scale, (-TANK_L / 2 - 0.5) * scale,
        (TANK_W + 1) * scale, (TANK_L + 1) * scale,
      );
    }
    ctx.restore();
    stats.tanksDrawn += 1;
  }

  ctx.fillStyle = COLOR_BORDER;
  ctx.font = "13px monospace";
  const scoreText =
    `tick ${frame.tick}  red ${frame.scores.red}  blue ${frame.scores.blue}`;
  ctx.fillText(scoreText, 8, 18);
  if (vm.recording) {
    ctx.fillStyle = COLOR_NEUTRAL;
    ctx.fillText("REC", size - 42, 18);
  }

  if (frame.done) {
    ctx.fillStyle = "#000000";
    ctx.globalAlpha = 0.6;
    ctx.fillRect(0, size / 2 - 34, size, 68);
    ctx.globalAlpha = 1.0;
    ctx.fillStyle = COLOR_BORDER;
    ctx.font = "20px monospace";
    ctx.fillText(
      `episode over  red ${frame.scores.red} : blue ${frame.scores.blue}`,
      size / 2 - 170, size / 2 + 6,
    );
    stats.bannerShown = true;
  }
  return stats;
}
