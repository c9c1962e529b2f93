/**
 * Wire protocol "twp/1": one canonical JSON message per WebSocket frame.
 *
 * Canonical form: keys sorted, no whitespace, numbers in ECMAScript
 * minimal formatting (integral values carry no fractional part), so
 * encode(decode(frame)) === frame byte-exactly for conformant frames.
 * Decoding is strict: unknown types, missing fields, unknown fields, and
 * wrong value types are rejected with an error naming the offender.
 */

export const PROTOCOL_VERSION = "twp/1";
export const GRID_BYTES = 4 * 128 * 128;

export type Role = "agent" | "human" | "viewer";
const ROLES: Role[] = ["agent", "human", "viewer"];

export interface EntitySummary {
  id: number;
  team: string;
  x: number;
  y: number;
  heading: number;
  alive: boolean;
}

export interface ObstacleSummary {
  x: number;
  y: number;
  r: number;
}

export interface RewardSummary {
  enemyKills: number;
  allyKills: number;
  neutralKills: number;
  died: number;
  scalar: number;
}

export interface Hello {
  kind: "hello";
  sessionId: string;
  role: Role;
  tanks: number[];
}

export interface Assigned {
  kind: "assigned";
  sessionId: string;
  tanks: number[];
  config: string[];
}

export interface StateFrame {
  kind: "state";
  sessionId: string;
  tick: number;
  done: boolean;
  entities: EntitySummary[];
  obstacles: ObstacleSummary[];
  arenaSide: number;
  commRange: number;
  visibility: { enemies: number[]; neutrals: number[] } | null;
  rewards: Map<number, RewardSummary>;
  scores: { red: number; blue: number };
}

export interface ObsFrame {
  kind: "obs";
  sessionId: string;
  tick: number;
  tank: number;
  grid: string;
  done: boolean;
}

export interface ActionMsg {
  kind: "action";
  sessionId: string;
  tick: number;
  tank: number;
  throttle: number;
  steer: number;
  fire: number;
  clamped?: boolean; // decode-side flag, never serialized
}

export interface ResetMsg {
  kind: "reset";
  sessionId: string;
  seed: number;
}

export interface ErrorMsg {
  kind: "error";
  sessionId: string;
  code: string;
  text: string;
}

export type Message =
  | Hello
  | Assigned
  | StateFrame
  | ObsFrame
  | ActionMsg
  | ResetMsg
  | ErrorMsg;

export class ProtocolError extends Error {}

type Payload = Record<string, unknown>;

/** JSON with recursively sorted object keys and compact separators. */
export function canonicalStringify(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalStringify).join(",") + "]";
  }
  const keys = Object.keys(value as Payload).sort();
  const parts = keys.map(
    (k) => JSON.stringify(k) + ":" + canonicalStringify((value as Payload)[k]),
  );
  return "{" + parts.join(",") + "}";
}

export function encodeMessage(message: Message): string {
  const payload: Payload = {
    v: PROTOCOL_VERSION,
    sid: message.sessionId,
    type: message.kind,
  };
  switch (message.kind) {
    case "hello":
      payload.role = message.role;
      payload.tanks = message.tanks;
      break;
    case "assigned":
      payload.tanks = message.tanks;
      payload.config = message.config;
      break;
    case "state": {
      payload.tick = message.tick;
      payload.done = message.done;
      payload.entities = message.entities.map((e) => ({
        id: e.id, team: e.team, x: e.x, y: e.y, heading: e.heading,
        alive: e.alive,
      }));
      payload.obstacles = message.obstacles.map((o) => ({
        x: o.x, y: o.y, r: o.r,
      }));
      payload.arena_side = message.arenaSide;
      payload.comm_range = message.commRange;
      payload.visibility = message.visibility
        ? { enemies: message.visibility.enemies, neutrals: message.visibility.neutrals }
        : null;
      const rewards: Payload = {};
      for (const [tankId, r] of message.rewards) {
        rewards[String(tankId)] = {
          enemy_kills: r.enemyKills, ally_kills: r.allyKills,
          neutral_kills: r.neutralKills, died: r.died, scalar: r.scalar,
        };
      }
      payload.rewards = rewards;
      payload.scores = { red: message.scores.red, blue: message.scores.blue };
      break;
    }
    case "obs":
      payload.tick = message.tick;
      payload.tank = message.tank;
      payload.grid = message.grid;
      payload.done = message.done;
      break;
    case "action":
      payload.tick = message.tick;
      payload.tank = message.tank;
      payload.throttle = message.throttle;
      payload.steer = message.steer;
      payload.fire = message.fire;
      break;
    case "reset":
      payload.seed = message.seed;
      break;
    case "error":
      payload.code = message.code;
      payload.text = message.text;
      break;
  }
  return canonicalStringify(payload);
}

const REQUIRED: Record<string, string[]> = {
  hello: ["v", "sid", "type", "role", "tanks"],
  assigned: ["v", "sid", "type", "tanks", "config"],
  state: [
    "v", "sid", "type", "tick", "done", "entities", "obstacles",
    "arena_side", "comm_range", "visibility", "rewards", "scores",
  ],
  obs: ["v", "sid", "type", "tick", "tank", "grid", "done"],
  action: ["v", "sid", "type", "tick", "tank", "throttle", "steer", "fire"],
  reset: ["v", "sid", "type", "seed"],
  error: ["v", "sid", "type", "code", "text"],
};

function checkFields(payload: Payload, tag: string): void {
  const required = REQUIRED[tag];
  for (const name of required) {
    if (!(name in payload)) {
      throw new ProtocolError(`${tag}: missing field '${name}'`);
    }
  }
  for (const name of Object.keys(payload)) {
    if (!required.includes(name)) {
      throw new ProtocolError(`${tag}: unknown field '${name}'`);
    }
  }
}

function expectString(value: unknown, name: string): string {
  if (typeof value !== "string") {
    throw new ProtocolError(`field '${name}' must be a string`);
  }
  return value;
}

function expectInt(value: unknown, name: string): number {
  if (typeof value !== "number" || !Number.isInteger(value)) {
    throw new ProtocolError(`field '${name}' must be an integer`);
  }
  return value;
}

function expectBool(value: unknown, name: string): boolean {
  if (typeof value !== "boolean") {
    throw new ProtocolError(`field '${name}' must be a boolean`);
  }
  return value;
}

function expectNum(value: unknown, name: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new ProtocolError(`field '${name}' must be a finite number`);
  }
  return value;
}

function expectIntList(value: unknown, name: string): number[] {
  if (!Array.isArray(value) || value.some((v) => !Number.isInteger(v))) {
    throw new ProtocolError(`field '${name}' must be a list of ints`);
  }
  return value as number[];
}

function expectStringList(value: unknown, name: string): string[] {
  if (!Array.isArray(value) || value.some((v) => typeof v !== "string")) {
    throw new ProtocolError(`field '${name}' must be a list of strings`);
  }
  return value as string[];
}

function decodeState(payload: Payload, sid: string): StateFrame {
  const rawEntities = payload.entities;
  if (!Array.isArray(rawEntities)) {
    throw new ProtocolError("state: entities must be a list");
  }
  const entities = rawEntities.map((item: Payload) => {
    for (const key of Object.keys(item)) {
      if (!["id", "team", "x", "y", "heading", "alive"].includes(key)) {
        throw new ProtocolError(`entities: unknown field '${key}'`);
      }
    }
    return {
      id: expectInt(item.id, "entities.id"),
      team: expectString(item.team, "entities.team"),
      x: expectNum(item.x, "entities.x"),
      y: expectNum(item.y, "entities.y"),
      heading: expectNum(item.heading, "entities.heading"),
      alive: expectBool(item.alive, "entities.alive"),
    };
  });
  const rawObstacles = payload.obstacles;
  if (!Array.isArray(rawObstacles)) {
    throw new ProtocolError("state: obstacles must be a list");
  }
  const obstacles = rawObstacles.map((item: Payload) => {
    for (const key of Object.keys(item)) {
      if (!["x", "y", "r"].includes(key)) {
        throw new ProtocolError(`obstacles: unknown field '${key}'`);
      }
    }
    return {
      x: expectNum(item.x, "obstacles.x"),
      y: expectNum(item.y, "obstacles.y"),
      r: expectNum(item.r, "obstacles.r"),
    };
  });
  let visibility: StateFrame["visibility"] = null;
  if (payload.visibility !== null) {
    const vis = payload.visibility as Payload;
    if (
      typeof vis !== "object" || Array.isArray(vis) ||
      Object.keys(vis).sort().join(",") !== "enemies,neutrals"
    ) {
      throw new ProtocolError("state: visibility must have enemies and neutrals");
    }
    visibility = {
      enemies: expectIntList(vis.enemies, "visibility.enemies"),
      neutrals: expectIntList(vis.neutrals, "visibility.neutrals"),
    };
  }
  const rewardsRaw = payload.rewards;
  if (typeof rewardsRaw !== "object" || rewardsRaw === null || Array.isArray(rewardsRaw)) {
    throw new ProtocolError("state: rewards must be an object");
  }
  const rewards = new Map<number, RewardSummary>();
  for (const [key, item] of Object.entries(rewardsRaw as Payload)) {
    const tankId = Number(key);
    if (!Number.isInteger(tankId)) {
      throw new ProtocolError(`rewards: bad tank id '${key}'`);
    }
    const entry = item as Payload;
    for (const k of Object.keys(entry)) {
      if (!["enemy_kills", "ally_kills", "neutral_kills", "died", "scalar"].includes(k)) {
        throw new ProtocolError(`rewards: unknown field '${k}'`);
      }
    }
    rewards.set(tankId, {
      enemyKills: expectInt(entry.enemy_kills, "rewards.enemy_kills"),
      allyKills: expectInt(entry.ally_kills, "rewards.ally_kills"),
      neutralKills: expectInt(entry.neutral_kills, "rewards.neutral_kills"),
      died: expectInt(entry.died, "rewards.died"),
      scalar: expectNum(entry.scalar, "rewards.scalar"),
    });
  }
  const scores = payload.scores as Payload;
  if (
    typeof scores !== "object" || scores === null ||
    Object.keys(scores).sort().join(",") !== "blue,red"
  ) {
    throw new ProtocolError("state: scores must have red and blue");
  }
  return {
    kind: "state",
    sessionId: sid,
    tick: expectInt(payload.tick, "tick"),
    done: expectBool(payload.done, "done"),
    entities,
    obstacles,
    arenaSide: expectNum(payload.arena_side, "arena_side"),
    commRange: expectNum(payload.comm_range, "comm_range"),
    visibility,
    rewards,
    scores: {
      red: expectNum(scores.red, "scores.red"),
      blue: expectNum(scores.blue, "scores.blue"),
    },
  };
}

export function decodeMessage(frame: string): Message {
  let payload: unknown;
  try {
    payload = JSON.parse(frame);
  } catch (error) {
    throw new ProtocolError(`malformed JSON frame: ${error}`);
  }
  if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
    throw new ProtocolError("frame must be a JSON object");
  }
  const obj = payload as Payload;
  const tag = obj.type;
  if (typeof tag !== "string" || !(tag in REQUIRED)) {
    throw new ProtocolError(`unknown message type '${String(tag)}'`);
  }
  checkFields(obj, tag);
  if (obj.v !== PROTOCOL_VERSION) {
    throw new ProtocolError(`protocol version mismatch: '${String(obj.v)}'`);
  }
  const sid = expectString(obj.sid, "sid");

  switch (tag) {
    case "hello": {
      const role = expectString(obj.role, "role");
      if (!ROLES.includes(role as Role)) {
        throw new ProtocolError(`hello: bad role '${role}'`);
      }
      return {
        kind: "hello", sessionId: sid, role: role as Role,
        tanks: expectIntList(obj.tanks, "tanks"),
      };
    }
    case "assigned":
      return {
        kind: "assigned", sessionId: sid,
        tanks: expectIntList(obj.tanks, "tanks"),
        config: expectStringList(obj.config, "config"),
      };
    case "state":
      return decodeState(obj, sid);
    case "obs": {
      const grid = expectString(obj.grid, "grid");
      let byteLength: number;
      try {
        byteLength = base64ByteLength(grid);
      } catch (error) {
        throw new ProtocolError(`obs: bad grid payload: ${error}`);
      }
      if (byteLength !== GRID_BYTES) {
        throw new ProtocolError(
          `obs: grid must decode to ${GRID_BYTES} bytes, got ${byteLength}`,
        );
      }
      return {
        kind: "obs", sessionId: sid,
        tick: expectInt(obj.tick, "tick"),
        tank: expectInt(obj.tank, "tank"),
        grid,
        done: expectBool(obj.done, "done"),
      };
    }
    case "action": {
      const throttle = expectNum(obj.throttle, "throttle");
      const steer = expectNum(obj.steer, "steer");
      const fire = expectNum(obj.fire, "fire");
      const clamp = (v: number) => Math.min(1, Math.max(-1, v));
      const clamped = [throttle, steer, fire].some((v) => v < -1 || v > 1);
      return {
        kind: "action", sessionId: sid,
        tick: expectInt(obj.tick, "tick"),
        tank: expectInt(obj.tank, "tank"),
        throttle: clamp(throttle), steer: clamp(steer), fire: clamp(fire),
        clamped,
      };
    }
    case "reset":
      return { kind: "reset", sessionId: sid, seed: expectInt(obj.seed, "seed") };
    default:
      return {
        kind: "error", sessionId: sid,
        code: expectString(obj.code, "code"),
        text: expectString(obj.text, "text"),
      };
  }
}

function base64ByteLength(data: string): number {
  if (!/^[A-Za-z0-9+/]*={0,2}$/.test(data) || data.length % 4 !== 0) {
    throw new Error("invalid base64");
  }
  let padding = 0;
  if (data.endsWith("==")) padding = 2;
  else if (data.endsWith("=")) padding = 1;
  return (data.length / 4) * 3 - padding;
}
