/**
 * Entry point: connect to the session server, claim a tank (or spectate),
 * relay keyboard input as one action per tick, and draw incoming frames.
 *
 * Query parameters: ?role=human|viewer (default human), ?tank=<id> to
 * request a specific tank, ?recording=1 to show the REC badge.
 * Keys: arrows/WASD drive, space fires, C toggles the comm-range
 * overlay, R requests a new episode once the current one is done.
 */

import { CONTROL_KEYS } from "./input.js";
import { Message, Role } from "./protocol.js";
import { drawFrame } from "./render.js";
import { Session } from "./net.js";
import { ViewModel } from "./viewmodel.js";

const canvas = document.getElementById("arena") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusLine = document.getElementById("status")!;

const params = new URLSearchParams(window.location.search);
const role = (params.get("role") === "viewer" ? "viewer" : "human") as Role;
const requestedTank = params.get("tank");
const tanks = role === "human" && requestedTank !== null
  ? [Number(requestedTank)]
  : [];

const vm = new ViewModel();
vm.recording = params.get("recording") === "1";

function redraw(): void {
  drawFrame(ctx, vm, canvas.width);
}

const url = `ws://${window.location.host}/`;
const session = new Session(url, role, tanks, {
  onMessage(message: Message): void {
    switch (message.kind) {
      case "assigned":
        vm.assign(message.sessionId, message.tanks);
        statusLine.textContent = message.tanks.length > 0
          ? `driving tank ${message.tanks[0]} as ${role}`
          : `watching as ${role}`;
        break;
      case "state": {
        if (!vm.ingestFrame(message)) {
          return;
        }
        const action = vm.actionForCurrentTick();
        if (action !== null) {
          session.send(action);
        }
        redraw();
        break;
      }
      case "reset":
        vm.episodeReset();
        statusLine.textContent = `new episode (seed ${message.seed})`;
        break;
      case "error":
        statusLine.textContent = `server: ${message.code}: ${message.text}`;
        break;
      default:
        break;
    }
  },
  onClose(): void {
    statusLine.textContent = "disconnected";
  },
});

window.addEventListener("keydown", (event) => {
  if (event.code === "KeyC") {
    vm.toggleCommRange();
    redraw();
    return;
  }
  if (event.code === "KeyR" && vm.latest?.done) {
    session.send({
      kind: "reset", sessionId: vm.sessionId,
      seed: Math.floor(Math.random() * 2 ** 31),
    });
    return;
  }
  if (CONTROL_KEYS.has(event.code)) {
    vm.keyDown(event.code);
    event.preventDefault();
  }
});

window.addEventListener("keyup", (event) => {
  if (CONTROL_KEYS.has(event.code)) {
    vm.keyUp(event.code);
    event.preventDefault();
  }
});

window.addEventListener("blur", () => {
  vm.keys.clear();
});

redraw();
