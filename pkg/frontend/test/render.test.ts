import { describe, expect, it } from "vitest";

import { Canvas2D, drawFrame } from "../src/render.js";
import { EntitySummary, StateFrame } from "../src/protocol.js";
import { ViewModel } from "../src/viewmodel.js";

class StubCanvas implements Canvas2D {
  fillStyle = "";
  strokeStyle = "";
  lineWidth = 1;
  font = "";
  globalAlpha = 1;
  calls: string[] = [];
  fillRect() { this.calls.push("fillRect"); }
  strokeRect() { this.calls.push("strokeRect"); }
  clearRect() { this.calls.push("clearRect"); }
  beginPath() { this.calls.push("beginPath"); }
  arc() { this.calls.push("arc"); }
  moveTo() {}
  lineTo() {}
  closePath() {}
  fill() { this.calls.push("fill"); }
  stroke() { this.calls.push("stroke"); }
  fillText(text: string) { this.calls.push(`text:${text}`); }
  save() {}
  restore() {}
  translate() {}
  rotate() {}
}

function entity(id: number, team: string, alive = true): EntitySummary {
  return { id, team, x: 10 + id * 5, y: 20, heading: 0.5, alive };
}

function frame(entities: EntitySummary[], done = false): StateFrame {
  return {
    kind: "state", sessionId: "s", tick: 2, done,
    entities,
    obstacles: [
      { x: 40, y: 40, r: 2 }, { x: 60, y: 60, r: 3 },
    ],
    arenaSide: 100, commRange: 25,
    visibility: { enemies: [], neutrals: [] },
    rewards: new Map(),
    scores: { red: 1, blue: -1 },
  };
}

function vmWith(frameValue: StateFrame, tank: number | null = 0): ViewModel {
  const vm = new ViewModel();
  vm.assign("s", tank === null ? [] : [tank]);
  vm.ingestFrame(frameValue);
  return vm;
}

describe("frame rendering", () => {
  it("draws exactly the visible entities as sprites", () => {
    const entities = [
      entity(0, "red"), entity(5, "blue"), entity(10, "neutral"),
      entity(11, "neutral", false),  // dead: not drawn
    ];
    const vm = vmWith(frame(entities));
    const stats = drawFrame(new StubCanvas(), vm, 640);
    expect(stats.tanksDrawn).toBe(3);
    expect(stats.obstaclesDrawn).toBe(2);
    expect(stats.bannerShown).toBe(false);
  });

  it("draws one comm circle per alive ally when the overlay is on", () => {
    const entities = [
      entity(0, "red"), entity(1, "red"), entity(2, "red", false),
      entity(5, "blue"),
    ];
    const vm = vmWith(frame(entities));
    vm.toggleCommRange();
    const stats = drawFrame(new StubCanvas(), vm, 640);
    expect(stats.commCircles).toBe(2); // own team only, dead excluded
  });

  it("shows the end-of-episode banner with scores", () => {
    const vm = vmWith(frame([entity(0, "red")], true));
    const stub = new StubCanvas();
    const stats = drawFrame(stub, vm, 640);
    expect(stats.bannerShown).toBe(true);
    expect(stub.calls.some((c) => c.startsWith("text:episode over"))).toBe(true);
  });

  it("renders a waiting screen without a frame", () => {
    const vm = new ViewModel();
    const stats = drawFrame(new StubCanvas(), vm, 640);
    expect(stats.tanksDrawn).toBe(0);
    expect(stats.obstaclesDrawn).toBe(0);
  });

  it("keeps rendering when spectating without a tank", () => {
    const entities = [entity(0, "red"), entity(5, "blue")];
    const vm = vmWith(frame(entities), null);
    const stats = drawFrame(new StubCanvas(), vm, 640);
    expect(stats.tanksDrawn).toBe(2);
  });
});
