import { describe, expect, it } from "vitest";

import { StateFrame } from "../src/protocol.js";
import { ViewModel } from "../src/viewmodel.js";

function frame(tick: number, done = false): StateFrame {
  return {
    kind: "state", sessionId: "s", tick, done,
    entities: [], obstacles: [], arenaSide: 100, commRange: 30,
    visibility: { enemies: [], neutrals: [] },
    rewards: new Map(), scores: { red: 0, blue: 0 },
  };
}

function driver(): ViewModel {
  const vm = new ViewModel();
  vm.assign("s", [0]);
  return vm;
}

describe("frame ingestion", () => {
  it("accepts monotonically increasing ticks", () => {
    const vm = driver();
    expect(vm.ingestFrame(frame(0))).toBe(true);
    expect(vm.ingestFrame(frame(1))).toBe(true);
    expect(vm.latest?.tick).toBe(1);
  });

  it("discards stale frames on tick regression", () => {
    const vm = driver();
    vm.ingestFrame(frame(5));
    expect(vm.ingestFrame(frame(3))).toBe(false);
    expect(vm.latest?.tick).toBe(5);
  });

  it("accepts a fresh episode after done", () => {
    const vm = driver();
    vm.ingestFrame(frame(9, true));
    expect(vm.ingestFrame(frame(0))).toBe(true);
  });

  it("accepts tick zero after an explicit reset", () => {
    const vm = driver();
    vm.ingestFrame(frame(4));
    vm.episodeReset();
    expect(vm.ingestFrame(frame(0))).toBe(true);
  });
});

describe("one action per tick", () => {
  it("emits exactly one action for a tick", () => {
    const vm = driver();
    vm.ingestFrame(frame(0));
    const first = vm.actionForCurrentTick();
    expect(first?.tick).toBe(0);
    expect(vm.actionForCurrentTick()).toBeNull(); // same tick: no repeat
    vm.ingestFrame(frame(1));
    expect(vm.actionForCurrentTick()?.tick).toBe(1);
  });

  it("emits nothing without an assigned tank", () => {
    const vm = new ViewModel();
    vm.assign("s", []);
    vm.ingestFrame(frame(0));
    expect(vm.actionForCurrentTick()).toBeNull();
  });

  it("emits nothing once the episode is done", () => {
    const vm = driver();
    vm.ingestFrame(frame(3, true));
    expect(vm.actionForCurrentTick()).toBeNull();
  });

  it("reflects held keys in the emitted action", () => {
    const vm = driver();
    vm.keyDown("ArrowUp");
    vm.keyDown("Space");
    vm.ingestFrame(frame(0));
    const action = vm.actionForCurrentTick();
    expect(action?.throttle).toBe(1);
    expect(action?.fire).toBe(1);
    vm.keyUp("Space");
    vm.ingestFrame(frame(1));
    expect(vm.actionForCurrentTick()?.fire).toBe(-1);
  });
});

describe("overlay toggle", () => {
  it("flips the comm-range overlay", () => {
    const vm = driver();
    expect(vm.showCommRange).toBe(false);
    vm.toggleCommRange();
    expect(vm.showCommRange).toBe(true);
    vm.toggleCommRange();
    expect(vm.showCommRange).toBe(false);
  });
});
