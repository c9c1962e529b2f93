/**
 * Client-side session state: the latest frame, held keys, and the
 * one-action-per-tick bookkeeping.  Holds no game logic; the server's
 * frames are authoritative for what exists and what is visible.
 */

import { ActionMsg, StateFrame } from "./protocol.js";
import { inputToAction } from "./input.js";

export class ViewModel {
  latest: StateFrame | null = null;
  assignedTank: number | null = null;
  sessionId = "";
  keys = new Set<string>();
  showCommRange = false;
  recording = false;
  private lastActionTick: number | null = null;
  private lastFrameWasDone = false;

  assign(sessionId: string, tanks: number[]): void {
    this.sessionId = sessionId;
    this.assignedTank = tanks.length > 0 ? tanks[0] : null;
  }

  /** Accept a frame unless it is stale; returns whether it was taken. */
  ingestFrame(frame: StateFrame): boolean {
    if (this.latest !== null && !this.lastFrameWasDone
        && frame.tick < this.latest.tick) {
      return false; // tick regression: discard
    }
    this.latest = frame;
    this.lastFrameWasDone = frame.done;
    return true;
  }

  /** Start-of-episode bookkeeping (on a reset announcement). */
  episodeReset(): void {
    this.latest = null;
    this.lastActionTick = null;
    this.lastFrameWasDone = false;
  }

  toggleCommRange(): void {
    this.showCommRange = !this.showCommRange;
  }

  keyDown(code: string): void {
    this.keys.add(code);
  }

  keyUp(code: string): void {
    this.keys.delete(code);
  }

  /**
   * The single action to send for the current frame, or null when there
   * is nothing to do (no tank, no frame, episode over, or this tick was
   * already answered).
   */
  actionForCurrentTick(): ActionMsg | null {
    if (this.latest === null || this.assignedTank === null || this.latest.done) {
      return null;
    }
    if (this.lastActionTick === this.latest.tick) {
      return null;
    }
    this.lastActionTick = this.latest.tick;
    const triple = inputToAction(this.keys);
    return {
      kind: "action",
      sessionId: this.sessionId,
      tick: this.latest.tick,
      tank: this.assignedTank,
      throttle: triple.throttle,
      steer: triple.steer,
      fire: triple.fire,
    };
  }
}
