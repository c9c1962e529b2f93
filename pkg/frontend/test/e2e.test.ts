/**
 * Live loop: the actual client session/viewmodel stack drives one tank in
 * a real server process, the episode records, and the recording replays
 * identically headless.
 */

import { execFile, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";
import { WebSocket as NodeWebSocket } from "ws";
import { afterAll, describe, expect, it } from "vitest";

import { Message, StateFrame } from "../src/protocol.js";
import { Session } from "../src/net.js";
import { ViewModel } from "../src/viewmodel.js";

(globalThis as Record<string, unknown>).WebSocket = NodeWebSocket;

const execFileAsync = promisify(execFile);
const PY = process.env.PYTHON ?? "python3";

let server: ChildProcess | null = null;

function startServer(port: number, recordPath: string): Promise<ChildProcess> {
  return new Promise((resolve, reject) => {
    const child = spawn(PY, [
      "-m", "tanksworld.cli", "serve",
      "--port", String(port), "--seed", "5",
      "--record", recordPath, "--episodes", "1",
      "--tick-interval", "0.02", "--barrier-timeout", "0.5",
      "--blue", "scripted:random",
      "--set", "team_size=1", "--set", "neutral_count=1",
      "--set", "max_steps=15",
    ], { cwd: join(__dirname, "..", "..") });
    let ready = false;
    child.stderr!.on("data", (chunk: Buffer) => {
      if (!ready && chunk.toString().includes("session on ws://")) {
        ready = true;
        resolve(child);
      }
    });
    child.on("exit", (code) => {
      if (!ready) {
        reject(new Error(`server exited early with code ${code}`));
      }
    });
    setTimeout(() => {
      if (!ready) {
        child.kill();
        reject(new Error("server did not start in time"));
      }
    }, 15000);
  });
}

function waitForExit(child: ChildProcess): Promise<number | null> {
  return new Promise((resolve) => child.on("exit", (code) => resolve(code)));
}

afterAll(() => {
  server?.kill();
});

describe("human loop end to end", () => {
  it("drives a recorded episode that replays identically", async () => {
    const dir = mkdtempSync(join(tmpdir(), "tw-e2e-"));
    const recordPath = join(dir, "human.twtraj");
    const port = 20000 + Math.floor(Math.random() * 20000);
    server = await startServer(port, recordPath);
    const exited = waitForExit(server);

    const vm = new ViewModel();
    vm.keyDown("ArrowUp");
    vm.keyDown("Space");

    const doneSeen = new Promise<StateFrame>((resolve, reject) => {
      const session = new Session(`ws://127.0.0.1:${port}/`, "human", [], {
        onMessage(message: Message): void {
          if (message.kind === "assigned") {
            vm.assign(message.sessionId, message.tanks);
            expect(message.tanks).toEqual([0]);
          } else if (message.kind === "state") {
            if (!vm.ingestFrame(message)) {
              return;
            }
            const action = vm.actionForCurrentTick();
            if (action !== null) {
              session.send(action);
            }
            if (message.done) {
              resolve(message);
              session.close();
            }
          } else if (message.kind === "error") {
            reject(new Error(`${message.code}: ${message.text}`));
          }
        },
        onClose(): void {
          /* server shuts down after the episode */
        },
      });
    });

    const finalFrame = await doneSeen;
    expect(finalFrame.tick).toBe(15);
    await exited;

    const { stdout } = await execFileAsync(PY, [
      "-m", "tanksworld.cli", "replay", recordPath,
    ], { cwd: join(__dirname, "..", "..") });
    expect(stdout).toContain("identical");
  }, 40000);
});
