/**
 * Keyboard state to action mapping.
 *
 * forward/back -> throttle +1 / -1 (0 when both or neither are held);
 * left/right -> steer -1 / +1 (0 when both or neither); holding fire
 * sends +1, otherwise -1.  Arrows and WASD are equivalent; space fires.
 */

export interface ActionTriple {
  throttle: number;
  steer: number;
  fire: number;
}

export const FORWARD_KEYS = ["ArrowUp", "KeyW"];
export const BACK_KEYS = ["ArrowDown", "KeyS"];
export const LEFT_KEYS = ["ArrowLeft", "KeyA"];
export const RIGHT_KEYS = ["ArrowRight", "KeyD"];
export const FIRE_KEYS = ["Space"];

export const CONTROL_KEYS = new Set([
  ...FORWARD_KEYS, ...BACK_KEYS, ...LEFT_KEYS, ...RIGHT_KEYS, ...FIRE_KEYS,
]);

function anyHeld(keys: ReadonlySet<string>, candidates: string[]): boolean {
  return candidates.some((key) => keys.has(key));
}

export function inputToAction(keys: ReadonlySet<string>): ActionTriple {
  const forward = anyHeld(keys, FORWARD_KEYS);
  const back = anyHeld(keys, BACK_KEYS);
  const left = anyHeld(keys, LEFT_KEYS);
  const right = anyHeld(keys, RIGHT_KEYS);
  const fire = anyHeld(keys, FIRE_KEYS);
  return {
    throttle: (forward ? 1 : 0) + (back ? -1 : 0),
    steer: (right ? 1 : 0) + (left ? -1 : 0),
    fire: fire ? 1 : -1,
  };
}
