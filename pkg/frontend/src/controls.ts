// Keyboard steering: held direction keys map to a world-plane unit vector,
// digits pick motion types, and emission is debounced so holding a key
// produces at most 20 control records per second.

export interface SteeringSample {
  direction: [number, number] | null; // world XZ, unit
  typeId: number;
  speed: number;
}

export const EMIT_INTERVAL_MS = 50; // 20 Hz ceiling

const KEY_VECTORS: Record<string, [number, number]> = {
  w: [0, 1],
  arrowup: [0, 1],
  s: [0, -1],
  arrowdown: [0, -1],
  a: [-1, 0],
  arrowleft: [-1, 0],
  d: [1, 0],
  arrowright: [1, 0],
};

export class KeyboardSteering {
  private held = new Set<string>();
  private lastEmit = Number.NEGATIVE_INFINITY;
  private lastPayload = "";
  typeId = 0;
  speed = 120;

  keyDown(key: string): void {
    const k = key.toLowerCase();
    if (k in KEY_VECTORS) this.held.add(k);
    if (/^[1-9]$/.test(k)) this.typeId = parseInt(k, 10) - 1;
    if (k === "+" || k === "=") this.speed = Math.min(this.speed + 20, 600);
    if (k === "-") this.speed = Math.max(this.speed - 20, 20);
  }

  keyUp(key: string): void {
    this.held.delete(key.toLowerCase());
  }

  direction(): [number, number] | null {
    let x = 0;
    let z = 0;
    for (const k of this.held) {
      const [dx, dz] = KEY_VECTORS[k];
      x += dx;
      z += dz;
    }
    const n = Math.hypot(x, z);
    if (n === 0) return null;
    return [x / n, z / n];
  }

  // Returns a sample when one should be emitted at `nowMs`, else null.
  // Releasing all keys stops emission (the server then runs on its own
  // predicted steering).
  poll(nowMs: number): SteeringSample | null {
    const direction = this.direction();
    if (direction === null) {
      this.lastPayload = "";
      return null;
    }
    const payload = JSON.stringify([direction, this.typeId, this.speed]);
    const changed = payload !== this.lastPayload;
    if (!changed && nowMs - this.lastEmit < EMIT_INTERVAL_MS) return null;
    if (changed && nowMs - this.lastEmit < EMIT_INTERVAL_MS) return null;
    this.lastEmit = nowMs;
    this.lastPayload = payload;
    return { direction, typeId: this.typeId, speed: this.speed };
  }
}
