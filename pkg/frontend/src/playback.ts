// Frame batches arrive in bursts (up to 10 at a time); the playback buffer
// re-times them to a steady display rate and holds the last pose when the
// network starves it.

import { WireFrame } from "./protocol.js";

export class PlaybackBuffer {
  private queue: WireFrame[] = [];
  private current: WireFrame | null = null;
  private nextDue = 0;
  private frameInterval: number;
  starved = false;
  received = 0;

  constructor(fps = 60, private maxQueued = 120) {
    this.frameInterval = 1000 / fps;
  }

  push(frames: WireFrame[]): void {
    for (const f of frames) {
      this.queue.push(f);
      this.received += 1;
    }
    // if the producer runs far ahead, skip forward rather than lag
    if (this.queue.length > this.maxQueued) {
      this.queue.splice(0, this.queue.length - this.maxQueued);
    }
  }

  get buffered(): number {
    return this.queue.length;
  }

  // Frame to display at `nowMs`; advances at the configured rate.
  next(nowMs: number): WireFrame | null {
    if (this.nextDue === 0) this.nextDue = nowMs;
    while (nowMs >= this.nextDue && this.queue.length > 0) {
      this.current = this.queue.shift()!;
      this.nextDue += this.frameInterval;
    }
    if (nowMs >= this.nextDue && this.queue.length === 0) {
      this.starved = this.current !== null;
      this.nextDue = nowMs; // resynchronize once frames return
    } else {
      this.starved = false;
    }
    return this.current;
  }

  reset(): void {
    this.queue = [];
    this.current = null;
    this.nextDue = 0;
    this.starved = false;
    this.received = 0;
  }
}
