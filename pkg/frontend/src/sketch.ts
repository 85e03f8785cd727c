// Ground-plane trajectory sketching: pointer strokes in canvas space are
// mapped to world XZ, resampled to roughly even spacing, and shipped as a
// single-part trajectory with the currently selected type and speed.

import { TrajectoryPartWire } from "./protocol.js";

export type WorldMapper = (canvasX: number, canvasY: number) => [number, number];

export class TrajectorySketch {
  points: [number, number][] = [];
  active = false;

  constructor(private toWorld: WorldMapper, private minSpacing = 5) {}

  begin(x: number, y: number): void {
    this.active = true;
    this.points = [this.toWorld(x, y)];
  }

  move(x: number, y: number): void {
    if (!this.active) return;
    const p = this.toWorld(x, y);
    const last = this.points[this.points.length - 1];
    if (Math.hypot(p[0] - last[0], p[1] - last[1]) >= this.minSpacing) {
      this.points.push(p);
    }
  }

  end(): [number, number][] {
    this.active = false;
    return this.points;
  }

  clear(): void {
    this.points = [];
    this.active = false;
  }

  toPart(typeId: number, speed: number): TrajectoryPartWire | null {
    const pts = this.points.filter(
      (p) => Number.isFinite(p[0]) && Number.isFinite(p[1]),
    );
    if (pts.length < 2) return null;
    return { points: pts.map((p) => [p[0], p[1]]), type_id: typeId, speed };
  }
}
