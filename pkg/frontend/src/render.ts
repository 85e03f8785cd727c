// Canvas 2D stick-figure view with a simple follow camera, plus ground
// overlays for the target trajectory (orange) and the realized root path
// (green).

import { SkeletonDef, boneList } from "./fk.js";
import { Vec3 } from "./math.js";

export interface Camera {
  yaw: number;     // radians around +Y
  pitch: number;   // radians, 0 = horizontal
  distance: number;
  target: Vec3;
}

export const DEFAULT_CAMERA: Camera = {
  yaw: 0.6,
  pitch: 0.42,
  distance: 420,
  target: [0, 90, 0],
};

export interface HudInfo {
  status: string;
  fps: number;
  serverFps: number;
  latencyMs: number;
  buffered: number;
  starved: boolean;
  typeName: string;
  mode: string;
}

export function project(camera: Camera, width: number, height: number, p: Vec3): [number, number, number] {
  const cy = Math.cos(camera.yaw);
  const sy = Math.sin(camera.yaw);
  const cp = Math.cos(camera.pitch);
  const sp = Math.sin(camera.pitch);
  const x = p[0] - camera.target[0];
  const y = p[1] - camera.target[1];
  const z = p[2] - camera.target[2];
  // rotate around Y, then pitch around X
  const rx = cy * x - sy * z;
  const rz = sy * x + cy * z;
  const ry = cp * y - sp * rz;
  const depth = cp * rz + sp * y + camera.distance;
  const f = (0.9 * Math.min(width, height) * 1.8) / Math.max(depth, 50);
  return [width / 2 + rx * f, height / 2 - ry * f, depth];
}

export class SceneRenderer {
  camera: Camera = { ...DEFAULT_CAMERA, target: [0, 90, 0] };
  trail: [number, number][] = [];
  targetPath: [number, number][] = [];
  private bones: { from: number; to: number }[] = [];

  constructor(private ctx: CanvasRenderingContext2D, private skel: SkeletonDef) {
    this.bones = boneList(skel);
  }

  follow(root: Vec3): void {
    const t = this.camera.target;
    this.camera.target = [
      t[0] + (root[0] - t[0]) * 0.08,
      t[1] + (root[1] - t[1]) * 0.03,
      t[2] + (root[2] - t[2]) * 0.08,
    ];
    this.trail.push([root[0], root[2]]);
    if (this.trail.length > 600) this.trail.shift();
  }

  draw(positions: Vec3[] | null, contacts: number[] | null, hud: HudInfo): void {
    const { ctx } = this;
    const { width, height } = ctx.canvas;
    ctx.fillStyle = "#10141a";
    ctx.fillRect(0, 0, width, height);
    this.drawGrid();
    this.drawGroundPath(this.targetPath, "#e67e22", 2);
    this.drawGroundPath(this.trail, "#27a844", 1.5);
    if (positions) this.drawSkeleton(positions, contacts ?? []);
    this.drawHud(hud);
  }

  private drawGrid(): void {
    const { ctx } = this;
    const { width, height } = ctx.canvas;
    ctx.strokeStyle = "#232b36";
    ctx.lineWidth = 1;
    const step = 100;
    const cx = Math.round(this.camera.target[0] / step) * step;
    const cz = Math.round(this.camera.target[2] / step) * step;
    for (let i = -6; i <= 6; i++) {
      this.line3d([cx + i * step, 0, cz - 600], [cx + i * step, 0, cz + 600]);
      this.line3d([cx - 600, 0, cz + i * step], [cx + 600, 0, cz + i * step]);
    }
  }

  private line3d(a: Vec3, b: Vec3): void {
    const { ctx } = this;
    const { width, height } = ctx.canvas;
    const pa = project(this.camera, width, height, a);
    const pb = project(this.camera, width, height, b);
    ctx.beginPath();
    ctx.moveTo(pa[0], pa[1]);
    ctx.lineTo(pb[0], pb[1]);
    ctx.stroke();
  }

  private drawGroundPath(path: [number, number][], color: string, widthPx: number): void {
    if (path.length < 2) return;
    const { ctx } = this;
    ctx.strokeStyle = color;
    ctx.lineWidth = widthPx;
    ctx.beginPath();
    const { width, height } = ctx.canvas;
    path.forEach(([x, z], i) => {
      const p = project(this.camera, width, height, [x, 0, z]);
      if (i === 0) ctx.moveTo(p[0], p[1]);
      else ctx.lineTo(p[0], p[1]);
    });
    ctx.stroke();
  }

  private drawSkeleton(positions: Vec3[], contacts: number[]): void {
    const { ctx } = this;
    const { width, height } = ctx.canvas;
    ctx.strokeStyle = "#d7e3f4";
    ctx.lineWidth = 2.5;
    for (const bone of this.bones) {
      this.line3d(positions[bone.from], positions[bone.to]);
    }
    ctx.fillStyle = "#8fb3dd";
    for (const p of positions) {
      const s = project(this.camera, width, height, p);
      ctx.beginPath();
      ctx.arc(s[0], s[1], 3, 0, Math.PI * 2);
      ctx.fill();
    }
    // highlight contacting feet
    this.skel.foot_joint_indices.forEach((joint, i) => {
      if (contacts[i] > 0.5) {
        const s = project(this.camera, width, height, positions[joint]);
        ctx.fillStyle = "#2ecc71";
        ctx.beginPath();
        ctx.arc(s[0], s[1], 5, 0, Math.PI * 2);
        ctx.fill();
      }
    });
  }

  private drawHud(hud: HudInfo): void {
    const { ctx } = this;
    ctx.fillStyle = hud.starved ? "#e74c3c" : "#9fb2c8";
    ctx.font = "12px monospace";
    const lines = [
      `${hud.status}  type:${hud.typeName}  mode:${hud.mode}`,
      `display ${hud.fps.toFixed(0)} fps  server ${hud.serverFps.toFixed(0)} fps  ` +
      `latency ${hud.latencyMs.toFixed(0)} ms  buffer ${hud.buffered}` +
      (hud.starved ? "  [stalled]" : ""),
    ];
    lines.forEach((text, i) => ctx.fillText(text, 12, 20 + 16 * i));
  }
}
