// Wire records shared with the synthesis service: newline-delimited JSON,
// identical over raw sockets and WebSocket text frames.

import { FramePose, SkeletonDef } from "./fk.js";

export interface ReadyRecord {
  kind: "ready";
  skeleton: SkeletonDef;
  type_names: string[];
  trl: number;
  warmup_sources: string[];
}

export interface WireFrame extends FramePose {
  index: number;
  t: number;
  contacts: number[];
}

export interface FramesRecord {
  kind: "frames";
  frames: WireFrame[];
}

export interface MetricsRecord {
  kind: "metrics";
  fps: number;
  latency_ms: number;
  lateness_ms: number;
}

export interface ErrorRecord {
  kind: "error";
  code: string;
  message: string;
}

export type ServerRecord = ReadyRecord | FramesRecord | MetricsRecord | ErrorRecord;

export interface StartOptions {
  warmup_source?: string;
  mode?: "sample" | "mean";
  ik?: boolean;
  seed?: number;
  realtime?: boolean;
  frames?: number;
}

export interface TrajectoryPartWire {
  points: number[][];
  type_id: number;
  speed: number;
}

export function hello(checkpointId: string): string {
  return encode({ kind: "hello", checkpoint_id: checkpointId });
}

export function start(options: StartOptions): string {
  return encode({ kind: "start", ...options });
}

export function control(typeId: number | null, directionXZ: number[] | null, speed: number | null): string {
  const record: Record<string, unknown> = { kind: "control" };
  if (typeId !== null) record.type_id = typeId;
  if (directionXZ !== null) record.direction_xz = directionXZ;
  if (speed !== null) record.speed = speed;
  return encode(record);
}

export function trajectory(parts: TrajectoryPartWire[]): string {
  return encode({ kind: "trajectory", spec: { parts } });
}

export function stop(): string {
  return encode({ kind: "stop" });
}

export function encode(record: unknown): string {
  return JSON.stringify(record) + "\n";
}

export type ParseResult =
  | { ok: true; record: ServerRecord }
  | { ok: false; error: string };

export function parseRecord(text: string): ParseResult {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (err) {
    return { ok: false, error: `unparseable record: ${err}` };
  }
  const record = raw as { kind?: string };
  if (
    record.kind === "ready" || record.kind === "frames" ||
    record.kind === "metrics" || record.kind === "error"
  ) {
    return { ok: true, record: raw as ServerRecord };
  }
  return { ok: false, error: `unknown record kind ${record.kind}` };
}

// Reassembles newline-delimited records from arbitrary transport chunks.
export class LineDecoder {
  private buffer = "";

  push(chunk: string): string[] {
    this.buffer += chunk;
    const lines = this.buffer.split("\n");
    this.buffer = lines.pop() ?? "";
    return lines.filter((l) => l.trim().length > 0);
  }
}
