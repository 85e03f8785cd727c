// Studio entry point: connect, steer with the keyboard, sketch trajectories,
// and render the streamed skeleton.

import { StudioClient } from "./client.js";
import { KeyboardSteering } from "./controls.js";
import { SkeletonDef, forwardKinematics } from "./fk.js";
import { PlaybackBuffer } from "./playback.js";
import { ReadyRecord, ServerRecord, WireFrame } from "./protocol.js";
import { SceneRenderer } from "./render.js";
import { TrajectorySketch } from "./sketch.js";

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusBanner = document.getElementById("status")!;
const typeBar = document.getElementById("types")!;
const toastBox = document.getElementById("toast")!;

const playback = new PlaybackBuffer(60);
const steering = new KeyboardSteering();
let renderer: SceneRenderer | null = null;
let skeleton: SkeletonDef | null = null;
let typeNames: string[] = [];
let serverFps = 0;
let latencyMs = 0;
let lastFrame: WireFrame | null = null;
let sketchMode = false;
let displayFrames = 0;
let displayFps = 0;

setInterval(() => {
  displayFps = displayFrames;
  displayFrames = 0;
}, 1000);

function toast(message: string): void {
  toastBox.textContent = message;
  toastBox.classList.add("visible");
  setTimeout(() => toastBox.classList.remove("visible"), 2500);
}

const wsUrl = `ws://${location.host}/session`;
const client = new StudioClient(wsUrl, getCheckpointId(), {
  onStatus: (status) => {
    statusBanner.textContent = status;
    statusBanner.className = status;
  },
  onReady: (ready) => onReady(ready),
  onRecord: (record) => onRecord(record),
  onProtocolError: (message) => toast(`protocol: ${message}`),
});

function getCheckpointId(): string {
  const params = new URLSearchParams(location.search);
  return params.get("checkpoint") ?? "default";
}

function onReady(ready: ReadyRecord): void {
  skeleton = ready.skeleton;
  typeNames = ready.type_names;
  renderer = new SceneRenderer(ctx, skeleton);
  typeBar.innerHTML = "";
  typeNames.forEach((name, i) => {
    const button = document.createElement("button");
    button.textContent = `${i + 1}:${name}`;
    button.onclick = () => {
      steering.typeId = i;
      client.sendControl(i, null, null);
      highlightType();
    };
    typeBar.appendChild(button);
  });
  highlightType();
  playback.reset();
  client.startSession({
    warmup_source: ready.warmup_sources.includes("demo") ? "demo" : ready.warmup_sources[0],
    mode: "sample",
    ik: true,
    seed: (Math.random() * 1e6) | 0,
  });
}

function highlightType(): void {
  Array.from(typeBar.children).forEach((el, i) =>
    el.classList.toggle("active", i === steering.typeId),
  );
}

function onRecord(record: ServerRecord): void {
  if (record.kind === "frames") {
    playback.push(record.frames);
  } else if (record.kind === "metrics") {
    serverFps = record.fps;
    latencyMs = record.latency_ms + record.lateness_ms;
  } else if (record.kind === "error") {
    toast(`${record.code}: ${record.message}`);
  }
}

// -- input ------------------------------------------------------------------

window.addEventListener("keydown", (e) => {
  if (e.key === "t") {
    sketchMode = !sketchMode;
    toast(sketchMode ? "sketch mode: drag to draw a path" : "sketch mode off");
    return;
  }
  steering.keyDown(e.key);
  highlightType();
});
window.addEventListener("keyup", (e) => steering.keyUp(e.key));

const sketch = new TrajectorySketch((cx, cy) => {
  // map canvas coordinates onto the ground plane around the character
  const scale = 2.0; // cm per pixel
  const target = renderer?.camera.target ?? [0, 0, 0];
  return [
    target[0] + (cx - canvas.width / 2) * scale,
    target[2] - (cy - canvas.height / 2) * scale,
  ];
});

canvas.addEventListener("pointerdown", (e) => {
  if (sketchMode) sketch.begin(e.offsetX, e.offsetY);
});
canvas.addEventListener("pointermove", (e) => {
  if (sketchMode) sketch.move(e.offsetX, e.offsetY);
});
canvas.addEventListener("pointerup", () => {
  if (!sketchMode) return;
  sketch.end();
  const part = sketch.toPart(steering.typeId, steering.speed);
  if (part) {
    client.sendTrajectory([part]);
    if (renderer) renderer.targetPath = part.points as [number, number][];
    toast(`trajectory sent (${part.points.length} points)`);
  } else {
    toast("trajectory too short, ignored");
  }
  sketch.clear();
});

// -- main loop -----------------------------------------------------------------

function tick(nowMs: number): void {
  requestAnimationFrame(tick);
  const sample = steering.poll(nowMs);
  if (sample) {
    client.sendControl(sample.typeId, sample.direction, sample.speed);
  }
  const frame = playback.next(nowMs);
  if (frame && renderer && skeleton) {
    if (frame !== lastFrame) {
      displayFrames += 1;
      lastFrame = frame;
    }
    const positions = forwardKinematics(skeleton, frame);
    renderer.follow(positions[0]);
    renderer.draw(positions, frame.contacts, {
      status: client.status,
      fps: displayFps,
      serverFps,
      latencyMs,
      buffered: playback.buffered,
      starved: playback.starved,
      typeName: typeNames[steering.typeId] ?? "?",
      mode: sketchMode ? "sketch" : "keys",
    });
  } else if (renderer) {
    renderer.draw(null, null, {
      status: client.status,
      fps: displayFps,
      serverFps,
      latencyMs,
      buffered: playback.buffered,
      starved: playback.starved,
      typeName: typeNames[steering.typeId] ?? "?",
      mode: sketchMode ? "sketch" : "keys",
    });
  }
}

function resize(): void {
  canvas.width = window.innerWidth;
  canvas.height = window.innerHeight - 48;
}
window.addEventListener("resize", resize);
resize();
client.connect();
requestAnimationFrame(tick);
