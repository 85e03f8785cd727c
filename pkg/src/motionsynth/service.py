"""Streaming synthesis service.

One asyncio server speaks three framings on a single port: newline-
delimited JSON over raw sockets, the same JSON records over WebSocket
(RFC 6455 handshake implemented here, no extra dependencies), and plain
HTTP GET for the browser client's static files.

Protocol (all records carry a "kind"):
  client -> server: hello{checkpoint_id}, start{warmup_source, mode, ik,
      seed, realtime}, control{type_id?, direction_xz?, speed?},
      trajectory{spec}, stop
  server -> client: ready{skeleton, type_names, trl}, frames{frames: [...]},
      metrics{fps, latency_ms, lateness_ms}, error{code, message}

Frames stream in batches of at most 10 at a 60 Hz wall clock; if inference
falls behind, frames arrive late rather than being dropped, and the
lateness is reported in the metrics records.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import MotionDataset
from .features import CONTROL_OFFSETS, ControlRecord, PartitionScheme, tpose_positions
from .model import MotionModel, receptive_field_len
from .skeleton import canonical_skeleton
from .synthesis import SessionConfig, SynthesisSession
from .synthetic import gait_clip
from .trajectory import TrajectorySpec, trajectory_controls

log = logging.getLogger(__name__)

FRAME_BATCH = 10
FRAME_RATE = 60.0
WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
}


@dataclass
class CheckpointBundle:
    model: MotionModel
    stats: object
    scheme: PartitionScheme
    skel: object
    type_names: list
    warmups: dict     # name -> (clip, type_ids)


def load_bundle(checkpoint_path, cache_dir=None, demo_warmup=True):
    """Model + stats + warm-up sources for serving."""
    skel = canonical_skeleton()
    scheme = PartitionScheme(skel)
    model = MotionModel.load(checkpoint_path, scheme)
    warmups = {}
    if cache_dir is not None:
        dataset = MotionDataset.open(cache_dir)
        stats = dataset.stats
        type_names = dataset.types
        from .bvh import parse_bvh

        for i, path in enumerate(dataset.meta.get("paths", [])):
            try:
                clip = parse_bvh(Path(path).read_text())
            except OSError:
                continue
            seq = dataset.sequences[i]
            ids = np.concatenate([[seq.type_ids[0]], seq.type_ids])
            warmups[f"seq{i}"] = (clip, ids)
    else:
        raise ValueError("serving requires the dataset cache that trained the model")
    if demo_warmup:
        clip = gait_clip(120)
        warmups.setdefault("demo", (clip, np.zeros(clip.num_frames, dtype=int)))
    return CheckpointBundle(model, stats, scheme, skel, type_names, warmups)


@dataclass
class SteeringState:
    mode: str = "predict"        # predict | direct | trajectory
    type_id: int = 0
    direction: np.ndarray = None  # world XZ unit
    speed: float = 120.0
    spec: TrajectorySpec = None
    spec_start_frame: int = 0


class ClientSession:
    """Per-connection state and the 60 Hz streaming loop."""

    def __init__(self, service, send):
        self.service = service
        self.send = send
        self.bundle = None
        self.session = None
        self.steering = SteeringState()
        self.stream_task = None
        self.realtime = True
        self.frame_serial = 0

    async def handle(self, record):
        kind = record.get("kind")
        if kind == "hello":
            await self._hello(record)
        elif kind == "start":
            await self._start(record)
        elif kind == "control":
            self._control(record)
        elif kind == "trajectory":
            self._trajectory(record)
        elif kind == "stop":
            await self.stop()
        else:
            await self.error("unknown_kind", f"unrecognized record kind {kind!r}")

    async def error(self, code, message):
        await self.send({"kind": "error", "code": code, "message": message})

    async def _hello(self, record):
        cid = record.get("checkpoint_id")
        bundle = self.service.bundles.get(cid)
        if bundle is None:
            await self.error("unknown_checkpoint", f"no checkpoint {cid!r}")
            return
        self.bundle = bundle
        skel = bundle.skel
        await self.send(
            {
                "kind": "ready",
                "skeleton": {
                    "joint_names": list(skel.joint_names),
                    "parent_index": list(skel.parent_index),
                    "offsets": skel.offsets.tolist(),
                    "foot_joint_indices": list(skel.foot_joint_indices),
                },
                "type_names": list(bundle.type_names),
                "trl": receptive_field_len(bundle.model.config),
                "warmup_sources": sorted(bundle.warmups),
            }
        )

    async def _start(self, record):
        if self.bundle is None:
            await self.error("no_checkpoint", "send hello before start")
            return
        await self.stop()
        source = record.get("warmup_source", "demo")
        if source not in self.bundle.warmups:
            await self.error("unknown_warmup", f"no warm-up source {source!r}")
            return
        clip, ids = self.bundle.warmups[source]
        config = SessionConfig(
            mode=record.get("mode", "sample"),
            use_ik=bool(record.get("ik", True)),
            seed=int(record.get("seed", 0)),
        )
        session = SynthesisSession(
            self.bundle.model, self.bundle.stats, self.bundle.scheme,
            self.bundle.skel, config,
        )
        warmup = int(record.get("warmup", config.warmup))
        session.seed_from_clip(clip, ids, len(self.bundle.type_names), warmup)
        self.session = session
        self.steering = SteeringState(type_id=int(np.argmax(session.type_weights[0])))
        self.realtime = bool(record.get("realtime", True))
        self.frame_serial = 0
        total = record.get("frames")  # optional bounded run, mainly for tests
        self.stream_task = asyncio.ensure_future(self._stream(total))

    def _control(self, record):
        if self.session is None:
            return
        st = self.steering
        st.spec = None
        if "type_id" in record and record["type_id"] is not None:
            st.type_id = int(record["type_id"])
        if record.get("direction_xz"):
            d = np.asarray(record["direction_xz"], dtype=float)
            n = np.linalg.norm(d)
            if n > 1e-6:
                st.direction = d / n
                st.mode = "direct"
        if "speed" in record and record["speed"] is not None:
            st.speed = float(record["speed"])
        if st.mode != "direct":
            st.mode = "predict" if st.direction is None else "direct"

    def _trajectory(self, record):
        if self.session is None:
            return
        try:
            spec = TrajectorySpec.from_json(json.dumps(record["spec"]))
        except (KeyError, ValueError) as exc:
            asyncio.ensure_future(self.error("bad_trajectory", str(exc)))
            return
        self.steering.spec = spec
        self.steering.mode = "trajectory"
        self.steering.spec_start_frame = self.session.frame_index

    def _next_control(self):
        """Resolve the steering state into a ControlRecord (or None)."""
        st = self.steering
        session = self.session
        K = len(self.bundle.type_names)
        tpose = tpose_positions(self.bundle.skel).reshape(-1)
        if st.mode == "trajectory" and st.spec is not None:
            return trajectory_controls(
                st.spec,
                session.frame_index - st.spec_start_frame,
                session.pose.yaw,
                session.pose.root_position[[0, 2]],
                tpose,
                K,
            )
        if st.mode == "direct" and st.direction is not None:
            yaw = session.pose.yaw
            c, s = np.cos(-yaw), np.sin(-yaw)
            rot = np.array([[c, s], [-s, c]])
            per_frame = st.speed / FRAME_RATE
            offsets = np.asarray(CONTROL_OFFSETS, dtype=float)[:, None]
            positions = (rot @ (st.direction * per_frame)[:, None]).T * offsets
            directions = np.tile(rot @ st.direction, (6, 1))
            types = np.zeros((6, K))
            types[:, st.type_id % K] = 1.0
            return ControlRecord(
                skeleton_pose=tpose,
                type_weights=types,
                future_positions=positions.reshape(6, 2),
                future_directions=directions,
            )
        if session.type_weights is not None:
            # keep the model's own path predictions, refresh the type only
            types = np.zeros((6, K))
            types[:, st.type_id % K] = 1.0
            session.type_weights = types
        return None

    async def _stream(self, total=None):
        session = self.session
        batch = []
        batch_started = time.monotonic()
        deadline = batch_started
        recent = []
        try:
            while total is None or self.frame_serial < total:
                record = self._next_control()
                try:
                    step = session.step(record)
                except Exception as exc:  # noqa: BLE001 - reported to the client
                    await self.error("session_failed", str(exc))
                    return
                pose = step.pose
                batch.append(
                    {
                        "index": self.frame_serial,
                        "t": round(time.monotonic(), 6),
                        "root_position": [round(v, 5) for v in pose.root_position],
                        "joints": np.round(pose.rotations, 7).tolist(),
                        "contacts": step.contact_labels.astype(int).tolist(),
                    }
                )
                recent.append(step.elapsed)
                self.frame_serial += 1
                if len(batch) >= FRAME_BATCH or (total is not None and self.frame_serial >= total):
                    deadline += len(batch) / FRAME_RATE
                    now = time.monotonic()
                    if self.realtime and deadline > now:
                        await asyncio.sleep(deadline - now)
                        lateness = 0.0
                    else:
                        lateness = max(0.0, now - deadline)
                        deadline = max(deadline, now)
                    await self.send({"kind": "frames", "frames": batch})
                    recent = recent[-120:]
                    fps = len(recent) / sum(recent) if sum(recent) > 0 else 0.0
                    await self.send(
                        {
                            "kind": "metrics",
                            "fps": round(fps, 2),
                            "latency_ms": round(1000.0 * FRAME_BATCH / FRAME_RATE, 2),
                            "lateness_ms": round(1000.0 * lateness, 2),
                        }
                    )
                    batch = []
                    await asyncio.sleep(0)  # let other sessions interleave
        except asyncio.CancelledError:
            if batch:
                await self.send({"kind": "frames", "frames": batch})
            raise

    async def stop(self):
        if self.stream_task is not None:
            self.stream_task.cancel()
            try:
                await self.stream_task
            except (asyncio.CancelledError, ConnectionError):
                pass
            self.stream_task = None


class MotionService:
    def __init__(self, bundles, ui_dir=None):
        self.bundles = dict(bundles)
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self._server = None

    async def serve(self, host="127.0.0.1", port=8765):
        self._server = await asyncio.start_server(self._accept, host, port)
        return self._server

    async def close(self):
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def _accept(self, reader, writer):
        try:
            first = await reader.readline()
            if not first:
                return
            if first.startswith(b"GET ") or first.startswith(b"POST "):
                await self._http(first, reader, writer)
            else:
                await self._jsonl(first, reader, writer)
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            try:
                writer.close()
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass

    # -- raw newline-JSON framing ------------------------------------------

    async def _jsonl(self, first_line, reader, writer):
        async def send(record):
            writer.write(json.dumps(record).encode("utf-8") + b"\n")
            await writer.drain()

        client = ClientSession(self, send)
        try:
            line = first_line
            while line:
                await self._dispatch(client, line.decode("utf-8", "replace"))
                line = await reader.readline()
        finally:
            await client.stop()

    async def _dispatch(self, client, text):
        text = text.strip()
        if not text:
            return
        try:
            record = json.loads(text)
        except json.JSONDecodeError as exc:
            await client.error("bad_json", f"unparseable record: {exc}")
            return
        await client.handle(record)

    # -- HTTP and WebSocket ---------------------------------------------------

    async def _http(self, request_line, reader, writer):
        headers = {}
        while True:
            line = await reader.readline()
            if line in (b"\r\n", b"\n", b""):
                break
            name, _, value = line.decode("latin-1").partition(":")
            headers[name.strip().lower()] = value.strip()
        path = request_line.split()[1].decode("latin-1")
        if headers.get("upgrade", "").lower() == "websocket":
            await self._websocket(headers, reader, writer)
        else:
            await self._static(path, writer)

    async def _static(self, path, writer):
        body = b"not found"
        status = "404 Not Found"
        ctype = "text/plain"
        if self.ui_dir is not None:
            rel = path.split("?")[0].lstrip("/") or "index.html"
            target = (self.ui_dir / rel).resolve()
            if str(target).startswith(str(self.ui_dir.resolve())) and target.is_file():
                body = target.read_bytes()
                status = "200 OK"
                ctype = CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        writer.write(
            f"HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\n"
            f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n".encode("latin-1")
            + body
        )
        await writer.drain()

    async def _websocket(self, headers, reader, writer):
        key = headers.get("sec-websocket-key", "")
        accept = base64.b64encode(
            hashlib.sha1((key + WS_GUID).encode("latin-1")).digest()
        ).decode("latin-1")
        writer.write(
            (
                "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\n"
                f"Connection: Upgrade\r\nSec-WebSocket-Accept: {accept}\r\n\r\n"
            ).encode("latin-1")
        )
        await writer.drain()

        async def send(record):
            await _ws_send_text(writer, json.dumps(record))

        client = ClientSession(self, send)
        try:
            buffer = []
            while True:
                frame = await _ws_read_frame(reader)
                if frame is None:
                    break
                opcode, payload, fin = frame
                if opcode == 8:  # close
                    writer.write(_ws_frame(8, b""))
                    await writer.drain()
                    break
                if opcode == 9:  # ping
                    writer.write(_ws_frame(10, payload))
                    await writer.drain()
                    continue
                if opcode in (1, 0):
                    buffer.append(payload)
                    if fin:
                        text = b"".join(buffer).decode("utf-8", "replace")
                        buffer = []
                        for line in text.splitlines() or [text]:
                            await self._dispatch(client, line)
        finally:
            await client.stop()


def _ws_frame(opcode, payload):
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < 65536:
        head += bytes([126]) + n.to_bytes(2, "big")
    else:
        head += bytes([127]) + n.to_bytes(8, "big")
    return head + payload


async def _ws_send_text(writer, text):
    writer.write(_ws_frame(1, text.encode("utf-8")))
    await writer.drain()


async def _ws_read_frame(reader):
    try:
        head = await reader.readexactly(2)
    except asyncio.IncompleteReadError:
        return None
    fin = bool(head[0] & 0x80)
    opcode = head[0] & 0x0F
    masked = bool(head[1] & 0x80)
    length = head[1] & 0x7F
    if length == 126:
        length = int.from_bytes(await reader.readexactly(2), "big")
    elif length == 127:
        length = int.from_bytes(await reader.readexactly(8), "big")
    mask = await reader.readexactly(4) if masked else b"\x00" * 4
    payload = bytearray(await reader.readexactly(length))
    if masked:
        for i in range(length):
            payload[i] ^= mask[i % 4]
    return opcode, bytes(payload), fin
