"""Command-line entry points: ingest, train, synthesize, evaluate, serve,
and demo-data."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

DEFAULT_CONFIG_ENV = "MOTIONSYNTH_CONFIG"


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="motionsynth",
        description="Controllable real-time character motion synthesis toolkit",
    )
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("demo-data", help="write a synthetic gait corpus + manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--walk-frames", type=int, default=1200)
    p.add_argument("--run-frames", type=int, default=800)
    p.add_argument("--idle-frames", type=int, default=600)
    p.set_defaults(func=cmd_demo_data)

    p = sub.add_parser("ingest", help="manifest -> normalized dataset cache")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fps", type=int, default=60)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a model on an ingested cache")
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model-config", help="JSON file of model settings",
                   default=os.environ.get(DEFAULT_CONFIG_ENV))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--stride", type=int, help="base window stride")
    p.add_argument("--noise-std", type=float)
    p.add_argument("--clip-len", type=int, help="frames per training window")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--d-model", type=int)
    p.add_argument("--dry-run", action="store_true",
                   help="print clip counts, strides, and parameter count; no training")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synthesize", help="generate motion to BVH + figures")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--trajectory", help="trajectory spec JSON file")
    p.add_argument("--line", type=float, help="follow a straight line of this length (cm)")
    p.add_argument("--speed", type=float, default=120.0, help="cm/s for --line")
    p.add_argument("--type", default=None, help="motion type name for --line")
    p.add_argument("--mode", choices=("sample", "mean"), default="sample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--warmup", type=int, default=30)
    p.add_argument("--warmup-sequence", type=int, default=0)
    p.add_argument("--no-ik", action="store_true")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="score a checkpoint against a test manifest")
    p.add_argument("--checkpoint")
    p.add_argument("--cache", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--warmup", type=int, default=30)
    p.add_argument("--mode", choices=("sample", "mean"), default="mean")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--identity", action="store_true",
                   help="score ground truth against itself (harness self-check)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the streaming session service")
    p.add_argument("--checkpoint", required=True, action="append",
                   help="checkpoint file; repeat for several")
    p.add_argument("--cache", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui", help="static browser client directory")
    p.set_defaults(func=cmd_serve)

    return parser


def cmd_demo_data(args):
    from .synthetic import write_corpus

    plan = []
    if args.walk_frames:
        plan.append(("walk", args.walk_frames))
    if args.run_frames:
        plan.append(("run", args.run_frames))
    if args.idle_frames:
        plan.append(("idle", args.idle_frames))
    path = write_corpus(args.out, plan)
    print(f"wrote {path}")


def cmd_ingest(args):
    from .dataset import Manifest, ingest

    manifest = Manifest.load(args.manifest)
    dataset = ingest(manifest, args.out, target_fps=args.fps)
    frames = sum(len(s) for s in dataset.sequences)
    print(f"cached {len(dataset.sequences)} sequences, {frames} frames, "
          f"{dataset.num_types} types -> {args.out}")


def _model_config(args, num_types):
    from .model import ModelConfig

    settings = {}
    if args.model_config:
        settings.update(json.loads(Path(args.model_config).read_text()))
    if getattr(args, "d_model", None):
        settings["d_model"] = args.d_model
    settings.setdefault("num_types", num_types)
    return ModelConfig(**settings)


def cmd_train(args):
    from .dataset import MotionDataset
    from .features import PartitionScheme
    from .model import MotionModel
    from .report import write_loss_curves
    from .skeleton import canonical_skeleton
    from .training import TrainConfig, dry_run_report, train

    dataset = MotionDataset.open(args.cache)
    skel = canonical_skeleton()
    scheme = PartitionScheme(skel)
    model_cfg = _model_config(args, dataset.num_types)
    model = MotionModel(model_cfg, scheme, rng=np.random.default_rng(args.seed))

    overrides = {}
    for key, name in (
        ("epochs", "epochs"), ("batch_size", "batch_size"), ("lr", "initial_lr"),
        ("stride", "base_stride"), ("noise_std", "noise_std"),
        ("clip_len", "clip_len"), ("checkpoint_every", "checkpoint_every"),
    ):
        value = getattr(args, key, None)
        if value is not None:
            overrides[name] = value
    train_cfg = TrainConfig(seed=args.seed, **overrides)

    if args.dry_run:
        print(json.dumps(dry_run_report(dataset, model, train_cfg), indent=2))
        return 0

    def progress(record):
        print(f"epoch {record['epoch']:5d}  total {record['total']:.4f}  "
              f"lr {record['lr']:.2e}  ({record['seconds']}s)")

    final = train(dataset, model, scheme, train_cfg, args.out, progress)
    write_loss_curves(Path(args.out) / "train_log.jsonl", Path(args.out) / "loss_curves.png")
    print(f"final checkpoint: {final}")


def cmd_synthesize(args):
    from .bvh import write_bvh
    from .dataset import MotionDataset
    from .features import PartitionScheme, tpose_positions
    from .metrics import foot_tracks
    from .model import MotionModel
    from .report import write_contact_figure, write_trajectory_figure
    from .skeleton import canonical_skeleton
    from .synthesis import SessionConfig, SynthesisSession, run_session
    from .trajectory import (
        TrajectorySpec,
        spec_polyline,
        straight_spec,
        trajectory_controls,
        trajectory_distance,
    )

    dataset = MotionDataset.open(args.cache)
    skel = canonical_skeleton()
    scheme = PartitionScheme(skel)
    model = MotionModel.load(args.checkpoint, scheme)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    session = SynthesisSession(
        model, dataset.stats, scheme, skel,
        SessionConfig(mode=args.mode, use_ik=not args.no_ik, seed=args.seed,
                      warmup=args.warmup),
    )
    seq = dataset.sequences[args.warmup_sequence]
    w = min(args.warmup, len(seq) - 1)
    session.seed(seq.features[:w], seq.labels[:w], seq.controls[:w])

    spec = None
    if args.trajectory:
        spec = TrajectorySpec.from_json(Path(args.trajectory).read_text())
    elif args.line:
        type_id = dataset.types.index(args.type) if args.type else int(seq.type_ids[0])
        yaw = session.pose.yaw
        direction = np.array([np.sin(yaw), np.cos(yaw)])
        spec = straight_spec(session.pose.root_position[[0, 2]], direction,
                             args.line, type_id, args.speed)

    tpose = tpose_positions(skel).reshape(-1)
    control_fn = None
    if spec is not None:
        def control_fn(s):
            return trajectory_controls(
                spec, s.frame_index, s.pose.yaw, s.pose.root_position[[0, 2]],
                tpose, dataset.num_types,
            )

    result = run_session(session, args.frames, control_fn, keep_steps=True)
    (out_dir / "motion.bvh").write_text(write_bvh(result.clip))
    with open(out_dir / "session_log.jsonl", "w") as fh:
        for i, step in enumerate(result.steps):
            fh.write(json.dumps({
                "frame": i,
                "elapsed_ms": round(step.elapsed * 1000, 3),
                "contacts": step.contact_labels.tolist(),
            }) + "\n")
    heights, _ = foot_tracks(result.clip)
    write_contact_figure(heights, result.labels, out_dir / "contacts.png")
    if spec is not None:
        poly = spec_polyline(spec)
        dist = trajectory_distance(result.root_track, poly)
        write_trajectory_figure(poly, result.root_track, out_dir / "trajectory.png", dist)
        print(f"trajectory distance: {dist:.3f} cm/frame")
    print(f"wrote {out_dir / 'motion.bvh'} ({args.frames} frames, "
          f"{result.fps_measured:.1f} fps measured)")


def cmd_evaluate(args):
    from .dataset import Manifest, MotionDataset, load_clips
    from .features import PartitionScheme
    from .metrics import evaluate
    from .model import MotionModel
    from .report import write_metric_report
    from .skeleton import canonical_skeleton

    dataset = MotionDataset.open(args.cache)
    manifest = Manifest.load(args.manifest)
    clips, type_ids = load_clips(manifest)
    skel = canonical_skeleton()
    scheme = PartitionScheme(skel)
    model = None
    if not args.identity:
        if not args.checkpoint:
            raise ValueError("--checkpoint is required unless --identity is set")
        model = MotionModel.load(args.checkpoint, scheme)
    report = evaluate(
        model, dataset.stats, scheme, skel, clips, type_ids, dataset.num_types,
        warmup=args.warmup, mode=args.mode, seed=args.seed, identity=args.identity,
        metadata={
            "checkpoint": args.checkpoint or "ground-truth-identity",
            "manifest": str(args.manifest),
        },
    )
    path = write_metric_report(report, args.out)
    print((Path(args.out) / "report.txt").read_text())
    print(f"wrote {path}")


def cmd_serve(args):
    from .service import MotionService, load_bundle

    bundles = {}
    for ckpt in args.checkpoint:
        bundles[Path(ckpt).stem] = load_bundle(ckpt, args.cache)
    service = MotionService(bundles, ui_dir=args.ui)

    async def run():
        server = await service.serve(args.host, args.port)
        names = ", ".join(bundles)
        print(f"serving checkpoints [{names}] on {args.host}:{args.port}")
        async with server:
            await server.serve_forever()

    try:
        asyncio.run(run())
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    sys.exit(main())
