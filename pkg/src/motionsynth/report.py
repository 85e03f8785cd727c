"""Report rendering: JSON + CSV + aligned text tables, with matplotlib
figures written next to them."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METRIC_COLUMNS = [
    ("bm", "BM (deg/frame)"),
    ("afs", "AFS (cm/frame)"),
    ("ssim", "SSIM"),
    ("mpjpe", "MPJPE (cm)"),
    ("trajectory_distance", "Traj. dist (cm/frame)"),
]


def write_metric_report(report, out_dir):
    """report.json, report.csv, report.txt, and metrics.png in out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json())

    rows = report.per_sequence
    with open(out_dir / "report.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)

    lines = [_table_header(rows)]
    for row in rows:
        lines.append(_table_row(f"seq{row['sequence']}", row))
    lines.append(_table_row("mean", report.aggregate))
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n")

    fig, axes = plt.subplots(1, len(METRIC_COLUMNS), figsize=(4 * len(METRIC_COLUMNS), 3.2))
    names = [f"seq{r['sequence']}" for r in rows]
    for ax, (key, label) in zip(np.atleast_1d(axes), METRIC_COLUMNS):
        values = [r.get(key, np.nan) for r in rows]
        ax.bar(names, values, color="#4a7aa5")
        ax.axhline(report.aggregate.get(key, np.nan), color="#c0392b", lw=1, ls="--")
        ax.set_title(label, fontsize=10)
        ax.tick_params(axis="x", rotation=45, labelsize=8)
    fig.tight_layout()
    fig.savefig(out_dir / "metrics.png", dpi=120)
    plt.close(fig)
    return out_dir / "report.json"


def _table_header(rows):
    cells = ["sequence".ljust(10)] + [label.rjust(22) for _, label in METRIC_COLUMNS]
    return "".join(cells)


def _table_row(name, row):
    cells = [name.ljust(10)]
    for key, _ in METRIC_COLUMNS:
        value = row.get(key)
        cells.append(("-" if value is None else f"{value:.4f}").rjust(22))
    return "".join(cells)


def write_trajectory_figure(target_polyline, realized_track, out_path, distance=None):
    """Target path (orange) vs realized root path (green), top-down view."""
    target = np.asarray(target_polyline)
    track = np.asarray(realized_track)
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.plot(target[:, 0], target[:, 1], color="#e67e22", lw=2, label="target")
    ax.plot(track[:, 0], track[:, 1], color="#27a844", lw=1.5, label="realized")
    ax.scatter(track[:1, 0], track[:1, 1], color="#27a844", marker="o", s=30)
    ax.set_aspect("equal")
    ax.set_xlabel("X (cm)")
    ax.set_ylabel("Z (cm)")
    title = "trajectory following"
    if distance is not None:
        title += f" ({distance:.3f} cm/frame)"
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def write_contact_figure(heights, labels, out_path, thresholds=(12.0, 3.0, 12.0, 3.0)):
    """Foot/toe height traces with predicted contact spans shaded."""
    heights = np.asarray(heights)
    labels = np.asarray(labels)
    names = ("left foot", "left toe", "right foot", "right toe")
    fig, axes = plt.subplots(4, 1, figsize=(8, 7), sharex=True)
    t = np.arange(heights.shape[0])
    for i, ax in enumerate(axes):
        ax.plot(t, heights[:, i], color="#4a7aa5", lw=1)
        ax.axhline(thresholds[i], color="#999999", lw=0.8, ls=":")
        ax.fill_between(
            t, 0, heights[:, i].max() + 1,
            where=labels[: heights.shape[0], i] > 0.5,
            color="#27a844", alpha=0.15, step="mid",
        )
        ax.set_ylabel(names[i], fontsize=8)
    axes[-1].set_xlabel("frame")
    fig.suptitle("foot heights and contact labels")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def write_loss_curves(log_path, out_path):
    records = [json.loads(line) for line in Path(log_path).read_text().splitlines()]
    if not records:
        return
    epochs = [r["epoch"] for r in records]
    keys = ["total", "gaussian", "smoothness", "contact", "fk", "consistency", "trajectory"]
    fig, ax = plt.subplots(figsize=(8, 5))
    for key in keys:
        if key in records[0]:
            ax.plot(epochs, [r[key] for r in records], label=key, lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("symlog")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
