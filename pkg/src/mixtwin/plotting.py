"""Velocity and gap profile figures from a telemetry record."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .telemetry import TelemetryRecord


def plot_profiles(record: TelemetryRecord, out_dir: str | Path) -> list[Path]:
    """Write speed-profile and gap-profile figures as SVG and PNG."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = record.vehicle_ids()
    written: list[Path] = []

    fig, ax = plt.subplots(figsize=(9, 4))
    for vid in ids:
        ts, vs = record.series(vid, "v")
        ax.plot(ts, vs, label=vid, linewidth=1.0)
    trigger = record.event_time("trigger")
    if trigger is not None:
        ax.axvline(trigger, color="gray", linestyle=":", linewidth=1.0)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("velocity [m/s]")
    ax.set_title(f"speed profiles: {record.header.get('name', 'run')}")
    ax.legend(ncol=len(ids), fontsize=8)
    ax.grid(alpha=0.3)
    for suffix in (".svg", ".png"):
        path = out / f"velocity{suffix}"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        written.append(path)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(9, 4))
    for vid in ids[1:]:
        ts, gaps = record.series(vid, "gap")
        ax.plot(ts, gaps, label=vid, linewidth=1.0)
    if trigger is not None:
        ax.axvline(trigger, color="gray", linestyle=":", linewidth=1.0)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("gap to predecessor [m]")
    ax.set_title(f"gap profiles: {record.header.get('name', 'run')}")
    ax.legend(ncol=max(1, len(ids) - 1), fontsize=8)
    ax.grid(alpha=0.3)
    for suffix in (".svg", ".png"):
        path = out / f"gaps{suffix}"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        written.append(path)
    plt.close(fig)
    return written
