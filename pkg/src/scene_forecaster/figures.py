"""Report figures rendered to image files next to the metrics table.

Three views: the scene's ground truth drawn over the lane graph, the
position-error timelines per model and horizon, and the intent-divergence
timelines of the filter models.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from scene_forecaster.evaluation import FILTER_MODELS, MetricRow
from scene_forecaster.lanegraph import LaneGraph
from scene_forecaster.scenario import SceneFrame

_MODEL_COLORS = {
    "interactive": "tab:blue",
    "map_based": "tab:orange",
    "yield_assumed": "tab:red",
    "ctrv": "tab:green",
}


def _color(model: str) -> str:
    return _MODEL_COLORS.get(model, "tab:gray")


def scene_overview(graph: LaneGraph, frames: Sequence[SceneFrame], path: Path) -> None:
    """Lane corridors, centerlines, yield lines, and the logged ground
    truth tracks with start markers."""
    fig, ax = plt.subplots(figsize=(7.0, 7.0))
    for lane in graph.lanes.values():
        poly = graph.lane_corridor(lane.id)
        xs, ys = poly.exterior.xy
        ax.fill(xs, ys, facecolor="0.93", edgecolor="0.82", linewidth=0.6, zorder=0)
        pts = lane.centerline.points
        ax.plot(pts[:, 0], pts[:, 1], color="0.65", linewidth=0.8, linestyle="--", zorder=1)
        if lane.yield_line is not None:
            x, y = lane.centerline.point_at(lane.yield_line)
            ax.plot([x], [y], marker="s", color="tab:red", markersize=5, zorder=3)
    tracks: dict[str, list[tuple[float, float]]] = {}
    for frame in frames:
        for a in frame.agents:
            tracks.setdefault(a.agent_id, []).append((float(a.gt[0]), float(a.gt[1])))
    cycle = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for k, (aid, xy) in enumerate(sorted(tracks.items())):
        arr = np.asarray(xy)
        color = cycle[k % len(cycle)]
        ax.plot(arr[:, 0], arr[:, 1], color=color, linewidth=1.6, zorder=2, label=aid)
        ax.plot([arr[0, 0]], [arr[0, 1]], marker="o", color=color, zorder=3)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title("ground truth over the lane graph")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _series(rows: Sequence[MetricRow], value: str, model: str, tau: float) -> tuple[np.ndarray, np.ndarray]:
    by_t: dict[float, list[float]] = {}
    for r in rows:
        v = getattr(r, value)
        if r.model == model and r.tau == tau and v is not None:
            by_t.setdefault(r.t, []).append(v)
    ts = sorted(by_t)
    return np.asarray(ts), np.asarray([np.mean(by_t[t]) for t in ts])


def error_timelines(rows: Sequence[MetricRow], path: Path) -> None:
    """Mean position error over scene time, one panel per horizon."""
    taus = sorted({r.tau for r in rows})
    models = [m for m in _MODEL_COLORS if any(r.model == m for r in rows)]
    fig, axes = plt.subplots(1, len(taus), figsize=(4.2 * len(taus), 3.4), sharey=True, squeeze=False)
    for ax, tau in zip(axes[0], taus):
        for model in models:
            ts, eps = _series(rows, "eps", model, tau)
            if len(ts):
                ax.plot(ts, eps, color=_color(model), linewidth=1.4, label=model)
        ax.set_title(f"horizon {tau:g} s")
        ax.set_xlabel("t (s)")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("mean position error (m)")
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def intent_timelines(rows: Sequence[MetricRow], path: Path) -> None:
    """Route (solid) and passing-order (dashed) divergence from the logged
    intent, filter models only."""
    taus = sorted({r.tau for r in rows})
    if not taus:
        raise ValueError("no metric rows to plot")
    tau = taus[0]  # intent divergences repeat across horizons
    models = [m for m in FILTER_MODELS if any(r.model == m for r in rows)]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for model in models:
        ts, kld = _series(rows, "kld_route", model, tau)
        if len(ts):
            ax.plot(ts, kld, color=_color(model), linewidth=1.4, label=f"{model} route")
        ts, kld = _series(rows, "kld_maneuver", model, tau)
        if len(ts):
            ax.plot(ts, kld, color=_color(model), linewidth=1.2, linestyle="--", label=f"{model} order")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("divergence from truth (nats)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report(
    graph: LaneGraph,
    frames: Sequence[SceneFrame],
    rows: Sequence[MetricRow],
    outdir: Path,
) -> list[Path]:
    """Write all report figures into outdir and return their paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    overview = outdir / "scene_overview.png"
    errors = outdir / "position_error.png"
    intents = outdir / "intent_divergence.png"
    scene_overview(graph, frames, overview)
    error_timelines(rows, errors)
    intent_timelines(rows, intents)
    return [overview, errors, intents]
