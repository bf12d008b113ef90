"""Forecast evaluation against logged ground truth.

Runs a model over a scene log frame by frame and scores its forecasts at
several horizons: weighted position error, weighted likelihood of the
true position, and the divergence of the route and passing-order
posteriors from the logged intent.  Rows are written as delimited text
with one line per (time, horizon, model, agent).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from scene_forecaster.config import RunConfig
from scene_forecaster.forecast import predict_scene
from scene_forecaster.inference import Belief
from scene_forecaster.intent import routes_consistent
from scene_forecaster.kinematics import KinematicState, YawRateTracker, ctrv_predict
from scene_forecaster.lanegraph import LaneGraph
from scene_forecaster.scenario import SceneFrame

P_CLAMP = 1e-6
FILTER_MODELS = ("interactive", "map_based", "yield_assumed")
MODELS = ("interactive", "map_based", "ctrv")
CSV_COLUMNS = ("t", "tau", "model", "agent", "eps", "lik", "kld_route", "kld_maneuver")


@dataclass(frozen=True)
class MetricRow:
    t: float
    tau: float
    model: str
    agent: str
    eps: float
    lik: float
    kld_route: Optional[float]
    kld_maneuver: Optional[float]


# ----------------------------------------------------------------------
# metric formulas
# ----------------------------------------------------------------------


def eps_metric(pairs: Sequence[tuple[float, np.ndarray]], truth_xy: np.ndarray) -> float:
    """Probability-weighted root mean squared position error over the
    hypothesis set at one horizon."""
    total = 0.0
    for p, xy in pairs:
        err = np.asarray(xy, dtype=float) - truth_xy
        total += p * float(err @ err)
    return math.sqrt(total)


def likelihood_metric(
    pairs: Sequence[tuple[float, np.ndarray]], truth_xy: np.ndarray, sigma: float
) -> float:
    """Product over hypotheses of probability times the isotropic normal
    density of the true position around the predicted one."""
    norm = 1.0 / (2.0 * math.pi * sigma * sigma)
    out = 1.0
    for p, xy in pairs:
        err = np.asarray(xy, dtype=float) - truth_xy
        out *= p * norm * math.exp(-0.5 * float(err @ err) / (sigma * sigma))
    return out


def kld_metric(p_true: float) -> float:
    """Divergence of a posterior from the degenerate truth distribution;
    the truth probability is clamped away from zero."""
    return -math.log(max(p_true, P_CLAMP))


def route_truth_prob(marginal: dict[tuple[str, ...], float], gt_route: Sequence[str]) -> float:
    """Posterior mass on route candidates that agree with the true lane
    path over the stretch both cover."""
    gt = tuple(gt_route)
    mass = 0.0
    for cand, p in marginal.items():
        if not cand or cand[0] not in gt:
            continue
        suffix = gt[gt.index(cand[0]):]
        if routes_consistent(cand, suffix):
            mass += p
    return mass


def maneuver_truth_prob(
    marginal: dict[tuple[tuple[str, str], ...], float], gt_orders: dict[str, str]
) -> float:
    """Posterior mass on passing-order assignments that agree with the
    true orders on every pair both sides know about."""
    mass = 0.0
    for rels, p in marginal.items():
        if all(gt_orders.get(oid, order) == order for oid, order in rels):
            mass += p
    return mass


# ----------------------------------------------------------------------
# model runners
# ----------------------------------------------------------------------


def _frame_lookup(frames: Sequence[SceneFrame], dt: float) -> dict[int, SceneFrame]:
    return {int(round(f.t / dt)): f for f in frames}


def _truth_xy(frame: Optional[SceneFrame], agent_id: str) -> Optional[np.ndarray]:
    if frame is None:
        return None
    for a in frame.agents:
        if a.agent_id == agent_id:
            return a.gt[:2]
    return None


def _run_filter(
    frames: Sequence[SceneFrame],
    graph: LaneGraph,
    config: RunConfig,
    model: str,
    taus: Sequence[float],
) -> list[MetricRow]:
    dt = config.dt
    lookup = _frame_lookup(frames, dt)
    steps = max(int(round(max(taus) / dt)), 1)
    tau_steps = [(tau, int(round(tau / dt))) for tau in taus]
    belief = Belief(
        graph,
        config,
        [a.agent_id for a in frames[0].agents],
        interaction=(model != "map_based"),
        maneuvers=(model != "yield_assumed"),
    )
    belief.init_particles(frames[0].measurements())
    rows: list[MetricRow] = []
    for frame in frames:
        k = int(round(frame.t / dt))
        if frame is not frames[0]:
            belief.predict()
            belief.update(frame.measurements())
            belief.resample()
            belief.rejuvenate(frame.measurements())
        prediction = predict_scene(belief, steps=steps, mode="mean")
        posterior = belief.intention_posterior()
        gt_here = {a.agent_id: a for a in frame.agents}
        for aid in belief.agent_ids:
            here = gt_here.get(aid)
            if here is None:
                continue
            kld_r = kld_metric(
                route_truth_prob(posterior.route_marginal[aid], here.route)
            )
            kld_m: Optional[float] = None
            if model != "map_based":
                kld_m = kld_metric(
                    maneuver_truth_prob(posterior.maneuver_marginal[aid], here.order)
                )
            hyps = prediction.for_agent(aid)
            for tau, n_tau in tau_steps:
                truth = _truth_xy(lookup.get(k + n_tau), aid)
                if truth is None:
                    continue
                pairs = [(p, traj[n_tau - 1, :2]) for p, traj in hyps]
                rows.append(
                    MetricRow(
                        frame.t, tau, model, aid,
                        eps_metric(pairs, truth),
                        likelihood_metric(pairs, truth, config.sigma_eval),
                        kld_r, kld_m,
                    )
                )
    return rows


def _run_ctrv(
    frames: Sequence[SceneFrame], config: RunConfig, taus: Sequence[float]
) -> list[MetricRow]:
    dt = config.dt
    lookup = _frame_lookup(frames, dt)
    steps = max(int(round(max(taus) / dt)), 1)
    tau_steps = [(tau, int(round(tau / dt))) for tau in taus]
    tracker = YawRateTracker()
    rows: list[MetricRow] = []
    for frame in frames:
        k = int(round(frame.t / dt))
        for a in frame.agents:
            rate = tracker.update(a.agent_id, float(a.z[2]), dt)
            state = KinematicState(float(a.z[0]), float(a.z[1]), float(a.z[2]), float(a.z[3]))
            rollout = ctrv_predict(state, rate, dt, steps)
            for tau, n_tau in tau_steps:
                truth = _truth_xy(lookup.get(k + n_tau), a.agent_id)
                if truth is None:
                    continue
                xy = np.array([rollout[n_tau - 1].x, rollout[n_tau - 1].y])
                rows.append(
                    MetricRow(
                        frame.t, tau, "ctrv", a.agent_id,
                        eps_metric([(1.0, xy)], truth),
                        likelihood_metric([(1.0, xy)], truth, config.sigma_eval),
                        None, None,
                    )
                )
    return rows


def evaluate_scene(
    frames: Sequence[SceneFrame],
    graph: LaneGraph,
    config: RunConfig,
    models: Sequence[str] = MODELS,
    taus: Sequence[float] = (1.0, 3.0, 5.0),
) -> list[MetricRow]:
    """Score each requested model over one scene log."""
    if not frames:
        raise ValueError("empty scene log")
    rows: list[MetricRow] = []
    for model in models:
        if model in FILTER_MODELS:
            rows.extend(_run_filter(frames, graph, config, model, taus))
        elif model == "ctrv":
            rows.extend(_run_ctrv(frames, config, taus))
        else:
            raise ValueError(f"unknown model {model!r}")
    return rows


def mean_eps(rows: Sequence[MetricRow], model: str, tau: Optional[float] = None) -> float:
    vals = [r.eps for r in rows if r.model == model and (tau is None or r.tau == tau)]
    if not vals:
        raise ValueError(f"no rows for model {model!r} at tau {tau!r}")
    return float(np.mean(vals))


def write_csv(rows: Sequence[MetricRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    f"{r.t:.3f}", f"{r.tau:.3f}", r.model, r.agent,
                    f"{r.eps:.6f}", f"{r.lik:.6e}",
                    "" if r.kld_route is None else f"{r.kld_route:.6f}",
                    "" if r.kld_maneuver is None else f"{r.kld_maneuver:.6f}",
                ]
            )


def read_csv(path: str | Path) -> list[MetricRow]:
    rows: list[MetricRow] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(CSV_COLUMNS):
            raise ValueError(f"{path}: unexpected metric columns {reader.fieldnames}")
        for rec in reader:
            rows.append(
                MetricRow(
                    float(rec["t"]), float(rec["tau"]), rec["model"], rec["agent"],
                    float(rec["eps"]), float(rec["lik"]),
                    float(rec["kld_route"]) if rec["kld_route"] else None,
                    float(rec["kld_maneuver"]) if rec["kld_maneuver"] else None,
                )
            )
    return rows
