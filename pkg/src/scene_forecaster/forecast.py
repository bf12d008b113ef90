"""Combinatorial scene forecasting from a filtered belief.

Particles sharing the same joint hypothesis (every agent's route and
maneuver) are grouped; each group becomes one weighted scene hypothesis
whose representative state is the group's mean.  A hypothesis is rolled
forward by simulating all agents synchronously with the hypothesis'
decisions frozen: routes stay fixed (extended along the lexicographically
first successor when the horizon outruns them), passing orders stay fixed,
and conflicts that only appear during the rollout default to the
right-of-way rules.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional

import numpy as np

from scene_forecaster.behavior import (
    AccelRange,
    ConflictConstraint,
    LaneRef,
    conflict_accel_bounds,
    idm_max_accel,
    mean_action,
    sample_action,
)
from scene_forecaster.geometry import wrap_angle
from scene_forecaster.inference import Belief, _AgentContext
from scene_forecaster.intent import OTHER_FIRST, SELF_FIRST
from scene_forecaster.kinematics import step_arrays


@dataclass(frozen=True)
class SceneHypothesis:
    """One joint (routes, maneuvers) assignment with its posterior mass."""

    probability: float
    routes: dict[str, tuple[str, ...]]
    maneuvers: dict[str, tuple[tuple[str, str], ...]]
    states: dict[str, np.ndarray]


@dataclass(frozen=True)
class ScenePrediction:
    hypothesis: SceneHypothesis
    trajectories: dict[str, np.ndarray]  # (steps, 4) rows of [x, y, theta, v]


@dataclass(frozen=True)
class PredictionSet:
    """Weighted forecasts, one trajectory bundle per kept hypothesis."""

    t0: float
    dt: float
    agent_ids: tuple[str, ...]
    predictions: tuple[ScenePrediction, ...]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p.hypothesis.probability for p in self.predictions])

    def for_agent(self, agent_id: str) -> list[tuple[float, np.ndarray]]:
        """(probability, trajectory) pairs for one agent."""
        return [
            (p.hypothesis.probability, p.trajectories[agent_id]) for p in self.predictions
        ]


def group_hypotheses(belief: Belief) -> list[SceneHypothesis]:
    """Collapse the particle set to unique joint hypotheses, sorted by
    probability; representative states are weighted means per group."""
    w = belief.weights
    a_total = len(belief.agent_ids)
    codes = np.concatenate([belief.route_idx, belief.man_idx], axis=1)
    groups, inverse = np.unique(codes, axis=0, return_inverse=True)
    probs = np.bincount(inverse, weights=w, minlength=len(groups))
    out: list[SceneHypothesis] = []
    for g in np.argsort(-probs, kind="stable"):
        p = float(probs[g])
        if p <= 0.0:
            continue
        mask = inverse == g
        wg = w[mask]
        wg = wg / np.sum(wg)
        routes = {}
        maneuvers = {}
        states = {}
        for j, aid in enumerate(belief.agent_ids):
            routes[aid] = belief.route_key(int(groups[g, j]))
            maneuvers[aid] = belief.maneuver_key(int(groups[g, a_total + j]))
            kin = belief.kin[mask, j, :]
            mean = np.empty(4)
            mean[0] = float(np.sum(wg * kin[:, 0]))
            mean[1] = float(np.sum(wg * kin[:, 1]))
            mean[2] = math.atan2(
                float(np.sum(wg * np.sin(kin[:, 2]))), float(np.sum(wg * np.cos(kin[:, 2])))
            )
            mean[3] = float(np.sum(wg * kin[:, 3]))
            states[aid] = mean
        out.append(SceneHypothesis(p, routes, maneuvers, states))
    return out


def forward_simulate(
    belief: Belief,
    hypothesis: SceneHypothesis,
    steps: int,
    mode: str = "mean",
    rng: Optional[np.random.Generator] = None,
) -> dict[str, np.ndarray]:
    """Synchronous closed-loop rollout of one hypothesis.

    mode 'mean' applies each agent's mean action (deterministic); 'sample'
    draws actions and needs an rng.
    """
    if mode not in ("mean", "sample"):
        raise ValueError("mode must be 'mean' or 'sample'")
    if mode == "sample" and rng is None:
        raise ValueError("sampled rollouts need an rng")
    cfg = belief.config
    sp, idm = cfg.sampler, cfg.idm
    graph = belief.graph
    agents = belief.agent_ids
    half = cfg.vehicle_length / 2.0
    ridx = {aid: belief._route_id(hypothesis.routes[aid]) for aid in agents}
    orders = {aid: dict(hypothesis.maneuvers[aid]) for aid in agents}
    kin = np.stack([hypothesis.states[aid] for aid in agents])
    out = np.empty((steps, len(agents), 4))

    for k in range(steps):
        ctx: dict[str, _AgentContext] = {}
        for j, aid in enumerate(agents):
            x, y, th, v = kin[j]
            slot = belief._routes[ridx[aid]]
            s, lat, seg = slot.geom.polyline.project(x, y)
            while slot.length - s < cfg.l_h:
                successors = sorted(graph.lanes[slot.lane_ids[-1]].successors)
                if not successors:
                    break
                ridx[aid] = belief._route_id(slot.lane_ids + (successors[0],))
                slot = belief._routes[ridx[aid]]
            psi = wrap_angle(th - slot.geom.polyline.seg_heading[seg])
            ctx[aid] = _AgentContext(
                ridx[aid], s, slot.geom.lane_at(s), lat, psi, slot.kappa_at(s), v, None
            )
        accel = np.empty(len(agents))
        yaw = np.empty(len(agents))
        for j, aid in enumerate(agents):
            c = ctx[aid]
            solo = belief._bounds_solo(c, sp)
            hi, lo = solo.a_max, solo.a_min
            if belief.interaction:
                constraints = []
                for oid in agents:
                    if oid == aid:
                        continue
                    rec = belief._pair(c.route, ctx[oid].route)
                    if rec is None:
                        continue
                    ea, xa, eb, xb, prio = rec
                    s_o = ctx[oid].s
                    if c.s - half > xa or s_o - half > xb:
                        continue
                    order = orders[aid].get(oid)
                    if order is None:
                        order = SELF_FIRST if prio else OTHER_FIRST
                        orders[aid][oid] = order
                    constraints.append(
                        ConflictConstraint(
                            order, prio, ctx[oid].v, eb - s_o, xb - s_o, ea - c.s, xa - c.s
                        )
                    )
                if constraints:
                    slot = belief._routes[c.route]
                    jy = bisect_right(slot.yields, c.s)
                    d_yield = slot.yields[jy] - c.s if jy < len(slot.yields) else None
                    conf = conflict_accel_bounds(c.v, d_yield, constraints, sp, cfg.dt, idm.b_d)
                    hi = min(hi, conf.a_max)
                    lo = max(lo, conf.a_min)
                geom = belief._routes[c.route].geom
                gap, v_p = math.inf, 0.0
                for oid in agents:
                    if oid == aid:
                        continue
                    off = geom.lane_offsets.get(ctx[oid].lane)
                    if off is None:
                        continue
                    slot_o = belief._routes[ctx[oid].route]
                    s_on = off + ctx[oid].s - slot_o.geom.lane_offsets[ctx[oid].lane]
                    d = s_on - c.s
                    if 0.0 < d < gap:
                        gap, v_p = d, ctx[oid].v
                if math.isfinite(gap):
                    d_p = max(gap - cfg.vehicle_length, 0.01)
                    i_v = max(bisect_right(geom.vlim_s, c.s) - 1, 0)
                    hi = min(hi, idm_max_accel(c.v, geom.vlim_v[i_v], d_p, v_p, idm))
            if lo > hi:
                lo = hi = max(hi, sp.a_vd_min)
            bounds = AccelRange(lo, hi, "rollout")
            ref = LaneRef(c.lat, c.psi, c.kappa)
            if mode == "mean":
                act = mean_action(bounds, ref, c.v, sp)
            else:
                act = sample_action(bounds, ref, c.v, sp, rng)
            accel[j] = act.a
            yaw[j] = act.thetadot
        kin = step_arrays(kin, accel, yaw, cfg.dt)
        out[k] = kin
    return {aid: out[:, j, :].copy() for j, aid in enumerate(agents)}


def predict_scene(
    belief: Belief,
    steps: Optional[int] = None,
    mode: str = "mean",
    rng: Optional[np.random.Generator] = None,
) -> PredictionSet:
    """Forecast every retained hypothesis over the configured horizon.

    Hypotheses below the probability floor are pruned and the rest
    renormalized; at least the strongest hypothesis always survives.
    """
    cfg = belief.config
    if steps is None:
        steps = max(int(round(cfg.horizon / cfg.dt)), 1)
    hyps = group_hypotheses(belief)
    kept = [h for h in hyps if h.probability >= cfg.p_floor]
    if not kept:
        kept = hyps[:1]
    total = sum(h.probability for h in kept)
    predictions = []
    for h in kept:
        scaled = SceneHypothesis(h.probability / total, h.routes, h.maneuvers, h.states)
        trajectories = forward_simulate(belief, scaled, steps, mode, rng)
        predictions.append(ScenePrediction(scaled, trajectories))
    return PredictionSet(belief.t, cfg.dt, belief.agent_ids, tuple(predictions))
