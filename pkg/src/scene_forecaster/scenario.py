"""Synthetic scene generation: maps, ground-truth rollouts, scene logs.

Each archetype builder returns a small lane-graph map, a scenario spec
(agents with start states, true routes, and true passing orders), and a
run configuration tuned for that map's noise scales.  The simulator rolls
the agents forward in closed loop with mean actions plus process noise
and emits measurements with sensor noise, giving JSONL scene logs with
ground truth attached.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from scene_forecaster.behavior import (
    AccelRange,
    ConflictConstraint,
    LaneRef,
    conflict_accel_bounds,
    curvature_max_accel_arrays,
    idm_max_accel,
    mean_action,
    speed_cap_accel,
)
from scene_forecaster.config import ActionSamplerParams, IdmParams, NoiseConfig, RunConfig
from scene_forecaster.geometry import Polyline, wrap_angle
from scene_forecaster.intent import _span_lanes
from scene_forecaster.kinematics import Measurement
from scene_forecaster.lanegraph import Lane, LaneGraph

INF = math.inf
DEPART_MARGIN = 1.5     # drop an agent this close to its path's end (m)
SENSOR_SIGMA = (1.0, 1.0, 0.03, 1.0)
PROCESS_SIGMA = (0.05, 0.05, 0.005, 0.05)


@dataclass(frozen=True)
class AgentSpec:
    """One simulated agent: start pose, true route, true passing orders."""

    agent_id: str
    lane: str
    start_s: float
    v0: float
    route: tuple[str, ...]
    orders: dict[str, str] = field(default_factory=dict)
    v_lim_override: Optional[float] = None  # personal speed cap (slow driver)
    stop_s: Optional[float] = None          # halt before this route arclength


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    duration: float
    agents: tuple[AgentSpec, ...]
    sensor_sigma: tuple[float, float, float, float] = SENSOR_SIGMA
    process_sigma: tuple[float, float, float, float] = PROCESS_SIGMA


@dataclass(frozen=True)
class AgentFrame:
    agent_id: str
    z: np.ndarray                  # measured [x, y, theta, v]
    gt: np.ndarray                 # true [x, y, theta, v]
    route: tuple[str, ...]         # true lane path
    order: dict[str, str]          # true passing orders, by other agent id


@dataclass(frozen=True)
class SceneFrame:
    t: float
    agents: tuple[AgentFrame, ...]

    def measurements(self) -> dict[str, Measurement]:
        return {
            a.agent_id: Measurement(a.agent_id, self.t, *map(float, a.z)) for a in self.agents
        }


# ----------------------------------------------------------------------
# ground-truth simulation
# ----------------------------------------------------------------------


class _GtAgent:
    """Closed-loop state of one simulated agent along its fixed route."""

    def __init__(self, graph: LaneGraph, spec: AgentSpec, a_lat_max: float):
        if spec.route[0] != spec.lane:
            raise ValueError(f"agent {spec.agent_id!r}: route must start at its lane")
        self.spec = spec
        self.geom = graph.route_geometry(spec.route)
        finite = np.isfinite(self.geom.curv_rho)
        self.curv_s = self.geom.curv_s[finite]
        self.v_rho = np.sqrt(self.geom.curv_rho[finite] * a_lat_max)
        self.kappa_s = self.geom.curv_s
        self.kappa = self.geom.curv_kappa
        if not (0.0 <= spec.start_s <= self.geom.length):
            raise ValueError(f"agent {spec.agent_id!r}: start arclength outside route")
        pos = self.geom.polyline.point_at(spec.start_s)
        self.kin = np.array(
            [pos[0], pos[1], self.geom.polyline.heading_at(spec.start_s), spec.v0]
        )
        self.s = spec.start_s
        self.lat = 0.0
        self.psi = 0.0

    def observe(self) -> None:
        s, lat, seg = self.geom.polyline.project(self.kin[0], self.kin[1])
        self.s = s
        self.lat = lat
        self.psi = wrap_angle(self.kin[2] - self.geom.polyline.seg_heading[seg])

    def kappa_at(self) -> float:
        if len(self.kappa_s) == 0:
            return 0.0
        i = min(int(np.searchsorted(self.kappa_s, self.s)), len(self.kappa_s) - 1)
        return float(self.kappa[i])

    def departed(self) -> bool:
        return self.s >= self.geom.length - DEPART_MARGIN


def _gt_bounds(
    me: _GtAgent,
    others: dict[str, _GtAgent],
    pair_recs: dict[tuple[str, str], Optional[tuple]],
    cfg: RunConfig,
) -> AccelRange:
    sp, idm = cfg.sampler, cfg.idm
    geom = me.geom
    i = max(bisect_right(geom.vlim_s, me.s) - 1, 0)
    v_lim = geom.vlim_v[i]
    if me.spec.v_lim_override is not None:
        v_lim = min(v_lim, me.spec.v_lim_override)
    v = float(me.kin[3])
    hi = min(sp.a_vd_max, idm_max_accel(v, v_lim, INF, 0.0, idm))
    for k in range(i + 1, len(geom.vlim_s)):
        if geom.vlim_v[k] < v_lim:
            d = max(geom.vlim_s[k] - me.s, 0.0)
            hi = min(hi, speed_cap_accel(v, d, geom.vlim_v[k], cfg.dt, sp, idm.b_d))
            break
    i0 = int(np.searchsorted(me.curv_s, me.s))
    if i0 < len(me.curv_s):
        hi = min(
            hi,
            curvature_max_accel_arrays(
                v, me.curv_s[i0:] - me.s, me.v_rho[i0:], cfg.dt, sp, idm.b_d
            ),
        )
    if me.spec.stop_s is not None and me.s < me.spec.stop_s:
        hi = min(hi, idm_max_accel(v, v_lim, me.spec.stop_s - me.s, 0.0, idm))
    # car following along the shared part of the path
    gap, v_p = INF, 0.0
    for other in others.values():
        lane_o = other.geom.lane_at(other.s)
        off = geom.lane_offsets.get(lane_o)
        if off is None:
            continue
        s_on = off + other.s - other.geom.lane_offsets[lane_o]
        d = s_on - me.s
        if 0.0 < d < gap:
            gap, v_p = d, float(other.kin[3])
    if math.isfinite(gap):
        hi = min(hi, idm_max_accel(v, v_lim, max(gap - cfg.vehicle_length, 0.01), v_p, idm))
    # conflicts under the declared passing orders
    half = cfg.vehicle_length / 2.0
    constraints = []
    for oid, other in others.items():
        rec = pair_recs.get((me.spec.agent_id, oid))
        if rec is None:
            continue
        ea, xa, eb, xb, prio, default = rec
        if me.s - half > xa or other.s - half > xb:
            continue
        order = me.spec.orders.get(oid, default)
        constraints.append(
            ConflictConstraint(
                order, prio, float(other.kin[3]), eb - other.s, xb - other.s, ea - me.s, xa - me.s
            )
        )
    lo = sp.a_vd_min
    if constraints:
        jy = bisect_right(geom.yield_lines, me.s)
        d_yield = geom.yield_lines[jy] - me.s if jy < len(geom.yield_lines) else None
        conf = conflict_accel_bounds(v, d_yield, constraints, sp, cfg.dt, idm.b_d)
        hi = min(hi, conf.a_max)
        lo = max(lo, conf.a_min)
    if lo > hi:
        lo = hi = max(hi, sp.a_vd_min)
    return AccelRange(lo, hi, "gt")


def simulate(
    graph: LaneGraph, spec: ScenarioSpec, config: RunConfig, seed: int = 0
) -> list[SceneFrame]:
    """Roll the scenario forward and return the frame list (measurements
    plus ground truth) at the configured step."""
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(9,)))
    )
    agents = {a.agent_id: _GtAgent(graph, a, config.sampler.a_lat_max) for a in spec.agents}
    # conflict records between true routes, with right-of-way defaults
    pair_recs: dict[tuple[str, str], Optional[tuple]] = {}
    for aid, me in agents.items():
        for oid, other in agents.items():
            if oid == aid:
                continue
            area = graph.conflict_for(me.spec.route, other.spec.route)
            if area is None:
                pair_recs[(aid, oid)] = None
                continue
            chi = graph.priority_between(
                _span_lanes(me.geom, area.entry_a, area.exit_a),
                _span_lanes(other.geom, area.entry_b, area.exit_b),
            )
            default = "self_first" if chi == "priority" else "other_first"
            pair_recs[(aid, oid)] = (
                area.entry_a, area.exit_a, area.entry_b, area.exit_b,
                chi == "priority", default,
            )
    sensor = np.asarray(spec.sensor_sigma)
    process = np.asarray(spec.process_sigma)
    steps = int(round(spec.duration / config.dt))
    frames: list[SceneFrame] = []
    active = [a.agent_id for a in spec.agents]
    for k in range(steps + 1):
        t = k * config.dt
        for aid in active:
            agents[aid].observe()
        active = [aid for aid in active if not agents[aid].departed()]
        if not active:
            break
        rows = []
        for aid in active:
            ag = agents[aid]
            z = ag.kin + sensor * rng.standard_normal(4)
            z[2] = wrap_angle(z[2])
            rows.append(
                AgentFrame(aid, z, ag.kin.copy(), ag.spec.route, dict(ag.spec.orders))
            )
        frames.append(SceneFrame(t, tuple(rows)))
        # synchronous step with mean actions
        acts = {}
        for aid in active:
            ag = agents[aid]
            others = {o: agents[o] for o in active if o != aid}
            bounds = _gt_bounds(ag, others, pair_recs, config)
            acts[aid] = mean_action(
                bounds, LaneRef(ag.lat, ag.psi, ag.kappa_at()), float(ag.kin[3]), config.sampler
            )
        for aid in active:
            ag = agents[aid]
            act = acts[aid]
            a = max(act.a, -ag.kin[3] / config.dt)
            theta = ag.kin[2] + act.thetadot * config.dt
            disp = ag.kin[3] * config.dt + 0.5 * a * config.dt**2
            eps = process * rng.standard_normal(4)
            ag.kin = np.array(
                [
                    ag.kin[0] + disp * math.cos(theta) + eps[0],
                    ag.kin[1] + disp * math.sin(theta) + eps[1],
                    wrap_angle(theta + eps[2]),
                    max(ag.kin[3] + a * config.dt + eps[3], 0.0),
                ]
            )
    return frames


# ----------------------------------------------------------------------
# scene-log serialization (JSON lines, one frame per line)
# ----------------------------------------------------------------------


def save_scene(frames: list[SceneFrame], path: str | Path) -> None:
    with open(path, "w") as fh:
        for frame in frames:
            doc = {
                "t": frame.t,
                "agents": [
                    {
                        "id": a.agent_id,
                        "z": [float(x) for x in a.z],
                        "gt": {
                            "x": [float(x) for x in a.gt],
                            "route": list(a.route),
                            "order": dict(a.order),
                        },
                    }
                    for a in frame.agents
                ],
            }
            fh.write(json.dumps(doc) + "\n")


def load_scene(path: str | Path) -> list[SceneFrame]:
    frames = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                rows = tuple(
                    AgentFrame(
                        str(a["id"]),
                        np.asarray(a["z"], dtype=float),
                        np.asarray(a["gt"]["x"], dtype=float),
                        tuple(str(l) for l in a["gt"]["route"]),
                        {str(k): str(v) for k, v in a["gt"].get("order", {}).items()},
                    )
                    for a in doc["agents"]
                )
                frames.append(SceneFrame(float(doc["t"]), rows))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: bad scene frame at line {lineno}: {exc}") from exc
    if not frames:
        raise ValueError(f"{path}: scene log is empty")
    return frames


# ----------------------------------------------------------------------
# archetype maps and scenarios
# ----------------------------------------------------------------------


def _arc(cx: float, cy: float, r: float, deg0: float, deg1: float, step: float = 4.0):
    n = max(int(abs(deg1 - deg0) / step), 2)
    phis = np.radians(np.linspace(deg0, deg1, n + 1))
    return np.column_stack([cx + r * np.cos(phis), cy + r * np.sin(phis)])


def _lane(lane_id, pts, v_lim, succ=(), yield_line=None, width=3.5, limits=None):
    return Lane(
        id=lane_id,
        centerline=Polyline(np.asarray(pts, dtype=float)),
        width=width,
        speed_limits=tuple(limits) if limits is not None else ((0.0, v_lim),),
        yield_line=yield_line,
        successors=tuple(succ),
    )


def eval_config(seed: int = 0, **overrides) -> RunConfig:
    """Run configuration tuned to the synthetic archetypes' noise scales."""
    base = RunConfig(
        l_h=80.0,
        idm=IdmParams(a_d=2.0),
        sampler=ActionSamplerParams(sigma_a=1.0),
        noise=NoiseConfig(
            sigma_x=0.15, sigma_y=0.15, sigma_theta=0.03, sigma_v=0.3,
            sigma_zx=2.0, sigma_zy=2.0, sigma_ztheta=0.3, sigma_zv=2.0,
        ),
        seed=seed,
    )
    return base.replace(**overrides) if overrides else base


def _t_junction_map() -> LaneGraph:
    """Two-way east-west road with a northbound stem ending in a yield:
    the stem forks into a left turn, a straight crossing, and a right turn."""
    lanes = [
        _lane("e1", [(-60.0, -1.75), (-6.0, -1.75)], 10.0, succ=("e2",)),
        _lane("e2", [(-6.0, -1.75), (6.0, -1.75)], 10.0, succ=("e3",)),
        _lane("e3", [(6.0, -1.75), (60.0, -1.75)], 10.0),
        _lane("w1", [(100.0, 1.75), (6.0, 1.75)], 10.0, succ=("w2",)),
        _lane("w2", [(6.0, 1.75), (-6.0, 1.75)], 10.0, succ=("w3",)),
        _lane("w3", [(-6.0, 1.75), (-60.0, 1.75)], 10.0),
        _lane(
            "n1", [(1.75, -80.0), (1.75, -6.0)], 8.0,
            succ=("nl", "ns", "nr"), yield_line=74.0,
        ),
        _lane("nl", _arc(-6.0, -6.0, 7.75, 0.0, 90.0), 8.0, succ=("w3",)),
        _lane("ns", [(1.75, -6.0), (1.75, 60.0)], 8.0),
        _lane("nr", _arc(6.0, -6.0, 4.25, 180.0, 90.0), 8.0, succ=("e3",)),
    ]
    rules = [("e2", "nl"), ("w2", "nl"), ("e2", "ns"), ("w2", "ns"), ("e2", "nr")]
    return LaneGraph(lanes, rules)


def build_scene1() -> tuple[LaneGraph, ScenarioSpec, RunConfig]:
    """Yielding left turn: the stem agent must let the oncoming priority
    agent pass before turning left."""
    graph = _t_junction_map()
    spec = ScenarioSpec(
        name="scene1",
        duration=18.0,
        agents=(
            AgentSpec(
                "V0", "n1", 66.0, 4.0, ("n1", "nl", "w3"), orders={"V1": "other_first"}
            ),
            AgentSpec(
                "V1", "w1", 30.0, 6.0, ("w1", "w2", "w3"), orders={"V0": "self_first"}
            ),
        ),
    )
    return graph, spec, eval_config()


def build_scene1b() -> tuple[LaneGraph, ScenarioSpec, RunConfig]:
    """Left turn ahead of distant oncoming traffic: the gap is large, so
    the stem agent merges before the priority agent arrives."""
    graph = _t_junction_map()
    spec = ScenarioSpec(
        name="scene1b",
        duration=16.0,
        agents=(
            AgentSpec(
                "V0", "n1", 66.0, 4.0, ("n1", "nl", "w3"), orders={"V1": "self_first"}
            ),
            AgentSpec(
                "V1", "w1", 0.0, 8.0, ("w1", "w2", "w3"), orders={"V0": "other_first"}
            ),
        ),
    )
    return graph, spec, eval_config()


def _fork_map() -> LaneGraph:
    """Straight stem that forks: one branch continues straight, the other
    bends north into a slow zone."""
    bl_pts = np.vstack([_arc(60.0, 4.5, 4.5, -90.0, 0.0), [(64.5, 10.0), (64.5, 40.0)]])
    lanes = [
        _lane("s0", [(0.0, 0.0), (60.0, 0.0)], 10.0, succ=("br", "bl")),
        _lane("br", [(60.0, 0.0), (140.0, 0.0)], 10.0),
        _lane("bl", bl_pts, 8.0, limits=[(0.0, 1.0), (15.0, 8.0)]),
    ]
    return LaneGraph(lanes, [])


def build_scene2() -> tuple[LaneGraph, ScenarioSpec, RunConfig]:
    """Car following at a fork: a slow leader bound for the crawling
    branch blocks both of the follower's route options."""
    graph = _fork_map()
    spec = ScenarioSpec(
        name="scene2",
        duration=16.0,
        agents=(
            AgentSpec("L", "s0", 40.0, 2.0, ("s0", "bl")),
            AgentSpec("F", "s0", 28.0, 2.0, ("s0", "br")),
        ),
    )
    return graph, spec, eval_config()


def _roundabout_map() -> LaneGraph:
    """Counter-clockwise ring of four quadrant lanes, one exit leaving the
    ring east, one entry merging from the east with a yield line."""
    lanes = [
        _lane("ring_a", _arc(0, 0, 12.0, 0.0, 90.0), 6.0, succ=("ring_b",)),
        _lane("ring_b", _arc(0, 0, 12.0, 90.0, 180.0), 6.0, succ=("ring_c",)),
        _lane("ring_c", _arc(0, 0, 12.0, 180.0, 270.0), 6.0, succ=("ring_d",)),
        _lane("ring_d", _arc(0, 0, 12.0, 270.0, 360.0), 6.0, succ=("ring_a", "exit_e")),
        _lane(
            "exit_e",
            np.vstack([_arc(20.0, 0.0, 8.0, 180.0, 90.0)[:-1], [(20.0, 8.0), (50.0, 8.0)]]),
            6.0,
        ),
        _lane(
            "entry_n", [(30.0, 12.0), (0.0, 12.0)], 6.0,
            succ=("ring_b",), yield_line=22.0,
        ),
    ]
    rules = [("ring_a", "entry_n"), ("ring_b", "entry_n")]
    return LaneGraph(lanes, rules)


def build_roundabout() -> tuple[LaneGraph, ScenarioSpec, RunConfig]:
    """Yield at a ring entry: the entering agent has to wait for a ring
    agent that keeps circulating instead of taking the east exit."""
    graph = _roundabout_map()
    spec = ScenarioSpec(
        name="roundabout",
        duration=14.0,
        agents=(
            AgentSpec(
                "V0", "ring_c", 10.0, 4.5, ("ring_c", "ring_d", "ring_a", "ring_b"),
                orders={"V1": "self_first"},
            ),
            AgentSpec("V1", "entry_n", 4.0, 4.0, ("entry_n", "ring_b"), orders={"V0": "other_first"}),
        ),
    )
    # on a 75 m ring the default horizon would wrap chains into near-full
    # laps, turning distinct route hypotheses into rotations of each other
    return graph, spec, eval_config(l_h=35.0)


def build_lone() -> tuple[LaneGraph, ScenarioSpec, RunConfig]:
    """Single agent on a straight road; the control case with no
    interaction of any kind."""
    graph = LaneGraph([_lane("lone", [(0.0, 0.0), (200.0, 0.0)], 10.0)], [])
    spec = ScenarioSpec(
        name="lone",
        duration=10.0,
        agents=(AgentSpec("V0", "lone", 5.0, 8.0, ("lone",)),),
    )
    return graph, spec, eval_config()


ARCHETYPES = {
    "scene1": build_scene1,
    "scene1b": build_scene1b,
    "scene2": build_scene2,
    "roundabout": build_roundabout,
    "lone": build_lone,
}
