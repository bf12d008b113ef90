"""Joint scene estimation with a particle filter.

The belief over a scene is a weighted set of particles, each holding for
every agent a kinematic state, a route hypothesis, a maneuver hypothesis
(pairwise passing orders), and the last sampled action.  The state is kept
as struct-of-arrays: kinematics in one (N, A, 4) block, routes and
maneuvers as integer indices into per-filter registries, so prediction can
batch the numeric work while the per-particle hypothesis bookkeeping stays
in plain Python.

All randomness is drawn from counter-based generators keyed by
(seed, step index, purpose), one row per particle, so runs are exactly
reproducible and independent of how many steps already ran.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from scene_forecaster.behavior import (
    AccelRange,
    ConflictConstraint,
    LaneRef,
    conflict_accel_bounds,
    curvature_max_accel_arrays,
    idm_max_accel,
    sample_action,
    speed_cap_accel,
    truncated_normal_ppf,
)
from scene_forecaster.config import RunConfig
from scene_forecaster.geometry import wrap_angle
from scene_forecaster.intent import OTHER_FIRST, SELF_FIRST, _span_lanes, prune_self_first
from scene_forecaster.kinematics import Measurement, measurement_logpdf_arrays, step_arrays
from scene_forecaster.lanegraph import LaneGraph

INF = math.inf

# purpose tags for the per-step random streams
_TAG_PREDICT = 0
_TAG_RESAMPLE = 1
_TAG_REJUVENATE = 2
_TAG_INIT = 3


class UnmappableAgentError(ValueError):
    """An agent's measurement matches no lane corridor on the map."""


class DegenerateBeliefError(RuntimeError):
    """Every particle weight vanished; the belief carries no information."""


@dataclass(frozen=True)
class IntentionPosterior:
    """Posterior over scene hypotheses and its per-agent marginals.

    joint maps a scene key (one (route lane ids, maneuver relations) pair
    per agent, in agent order) to its probability; the marginals map each
    agent to distributions over its route and maneuver hypotheses.
    """

    agent_ids: tuple[str, ...]
    joint: dict[tuple, float]
    route_marginal: dict[str, dict[tuple[str, ...], float]]
    maneuver_marginal: dict[str, dict[tuple[tuple[str, str], ...], float]]


class _RouteSlot:
    """Registered route hypothesis with the lookups prediction needs."""

    __slots__ = ("lane_ids", "geom", "curv_s", "v_rho", "kappa_s", "kappa", "yields", "length")

    def __init__(self, graph: LaneGraph, lane_ids: tuple[str, ...], a_lat_max: float):
        geom = graph.route_geometry(lane_ids)
        self.lane_ids = lane_ids
        self.geom = geom
        self.length = geom.length
        finite = np.isfinite(geom.curv_rho)
        self.curv_s = geom.curv_s[finite]
        self.v_rho = np.sqrt(geom.curv_rho[finite] * a_lat_max)
        self.kappa_s = geom.curv_s
        self.kappa = geom.curv_kappa
        self.yields = geom.yield_lines

    def kappa_at(self, s: float) -> float:
        n = len(self.kappa_s)
        if n == 0:
            return 0.0
        i = min(int(np.searchsorted(self.kappa_s, s)), n - 1)
        return float(self.kappa[i])


class _AgentContext:
    """Per-agent scratch for one particle's prediction context."""

    __slots__ = ("route", "s", "lane", "lat", "psi", "kappa", "v", "cands")

    def __init__(self, route, s, lane, lat, psi, kappa, v, cands):
        self.route = route
        self.s = s
        self.lane = lane
        self.lat = lat
        self.psi = psi
        self.kappa = kappa
        self.v = v
        self.cands = cands


class Belief:
    """Particle belief over the joint scene state of a fixed agent set."""

    def __init__(
        self,
        graph: LaneGraph,
        config: RunConfig,
        agent_ids: Sequence[str],
        interaction: bool = True,
        seed: Optional[int] = None,
        maneuvers: bool = True,
    ):
        if not agent_ids:
            raise ValueError("need at least one agent")
        if len(set(agent_ids)) != len(agent_ids):
            raise ValueError("duplicate agent ids")
        self.graph = graph
        self.config = config
        self.agent_ids: tuple[str, ...] = tuple(agent_ids)
        self.interaction = interaction
        self.maneuvers = maneuvers
        self.seed = config.seed if seed is None else seed
        self.n = config.n_particles
        a = len(self.agent_ids)
        self.kin = np.zeros((self.n, a, 4))
        self.arclen = np.zeros((self.n, a))
        self.route_idx = np.zeros((self.n, a), dtype=np.int32)
        self.man_idx = np.zeros((self.n, a), dtype=np.int32)
        self.last_action = np.zeros((self.n, a, 2))
        self.log_w = np.full(self.n, -math.log(self.n))
        self.t = 0.0
        self.step_index = 0
        self.resample_count = 0
        self._routes: list[_RouteSlot] = []
        self._route_ids: dict[tuple[str, ...], int] = {}
        self._mans: list[tuple[tuple[str, str], ...]] = []
        self._man_ids: dict[tuple[tuple[str, str], ...], int] = {}
        self._empty_man = self._man_id(())
        self._pairs: dict[tuple[int, int], Optional[tuple]] = {}
        self._chain_lists: dict[str, list[tuple[tuple[str, ...], list[float]]]] = {}

    # ------------------------------------------------------------------
    # registries and caches
    # ------------------------------------------------------------------

    def _route_id(self, lane_ids: tuple[str, ...]) -> int:
        idx = self._route_ids.get(lane_ids)
        if idx is None:
            idx = len(self._routes)
            self._routes.append(_RouteSlot(self.graph, lane_ids, self.config.sampler.a_lat_max))
            self._route_ids[lane_ids] = idx
        return idx

    def route_key(self, idx: int) -> tuple[str, ...]:
        return self._routes[idx].lane_ids

    def _man_id(self, relations: tuple[tuple[str, str], ...]) -> int:
        idx = self._man_ids.get(relations)
        if idx is None:
            idx = len(self._mans)
            self._mans.append(relations)
            self._man_ids[relations] = idx
        return idx

    def maneuver_key(self, idx: int) -> tuple[tuple[str, str], ...]:
        return self._mans[idx]

    def _chains(self, lane_id: str):
        chains = self._chain_lists.get(lane_id)
        if chains is None:
            chains = [
                (ids, list(cum))
                for ids, cum in self.graph._maximal_chains(lane_id, self.config.l_h)
            ]
            self._chain_lists[lane_id] = chains
        return chains

    def _candidates(self, lane_id: str, s_in: float) -> list[tuple[str, ...]]:
        """Route candidates from a position, identical to the graph's route
        enumeration but without wrapper objects."""
        cut = s_in + self.config.l_h - 1e-9
        seen: dict[tuple[str, ...], None] = {}
        for ids, cum in self._chains(lane_id):
            k = min(bisect_left(cum, cut), len(ids) - 1)
            seen[ids[: k + 1]] = None
        return sorted(seen)

    def _pair(self, ra: int, rb: int) -> Optional[tuple]:
        """Conflict record of route a against route b:
        (entry_a, exit_a, entry_b, exit_b, a has priority) or None."""
        key = (ra, rb)
        if key in self._pairs:
            return self._pairs[key]
        slot_a, slot_b = self._routes[ra], self._routes[rb]
        area = self.graph.conflict_for(slot_a.lane_ids, slot_b.lane_ids)
        if area is None:
            self._pairs[key] = None
            self._pairs[(rb, ra)] = None
            return None
        lanes_a = _span_lanes(slot_a.geom, area.entry_a, area.exit_a)
        lanes_b = _span_lanes(slot_b.geom, area.entry_b, area.exit_b)
        prio_a = self.graph.priority_between(lanes_a, lanes_b) == "priority"
        prio_b = self.graph.priority_between(lanes_b, lanes_a) == "priority"
        rec = (area.entry_a, area.exit_a, area.entry_b, area.exit_b, prio_a)
        self._pairs[key] = rec
        self._pairs[(rb, ra)] = (area.entry_b, area.exit_b, area.entry_a, area.exit_a, prio_b)
        return rec

    def _stream(self, tag: int) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.step_index, tag))
        return np.random.Generator(np.random.Philox(seq))

    # ------------------------------------------------------------------
    # weights
    # ------------------------------------------------------------------

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_w - np.max(self.log_w))
        return w / np.sum(w)

    def n_eff(self) -> float:
        w = self.weights
        return 1.0 / float(np.sum(w * w))

    # ------------------------------------------------------------------
    # initialization
    # ------------------------------------------------------------------

    def init_particles(self, measurements: Mapping[str, Measurement]) -> "Belief":
        missing = [a for a in self.agent_ids if a not in measurements]
        if missing:
            raise ValueError(f"measurements missing for agents {missing}")
        graph, cfg = self.graph, self.config
        for aid in self.agent_ids:
            z = measurements[aid]
            if not graph.match_lane(z.z_x, z.z_y, z.z_theta):
                raise UnmappableAgentError(
                    f"agent {aid!r} matches no lane at ({z.z_x:.1f}, {z.z_y:.1f})"
                )
        self.t = measurements[self.agent_ids[0]].t
        rng = self._stream(_TAG_INIT)
        noise = cfg.noise
        sig = np.array([noise.sigma_zx, noise.sigma_zy, noise.sigma_ztheta, noise.sigma_zv])
        z_mat = np.array([measurements[a].as_array() for a in self.agent_ids])
        eps = rng.standard_normal((self.n, len(self.agent_ids), 4))
        self.kin = z_mat[None, :, :] + sig * eps
        self.kin[..., 2] = -((-self.kin[..., 2] + np.pi) % (2.0 * np.pi) - np.pi)
        self.kin[..., 3] = np.maximum(self.kin[..., 3], 0.0)
        for i in range(self.n):
            self._draw_hypotheses(i, range(len(self.agent_ids)), rng)
        self.log_w[:] = -math.log(self.n)
        self.step_index += 1
        return self

    def _place(self, x: float, y: float, theta: float) -> tuple[str, float]:
        matches = self.graph.match_lane(x, y, theta)
        if matches:
            return matches[0]
        near = self.graph.nearest_lane(x, y, theta)
        if near is None:
            near = self.graph.nearest_lane(x, y, None)
        return near

    def _draw_hypotheses(self, i: int, agents, rng: np.random.Generator) -> None:
        """Fresh routes, maneuvers, and actions for one particle; agents
        outside the given set keep their hypotheses but join the pairing."""
        a_total = len(self.agent_ids)
        ctx: list[_AgentContext] = [None] * a_total  # type: ignore[list-item]
        redraw = set(agents)
        for j in range(a_total):
            x, y, th, v = self.kin[i, j]
            lane, s_in = self._place(x, y, th)
            cands = self._candidates(lane, s_in)
            if j in redraw:
                pick = cands[int(rng.integers(len(cands)))]
                ridx = self._route_id(pick)
                self.route_idx[i, j] = ridx
            else:
                ridx = int(self.route_idx[i, j])
            slot = self._routes[ridx]
            s, lat, seg = slot.geom.polyline.project(x, y)
            psi = wrap_angle(th - slot.geom.polyline.seg_heading[seg])
            ctx[j] = _AgentContext(ridx, s, lane, lat, psi, slot.kappa_at(s), v, cands)
            self.arclen[i, j] = s
        half = self.config.vehicle_length / 2.0
        sp = self.config.sampler
        for j in redraw:
            rels = []
            if self.interaction:
                for k in range(a_total):
                    if k == j:
                        continue
                    state = self._pair_state(ctx[j], ctx[k], half, sp)
                    if state == "none":
                        continue
                    if state == "self_first":
                        order = SELF_FIRST
                    elif state == "other_first" or not self.maneuvers:
                        order = OTHER_FIRST
                    else:
                        order = SELF_FIRST if rng.random() < 0.5 else OTHER_FIRST
                    rels.append((self.agent_ids[k], order))
            self.man_idx[i, j] = self._man_id(tuple(sorted(rels)))
            rng_range = self._bounds_solo(ctx[j], sp)
            act = sample_action(
                rng_range, LaneRef(ctx[j].lat, ctx[j].psi, ctx[j].kappa), ctx[j].v, sp, rng
            )
            self.last_action[i, j, 0] = act.a
            self.last_action[i, j, 1] = act.thetadot

    def _pair_state(self, me: _AgentContext, other: _AgentContext, half: float, sp) -> str:
        """Existence and fixedness of a pairwise conflict against every
        route candidate of the other agent: 'none', 'self_first' (priority),
        'other_first' (passing first pruned), or 'open'."""
        exists = False
        all_priority = True
        allow_first = False
        for ck in other.cands:
            rec = self._pair(me.route, self._route_id(ck))
            if rec is None:
                continue
            ea, xa, eb, xb, prio = rec
            if me.s - half > xa or other.s - half > xb:
                continue
            exists = True
            if not prio:
                all_priority = False
            if prio or not prune_self_first(
                me.v, ea - me.s, other.v, xb - other.s, sp.a_vd_max, sp.t_gap
            ):
                allow_first = True
        if not exists:
            return "none"
        if all_priority:
            return "self_first"
        if not allow_first:
            return "other_first"
        return "open"

    def _bounds_solo(self, c: _AgentContext, sp) -> AccelRange:
        """Influence bounds that need no other agents: vehicle dynamics,
        speed limits (current and upcoming), and curvature."""
        slot = self._routes[c.route]
        geom = slot.geom
        idm = self.config.idm
        i = max(bisect_right(geom.vlim_s, c.s) - 1, 0)
        v_lim = geom.vlim_v[i]
        hi = min(sp.a_vd_max, idm_max_accel(c.v, v_lim, INF, 0.0, idm))
        for k in range(i + 1, len(geom.vlim_s)):
            if geom.vlim_v[k] < v_lim:
                d = max(geom.vlim_s[k] - c.s, 0.0)
                hi = min(hi, speed_cap_accel(c.v, d, geom.vlim_v[k], self.config.dt, sp, idm.b_d))
                break
        i0 = int(np.searchsorted(slot.curv_s, c.s))
        if i0 < len(slot.curv_s):
            hi = min(
                hi,
                curvature_max_accel_arrays(
                    c.v, slot.curv_s[i0:] - c.s, slot.v_rho[i0:], self.config.dt, sp, idm.b_d
                ),
            )
        return AccelRange(sp.a_vd_min, hi, "solo")

    # ------------------------------------------------------------------
    # prediction
    # ------------------------------------------------------------------

    def predict(self) -> "Belief":
        cfg = self.config
        sp, idm = cfg.sampler, cfg.idm
        n, a_total = self.n, len(self.agent_ids)
        g = self._stream(_TAG_PREDICT)
        u_route = g.random((n, a_total))
        u_pair = g.random((n, a_total, max(a_total - 1, 1)))
        u_acc = g.random((n, a_total))
        z_yaw = g.standard_normal((n, a_total))
        eps = g.standard_normal((n, a_total, 4))

        a_lo = np.empty((n, a_total))
        a_hi = np.empty((n, a_total))
        yaw_mu = np.empty((n, a_total))
        half = cfg.vehicle_length / 2.0
        interaction = self.interaction
        kin = self.kin
        routes = self._routes
        mans = self._mans

        for i in range(n):
            ctx: list[_AgentContext] = [None] * a_total  # type: ignore[list-item]
            for j in range(a_total):
                x, y, th, v = kin[i, j]
                old = routes[self.route_idx[i, j]]
                s_old, lat, seg = old.geom.polyline.project(x, y)
                lane = old.geom.lane_at(s_old)
                s_in = s_old - old.geom.lane_offsets[lane]
                cands = self._candidates(lane, s_in)
                suffix = old.lane_ids[old.lane_ids.index(lane):]
                n_suf = len(suffix)
                matches = [
                    c for c in cands if c[: n_suf] == suffix[: len(c)]
                ]
                if not matches:
                    matches = cands
                if len(matches) == 1:
                    pick = matches[0]
                else:
                    pick = matches[min(int(u_route[i, j] * len(matches)), len(matches) - 1)]
                ridx = self._route_id(pick)
                self.route_idx[i, j] = ridx
                psi = wrap_angle(th - old.geom.polyline.seg_heading[seg])
                ctx[j] = _AgentContext(
                    ridx, s_in, lane, lat, psi, routes[ridx].kappa_at(s_in), v, cands
                )
                self.arclen[i, j] = s_in
            for j in range(a_total):
                c = ctx[j]
                rng_solo = self._bounds_solo(c, sp)
                hi = rng_solo.a_max
                lo = rng_solo.a_min
                constraints: list[ConflictConstraint] = []
                if interaction:
                    old_orders = dict(mans[self.man_idx[i, j]])
                    rels = []
                    contradiction = False
                    open_pairs = []
                    slot = 0
                    for k in range(a_total):
                        if k == j:
                            continue
                        state = self._pair_state(c, ctx[k], half, sp)
                        if state == "none":
                            continue
                        oid = self.agent_ids[k]
                        if state == "self_first":
                            if old_orders.get(oid, SELF_FIRST) != SELF_FIRST:
                                contradiction = True
                            rels.append((oid, SELF_FIRST))
                        elif state == "other_first":
                            if old_orders.get(oid, OTHER_FIRST) != OTHER_FIRST:
                                contradiction = True
                            rels.append((oid, OTHER_FIRST))
                        else:
                            open_pairs.append((oid, slot, len(rels)))
                            rels.append((oid, ""))
                        slot += 1
                    for oid, u_slot, pos in open_pairs:
                        if not self.maneuvers:
                            rels[pos] = (oid, OTHER_FIRST)
                            continue
                        order = None if contradiction else old_orders.get(oid)
                        if order is None:
                            order = SELF_FIRST if u_pair[i, j, u_slot] < 0.5 else OTHER_FIRST
                        rels[pos] = (oid, order)
                    self.man_idx[i, j] = self._man_id(tuple(sorted(rels)))
                    # bounds against the sampled routes of the others
                    order_of = dict(rels)
                    for k in range(a_total):
                        if k == j:
                            continue
                        oid = self.agent_ids[k]
                        order = order_of.get(oid)
                        if order is None:
                            continue
                        rec = self._pair(c.route, ctx[k].route)
                        if rec is None:
                            continue
                        ea, xa, eb, xb, prio = rec
                        if c.s - half > xa or ctx[k].s - half > xb:
                            continue
                        constraints.append(
                            ConflictConstraint(
                                order, prio, ctx[k].v, eb - ctx[k].s, xb - ctx[k].s,
                                ea - c.s, xa - c.s,
                            )
                        )
                    # car following on the own route
                    gap, v_p = INF, 0.0
                    geom = routes[c.route].geom
                    for k in range(a_total):
                        if k == j:
                            continue
                        off = geom.lane_offsets.get(ctx[k].lane)
                        if off is None:
                            continue
                        s_k = off + ctx[k].s - routes[ctx[k].route].geom.lane_offsets[ctx[k].lane]
                        d = s_k - c.s
                        if 0.0 < d < gap:
                            gap, v_p = d, ctx[k].v
                    if math.isfinite(gap):
                        d_p = max(gap - cfg.vehicle_length, 0.01)
                        vlim_i = max(bisect_right(geom.vlim_s, c.s) - 1, 0)
                        hi = min(
                            hi, idm_max_accel(c.v, geom.vlim_v[vlim_i], d_p, v_p, idm)
                        )
                else:
                    self.man_idx[i, j] = self._empty_man
                if constraints:
                    slot_r = routes[c.route]
                    jy = bisect_right(slot_r.yields, c.s)
                    d_yield = slot_r.yields[jy] - c.s if jy < len(slot_r.yields) else None
                    conf = conflict_accel_bounds(c.v, d_yield, constraints, sp, cfg.dt, idm.b_d)
                    hi = min(hi, conf.a_max)
                    lo = max(lo, conf.a_min)
                if lo > hi:
                    lo = hi = max(hi, sp.a_vd_min)
                a_lo[i, j] = lo
                a_hi[i, j] = hi
                yaw_mu[i, j] = c.kappa * c.v - sp.k_psi * c.psi - sp.k_e * c.lat / max(c.v, 1.0)

        accel = truncated_normal_ppf(u_acc, a_hi - sp.sigma_a, sp.sigma_a, a_lo, a_hi)
        yaw = yaw_mu + sp.sigma_thetadot * z_yaw
        noise_std = np.array(
            [cfg.noise.sigma_x, cfg.noise.sigma_y, cfg.noise.sigma_theta, cfg.noise.sigma_v]
        )
        self.kin = step_arrays(kin, accel, yaw, cfg.dt, noise_std, eps)
        self.last_action[..., 0] = accel
        self.last_action[..., 1] = yaw
        self.t += cfg.dt
        self.step_index += 1
        return self

    # ------------------------------------------------------------------
    # measurement update, resampling, rejuvenation
    # ------------------------------------------------------------------

    def update(self, measurements: Mapping[str, Measurement]) -> "Belief":
        unknown = [a for a in measurements if a not in self.agent_ids]
        if unknown:
            raise ValueError(f"measurements for unknown agents {unknown}")
        for j, aid in enumerate(self.agent_ids):
            z = measurements.get(aid)
            if z is None:
                continue  # departed or occluded agents leave weights untouched
            self.log_w += measurement_logpdf_arrays(
                self.kin[:, j, :], z.as_array(), self.config.noise
            )
        shift = float(np.max(self.log_w))
        if not math.isfinite(shift):
            raise DegenerateBeliefError("all particle weights vanished")
        self.log_w -= shift
        return self

    def resample(self, force: bool = False) -> bool:
        if not force and self.n_eff() >= self.n / 2.0:
            return False
        w = self.weights
        u = float(self._stream(_TAG_RESAMPLE).random())
        positions = (np.arange(self.n) + u) / self.n
        idx = np.searchsorted(np.cumsum(w), positions)
        idx = np.minimum(idx, self.n - 1)
        self.kin = self.kin[idx].copy()
        self.arclen = self.arclen[idx].copy()
        self.route_idx = self.route_idx[idx].copy()
        self.man_idx = self.man_idx[idx].copy()
        self.last_action = self.last_action[idx].copy()
        self.log_w[:] = -math.log(self.n)
        self.resample_count += 1
        return True

    def rejuvenate(self, measurements: Mapping[str, Measurement]) -> int:
        """Replace a small random subset of particles with fresh samples
        drawn around the current measurements; returns the count."""
        if self.config.p_rej <= 0.0 or not measurements:
            return 0
        rng = self._stream(_TAG_REJUVENATE)
        chosen = np.flatnonzero(rng.random(self.n) < self.config.p_rej)
        if len(chosen) == 0:
            return 0
        sig = np.asarray(self.config.sigma_rej)
        count = 0
        for i in chosen:
            cols = []
            for j, aid in enumerate(self.agent_ids):
                z = measurements.get(aid)
                if z is None:
                    continue
                draw = z.as_array() + sig * rng.standard_normal(4)
                draw[2] = wrap_angle(draw[2])
                draw[3] = max(draw[3], 0.0)
                if not self.graph.match_lane(draw[0], draw[1], draw[2]):
                    continue
                self.kin[i, j] = draw
                cols.append(j)
            if cols:
                self._draw_hypotheses(int(i), cols, rng)
                count += 1
        return count

    def step_once(self, measurements: Mapping[str, Measurement]) -> "Belief":
        """One full filter iteration: predict, weight, resample if the
        effective sample size dropped, then rejuvenate."""
        self.predict()
        self.update(measurements)
        self.resample()
        self.rejuvenate(measurements)
        return self

    # ------------------------------------------------------------------
    # posterior summaries
    # ------------------------------------------------------------------

    def intention_posterior(self) -> IntentionPosterior:
        w = self.weights
        a_total = len(self.agent_ids)
        codes = np.concatenate([self.route_idx, self.man_idx], axis=1)
        groups, inverse = np.unique(codes, axis=0, return_inverse=True)
        probs = np.bincount(inverse, weights=w, minlength=len(groups))
        joint: dict[tuple, float] = {}
        route_m: dict[str, dict] = {a: {} for a in self.agent_ids}
        man_m: dict[str, dict] = {a: {} for a in self.agent_ids}
        for row, p in zip(groups, probs):
            p = float(p)
            if p <= 0.0:
                continue
            key = tuple(
                (self._routes[row[j]].lane_ids, self._mans[row[a_total + j]])
                for j in range(a_total)
            )
            joint[key] = joint.get(key, 0.0) + p
            for j, aid in enumerate(self.agent_ids):
                rk = self._routes[row[j]].lane_ids
                mk = self._mans[row[a_total + j]]
                route_m[aid][rk] = route_m[aid].get(rk, 0.0) + p
                man_m[aid][mk] = man_m[aid].get(mk, 0.0) + p
        return IntentionPosterior(self.agent_ids, joint, route_m, man_m)

    def mean_state(self, agent_id: str) -> np.ndarray:
        """Weighted mean kinematic state (heading averaged on the circle)."""
        j = self.agent_ids.index(agent_id)
        w = self.weights
        out = np.empty(4)
        out[0] = float(np.sum(w * self.kin[:, j, 0]))
        out[1] = float(np.sum(w * self.kin[:, j, 1]))
        s = float(np.sum(w * np.sin(self.kin[:, j, 2])))
        c = float(np.sum(w * np.cos(self.kin[:, j, 2])))
        out[2] = math.atan2(s, c)
        out[3] = float(np.sum(w * self.kin[:, j, 3]))
        return out


# ----------------------------------------------------------------------
# functional facade
# ----------------------------------------------------------------------


def init_particles(
    measurements: Mapping[str, Measurement],
    graph: LaneGraph,
    config: RunConfig,
    interaction: bool = True,
    seed: Optional[int] = None,
    maneuvers: bool = True,
) -> Belief:
    """Build the initial belief from the first measurement of every agent."""
    belief = Belief(graph, config, sorted(measurements), interaction, seed, maneuvers)
    return belief.init_particles(measurements)


def predict(belief: Belief) -> Belief:
    return belief.predict()


def update(belief: Belief, measurements: Mapping[str, Measurement]) -> Belief:
    return belief.update(measurements)


def resample(belief: Belief, force: bool = False) -> bool:
    return belief.resample(force)


def rejuvenate(belief: Belief, measurements: Mapping[str, Measurement]) -> int:
    return belief.rejuvenate(measurements)


def intention_posterior(belief: Belief) -> IntentionPosterior:
    return belief.intention_posterior()
