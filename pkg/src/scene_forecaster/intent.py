"""Discrete intention layers: route hypotheses and passing-order maneuvers.

Routes are matched across re-enumerations by decision consistency (the
aligned lane sequences agree wherever both cover); maneuvers are matched
by the absence of contradictory passing orders.  Agents holding the right
of way do not branch maneuvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Mapping, Optional, Sequence

from scene_forecaster.lanegraph import ConflictArea, LaneGraph, RoutePath

SELF_FIRST = "self_first"
OTHER_FIRST = "other_first"


@dataclass(frozen=True)
class ManeuverIntention:
    """Passing order per potentially conflicting agent, keyed by agent id."""

    relations: tuple[tuple[str, str], ...]  # sorted (other agent id, order)

    def order_for(self, other_id: str) -> Optional[str]:
        for oid, order in self.relations:
            if oid == other_id:
                return order
        return None

    def __len__(self) -> int:
        return len(self.relations)


EMPTY_MANEUVER = ManeuverIntention(())


@dataclass(frozen=True)
class PotentialConflict:
    """A pairwise conflict as seen from the subject's route hypothesis."""

    other_id: str
    areas: tuple[tuple[tuple[str, ...], ConflictArea], ...]  # per other-route candidate
    priority: bool          # subject has the right of way over the other
    allow_self_first: bool  # kinematically plausible to pass first


def route_prior(candidates: Sequence[RoutePath]) -> list[tuple[RoutePath, float]]:
    """Uniform prior over the enumerated route candidates."""
    if not candidates:
        raise ValueError("agent is unmappable: no route candidates")
    p = 1.0 / len(candidates)
    return [(c, p) for c in candidates]


def routes_consistent(candidate: Sequence[str], reference: Sequence[str]) -> bool:
    """True when two aligned lane sequences imply the same decisions on
    the stretch both cover."""
    n = min(len(candidate), len(reference))
    return tuple(candidate[:n]) == tuple(reference[:n])


def match_route(
    old: RoutePath, new_candidates: Sequence[RoutePath]
) -> list[tuple[RoutePath, float]]:
    """Distribution over re-enumerated candidates given the previous route.

    The previous route is aligned at the candidates' shared start lane;
    candidates that agree on every covered decision split the mass
    uniformly.  With no match the prior over the new set applies.
    """
    if not new_candidates:
        raise ValueError("agent is unmappable: no route candidates")
    start = new_candidates[0].lane_ids[0]
    old_suffix: tuple[str, ...] = ()
    if start in old.lane_ids:
        old_suffix = old.lane_ids[old.lane_ids.index(start):]
    matches = [c for c in new_candidates if old_suffix and routes_consistent(c.lane_ids, old_suffix)]
    if not matches:
        return route_prior(new_candidates)
    p = 1.0 / len(matches)
    chosen = {c.lane_ids for c in matches}
    return [(c, p if c.lane_ids in chosen else 0.0) for c in new_candidates]


def prune_self_first(
    v_self: float,
    d_entry_self: float,
    v_other: float,
    d_exit_other: float,
    a_vd_max: float,
    t_gap: float,
) -> bool:
    """Passing first is implausible when, even at full acceleration, the
    subject cannot reach its conflict entry before the other (driving at
    constant speed) has exited plus the time gap."""
    if v_other <= 0.1:
        return False  # a stopped agent never forces the order
    t_exit_other = max(d_exit_other, 0.0) / v_other
    if d_entry_self <= 0.0:
        return False
    disc = v_self * v_self + 2.0 * a_vd_max * d_entry_self
    t_reach = (-v_self + math.sqrt(disc)) / a_vd_max
    return t_reach > t_exit_other + t_gap


def potential_conflicts(
    graph: LaneGraph,
    self_route: RoutePath,
    self_s: float,
    self_v: float,
    others: Mapping[str, tuple[Sequence[RoutePath], float, float]],
    vehicle_length: float,
    a_vd_max: float,
    t_gap: float,
) -> list[PotentialConflict]:
    """Pairwise conflicts of the subject's route against every other
    agent's candidate set.

    others maps agent id to (candidates, arclength on its candidates, v).
    Pairs whose conflict lies fully behind either agent's rear bumper are
    dropped.
    """
    out = []
    half = vehicle_length / 2.0
    geom_self = graph.route_geometry(self_route.lane_ids)
    for other_id in sorted(others):
        candidates, other_s, other_v = others[other_id]
        areas = []
        all_priority = True
        allow_first = False
        for cand in candidates:
            area = graph.conflict_for(self_route.lane_ids, cand.lane_ids)
            if area is None:
                continue
            if self_s - half > area.exit_a or other_s - half > area.exit_b:
                continue  # fully passed on either side
            areas.append((cand.lane_ids, area))
            geom_other = graph.route_geometry(cand.lane_ids)
            chi = graph.priority_between(
                _span_lanes(geom_self, area.entry_a, area.exit_a),
                _span_lanes(geom_other, area.entry_b, area.exit_b),
            )
            if chi != "priority":
                all_priority = False
            if not prune_self_first(
                self_v, area.entry_a - self_s, other_v, area.exit_b - other_s, a_vd_max, t_gap
            ):
                allow_first = True
        if not areas:
            continue
        out.append(
            PotentialConflict(other_id, tuple(areas), all_priority, allow_first or all_priority)
        )
    return out


def _span_lanes(geom, entry: float, exit_: float) -> list[str]:
    """Lanes of a route whose extent intersects the [entry, exit] span."""
    lanes = []
    ids = geom.lane_ids
    for k, lane_id in enumerate(ids):
        start = geom.offsets[k]
        end = geom.offsets[k + 1] if k + 1 < len(ids) else geom.length
        if end >= entry and start <= exit_:
            lanes.append(lane_id)
    return lanes


def enumerate_maneuvers(conflicts: Sequence[PotentialConflict]) -> list[ManeuverIntention]:
    """All passing-order combinations over the branching conflict pairs.

    Priority pairs are fixed to passing first; pairs whose self-first
    order is implausible are fixed to passing after.  The result is the
    cross product over the remaining pairs, deterministically ordered.
    """
    fixed: list[tuple[str, str]] = []
    branching: list[str] = []
    for c in sorted(conflicts, key=lambda c: c.other_id):
        if c.priority:
            fixed.append((c.other_id, SELF_FIRST))
        elif not c.allow_self_first:
            fixed.append((c.other_id, OTHER_FIRST))
        else:
            branching.append(c.other_id)
    out = []
    for combo in product((SELF_FIRST, OTHER_FIRST), repeat=len(branching)):
        rels = fixed + list(zip(branching, combo))
        rels.sort()
        out.append(ManeuverIntention(tuple(rels)))
    out.sort(key=lambda m: m.relations)
    return out


def match_maneuver(
    old: ManeuverIntention, new_set: Sequence[ManeuverIntention]
) -> list[tuple[ManeuverIntention, float]]:
    """Distribution over re-enumerated maneuvers: mass splits uniformly
    over candidates with no contradictory order on any shared pair."""
    if not new_set:
        raise ValueError("maneuver set may not be empty")
    old_orders = dict(old.relations)
    matches = [
        m
        for m in new_set
        if all(old_orders.get(oid, order) == order for oid, order in m.relations)
    ]
    if not matches:
        matches = list(new_set)
    p = 1.0 / len(matches)
    chosen = {m.relations for m in matches}
    return [(m, p if m.relations in chosen else 0.0) for m in new_set]
