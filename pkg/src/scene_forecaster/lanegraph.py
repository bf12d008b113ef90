"""Static lane-graph map: geometry, topology, routing, and conflicts.

A map is a set of lanes (centerline, width, speed limits, optional yield
line) connected by a successor relation, plus right-of-way rules between
lane pairs.  Everything derived from the map (route polylines, curvature
profiles, corridor polygons, conflict areas) is immutable and cached, so
the filter's per-particle loops only do dictionary lookups.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import shapely
from shapely.geometry import Polygon
from shapely.ops import unary_union

from scene_forecaster.geometry import Polyline, wrap_angle

CONTINUITY_TOL = 0.1     # max gap between a lane end and its successor start (m)
MATCH_SLACK = 1.0        # lateral slack beyond width/2 when matching lanes (m)
HEADING_GATE = math.pi / 2
CONFLICT_MIN_AREA = 0.3  # smaller corridor overlaps are treated as grazing (m^2)
CENTERLINE_STEP = 0.5    # sampling step for entry/exit arclengths (m)


class MapError(ValueError):
    """Raised for schema violations or inconsistent map data."""


@dataclass(frozen=True)
class Lane:
    id: str
    centerline: Polyline
    width: float
    speed_limits: tuple[tuple[float, float], ...]  # (start arclength, v_lim)
    yield_line: Optional[float]
    successors: tuple[str, ...]

    @property
    def length(self) -> float:
        return self.centerline.length


@dataclass(frozen=True)
class RoutePath:
    """A sequence of consecutive lanes covering at least the route horizon."""

    lane_ids: tuple[str, ...]
    length: float
    l_h: float

    def __len__(self) -> int:
        return len(self.lane_ids)


@dataclass(frozen=True)
class ConflictArea:
    """Corridor overlap of two routes, with per-route entry/exit arclengths."""

    entry_a: float
    exit_a: float
    entry_b: float
    exit_b: float
    polygon: tuple[tuple[float, float], ...]

    def swapped(self) -> "ConflictArea":
        return ConflictArea(self.entry_b, self.exit_b, self.entry_a, self.exit_a, self.polygon)


@dataclass(frozen=True)
class RouteRelation:
    kind: str  # merge | diverge | cross | identical | none
    conflict_area: Optional[ConflictArea] = None


@dataclass(frozen=True)
class RouteFeatures:
    """Map features ahead of a position on a route; distances are relative."""

    v_lim: float
    next_vlim: Optional[tuple[float, float]]   # (distance, new limit)
    d_yield: Optional[float]
    curvature: tuple[tuple[float, float], ...]  # (distance, radius) pairs ahead


class RouteGeometry:
    """Cached per-route products: stitched polyline, limits, curvature."""

    def __init__(self, graph: "LaneGraph", lane_ids: tuple[str, ...]):
        self.lane_ids = lane_ids
        lanes = [graph.lanes[i] for i in lane_ids]
        pts = [lanes[0].centerline.points]
        offsets = [0.0]
        total = lanes[0].length
        for lane in lanes[1:]:
            offsets.append(total)
            pts.append(lane.centerline.points[1:])
            total += lane.length
        self.polyline = Polyline(np.vstack(pts))
        self.length = self.polyline.length
        self.lane_offsets = dict(zip(lane_ids, offsets))
        self.offsets = offsets
        # speed limit steps along the route, deduplicated and sorted
        steps: list[tuple[float, float]] = []
        for lane, off in zip(lanes, offsets):
            for d, v in lane.speed_limits:
                steps.append((off + d, v))
        steps.sort()
        self.vlim_s = [s for s, _ in steps]
        self.vlim_v = [v for _, v in steps]
        self.yield_lines = sorted(
            off + lane.yield_line for lane, off in zip(lanes, offsets) if lane.yield_line is not None
        )
        s, rho, kappa = self.polyline.curvature_samples()
        self.curv_s = s
        self.curv_rho = rho
        self.curv_kappa = kappa
        self.widths = {lane.id: lane.width for lane in lanes}

    def lane_at(self, s: float) -> str:
        i = bisect_right(self.offsets, s) - 1
        return self.lane_ids[max(i, 0)]

    def v_lim_at(self, s: float) -> float:
        i = bisect_right(self.vlim_s, s) - 1
        return self.vlim_v[max(i, 0)]


class LaneGraph:
    """Immutable road map; all derived geometry is memoized internally."""

    def __init__(self, lanes: Iterable[Lane], right_of_way: Iterable[tuple[str, str]] = ()):
        self.lanes: dict[str, Lane] = {}
        for lane in lanes:
            if lane.id in self.lanes:
                raise MapError(f"duplicate lane id {lane.id!r}")
            self.lanes[lane.id] = lane
        self.right_of_way = tuple((p, y) for p, y in right_of_way)
        self._validate()
        self._predecessors: dict[str, list[str]] = {i: [] for i in self.lanes}
        for lane in self.lanes.values():
            for succ in lane.successors:
                self._predecessors[succ].append(lane.id)
        self._chain_cache: dict[tuple[str, float], list[tuple[tuple[str, ...], np.ndarray]]] = {}
        self._geom_cache: dict[tuple[str, ...], RouteGeometry] = {}
        self._relation_cache: dict[tuple[tuple[str, ...], tuple[str, ...]], RouteRelation] = {}
        self._corridor_cache: dict[str, Polygon] = {}

    def _validate(self) -> None:
        if not self.lanes:
            raise MapError("map has no lanes")
        for lane in self.lanes.values():
            if lane.width <= 0:
                raise MapError(f"lane {lane.id!r}: width must be > 0")
            if not lane.speed_limits:
                raise MapError(f"lane {lane.id!r}: needs at least one speed limit")
            prev = -math.inf
            for d, v in lane.speed_limits:
                if v <= 0:
                    raise MapError(f"lane {lane.id!r}: speed limit must be > 0")
                if d < prev:
                    raise MapError(f"lane {lane.id!r}: speed limit arclengths must be non-decreasing")
                prev = d
            if lane.yield_line is not None and not (0.0 <= lane.yield_line <= lane.length):
                raise MapError(f"lane {lane.id!r}: yield line outside lane extent")
            for succ in lane.successors:
                if succ not in self.lanes:
                    raise MapError(f"lane {lane.id!r}: unknown successor {succ!r}")
                gap = float(
                    np.hypot(*(self.lanes[succ].centerline.points[0] - lane.centerline.points[-1]))
                )
                if gap > CONTINUITY_TOL:
                    raise MapError(
                        f"lane {lane.id!r}: successor {succ!r} starts {gap:.3f} m away"
                    )
        seen = set()
        for p, y in self.right_of_way:
            if p not in self.lanes or y not in self.lanes:
                raise MapError(f"right-of-way rule ({p!r}, {y!r}) references unknown lane")
            if (y, p) in seen:
                raise MapError(f"contradictory right-of-way rules for ({p!r}, {y!r})")
            seen.add((p, y))

    # ------------------------------------------------------------------
    # lane matching and routing
    # ------------------------------------------------------------------

    def match_lane(self, x: float, y: float, theta: float) -> list[tuple[str, float]]:
        """Lanes whose corridor contains the pose, sorted by lateral offset."""
        out = []
        for lane in self.lanes.values():
            s, lat, seg = lane.centerline.project(x, y)
            if abs(lat) > lane.width / 2.0 + MATCH_SLACK:
                continue
            if abs(wrap_angle(theta - lane.centerline.seg_heading[seg])) >= HEADING_GATE:
                continue
            out.append((abs(lat), lane.id, s))
        out.sort()
        return [(lane_id, s) for _, lane_id, s in out]

    def nearest_lane(self, x: float, y: float, theta: Optional[float] = None) -> Optional[tuple[str, float]]:
        """Closest lane regardless of corridor width; pass theta to keep
        only heading-compatible lanes (may then return None)."""
        best = None
        for lane in self.lanes.values():
            s, lat, seg = lane.centerline.project(x, y)
            if theta is not None and abs(
                wrap_angle(theta - lane.centerline.seg_heading[seg])
            ) >= HEADING_GATE:
                continue
            if best is None or abs(lat) < best[0]:
                best = (abs(lat), lane.id, s)
        return None if best is None else (best[1], best[2])

    def _maximal_chains(self, lane_id: str, l_h: float):
        """All successor chains from the lane start, long enough to cut for
        any start arclength within the lane; cumulative lengths attached."""
        key = (lane_id, l_h)
        cached = self._chain_cache.get(key)
        if cached is not None:
            return cached
        need = l_h + self.lanes[lane_id].length
        chains: list[tuple[tuple[str, ...], np.ndarray]] = []

        def expand(chain: list[str], cum: list[float]) -> None:
            last = self.lanes[chain[-1]]
            # a lane may appear once per route: cyclic maps cut at the lap
            nxt = [s for s in sorted(last.successors) if s not in chain]
            if cum[-1] >= need or not nxt:
                chains.append((tuple(chain), np.array(cum)))
                return
            for succ in nxt:
                expand(chain + [succ], cum + [cum[-1] + self.lanes[succ].length])

        expand([lane_id], [self.lanes[lane_id].length])
        self._chain_cache[key] = chains
        return chains

    def enumerate_routes(self, lane_id: str, arclength: float, l_h: float) -> list[RoutePath]:
        """Minimal successor chains whose remaining length from the given
        position reaches the horizon (or the graph ends), sorted by ids."""
        if lane_id not in self.lanes:
            raise MapError(f"unknown lane {lane_id!r}")
        if l_h <= 0:
            raise ValueError("route horizon must be > 0")
        prefixes: dict[tuple[str, ...], float] = {}
        for chain, cum in self._maximal_chains(lane_id, l_h):
            k = int(np.searchsorted(cum, arclength + l_h - 1e-9))
            k = min(k, len(chain) - 1)
            prefixes[chain[: k + 1]] = float(cum[k])
        return [
            RoutePath(ids, length, l_h) for ids, length in sorted(prefixes.items())
        ]

    # ------------------------------------------------------------------
    # derived geometry
    # ------------------------------------------------------------------

    def route_geometry(self, lane_ids: tuple[str, ...]) -> RouteGeometry:
        geom = self._geom_cache.get(lane_ids)
        if geom is None:
            for a, b in zip(lane_ids, lane_ids[1:]):
                if b not in self.lanes[a].successors:
                    raise MapError(f"{b!r} is not a successor of {a!r}")
            geom = RouteGeometry(self, lane_ids)
            self._geom_cache[lane_ids] = geom
        return geom

    def lane_corridor(self, lane_id: str) -> Polygon:
        poly = self._corridor_cache.get(lane_id)
        if poly is None:
            lane = self.lanes[lane_id]
            line = shapely.LineString(lane.centerline.points)
            poly = line.buffer(lane.width / 2.0, cap_style="flat", join_style="round")
            self._corridor_cache[lane_id] = poly
        return poly

    def _corridor(self, lane_ids: Iterable[str]) -> Polygon:
        return unary_union([self.lane_corridor(i) for i in lane_ids])

    def _centerline_span(self, geom: RouteGeometry, patch: Polygon) -> Optional[tuple[float, float]]:
        n = max(int(geom.length / CENTERLINE_STEP), 2)
        svals = np.linspace(0.0, geom.length, n)
        pts = np.array([geom.polyline.point_at(s) for s in svals])
        inside = shapely.contains_xy(patch, pts[:, 0], pts[:, 1])
        idx = np.flatnonzero(inside)
        if len(idx) == 0:
            return None
        return float(svals[idx[0]]), float(svals[idx[-1]])

    def _conflict_between(
        self, ids_a: tuple[str, ...], ids_b: tuple[str, ...], pre_a: tuple[str, ...], pre_b: tuple[str, ...]
    ) -> Optional[ConflictArea]:
        overlap = self._corridor(pre_a).intersection(self._corridor(pre_b))
        if overlap.is_empty:
            return None
        if overlap.geom_type == "GeometryCollection":
            polys = [g for g in overlap.geoms if g.geom_type in ("Polygon", "MultiPolygon")]
            if not polys:
                return None
            overlap = unary_union(polys)
        if overlap.geom_type == "MultiPolygon":
            overlap = max(overlap.geoms, key=lambda g: g.area)
        if overlap.area < CONFLICT_MIN_AREA:
            return None
        span_a = self._centerline_span(self.route_geometry(ids_a), overlap)
        span_b = self._centerline_span(self.route_geometry(ids_b), overlap)
        if span_a is None or span_b is None or span_a[0] >= span_a[1] or span_b[0] >= span_b[1]:
            return None
        coords = tuple((float(x), float(y)) for x, y in overlap.exterior.coords)
        return ConflictArea(span_a[0], span_a[1], span_b[0], span_b[1], coords)

    def route_relation(self, a: RoutePath, b: RoutePath) -> RouteRelation:
        key = (a.lane_ids, b.lane_ids)
        rel = self._relation_cache.get(key)
        if rel is None:
            rel = self._classify(a.lane_ids, b.lane_ids)
            self._relation_cache[key] = rel
            swapped = RouteRelation(
                rel.kind, rel.conflict_area.swapped() if rel.conflict_area else None
            )
            self._relation_cache[(b.lane_ids, a.lane_ids)] = swapped
        return rel

    def _classify(self, ids_a: tuple[str, ...], ids_b: tuple[str, ...]) -> RouteRelation:
        if ids_a == ids_b or ids_a[: len(ids_b)] == ids_b or ids_b[: len(ids_a)] == ids_a:
            return RouteRelation("identical")
        set_b = set(ids_b)
        shared = [i for i, lane in enumerate(ids_a) if lane in set_b]
        if shared:
            i_a = shared[0]
            i_b = ids_b.index(ids_a[i_a])
            tail_a, tail_b = ids_a[i_a:], ids_b[i_b:]
            n = min(len(tail_a), len(tail_b))
            agree = tail_a[:n] == tail_b[:n]
            if i_a > 0 and i_b > 0:
                conflict = self._conflict_between(ids_a, ids_b, ids_a[:i_a], ids_b[:i_b])
                if conflict is None:
                    # joins with no corridor overlap before the shared lane
                    return RouteRelation("merge", self._merge_point_conflict(ids_a, ids_b, i_a, i_b))
                return RouteRelation("merge", conflict)
            if agree:
                return RouteRelation("identical")
            return RouteRelation("diverge")
        if set(self._predecessors[ids_a[0]]) & set(self._predecessors[ids_b[0]]):
            # branches of one approach; their corridors only share the throat
            return RouteRelation("diverge")
        conflict = self._conflict_between(ids_a, ids_b, ids_a, ids_b)
        if conflict is None:
            return RouteRelation("none")
        return RouteRelation("cross", conflict)

    def _merge_point_conflict(
        self, ids_a: tuple[str, ...], ids_b: tuple[str, ...], i_a: int, i_b: int
    ) -> ConflictArea:
        """Fallback conflict at the junction point when approach corridors
        only touch: a small disc around the first shared lane's start."""
        geom_a = self.route_geometry(ids_a)
        geom_b = self.route_geometry(ids_b)
        s_a = geom_a.lane_offsets[ids_a[i_a]]
        s_b = geom_b.lane_offsets[ids_b[i_b]]
        width = max(geom_a.widths[ids_a[i_a]], geom_b.widths[ids_b[i_b]])
        center = geom_a.polyline.point_at(s_a)
        disc = shapely.Point(center).buffer(width / 2.0)
        coords = tuple((float(x), float(y)) for x, y in disc.exterior.coords)
        half = width / 2.0
        return ConflictArea(
            max(s_a - half, 0.0), min(s_a + half, geom_a.length),
            max(s_b - half, 0.0), min(s_b + half, geom_b.length),
            coords,
        )

    def conflict_for(self, ids_a: tuple[str, ...], ids_b: tuple[str, ...]) -> Optional[ConflictArea]:
        rel = self.route_relation(RoutePath(ids_a, 0.0, 0.0), RoutePath(ids_b, 0.0, 0.0))
        return rel.conflict_area if rel.kind in ("merge", "cross") else None

    # ------------------------------------------------------------------
    # features
    # ------------------------------------------------------------------

    def curvature_profile(self, route: RoutePath) -> list[tuple[float, float]]:
        geom = self.route_geometry(route.lane_ids)
        return [(float(s), float(r)) for s, r in zip(geom.curv_s, geom.curv_rho)]

    def features_along_route(self, route: RoutePath, arclength: float) -> RouteFeatures:
        geom = self.route_geometry(route.lane_ids)
        if not (0.0 <= arclength <= geom.length):
            raise ValueError("arclength outside route extent")
        i = bisect_right(geom.vlim_s, arclength) - 1
        v_lim = geom.vlim_v[max(i, 0)]
        next_vlim = None
        if i + 1 < len(geom.vlim_s):
            next_vlim = (geom.vlim_s[i + 1] - arclength, geom.vlim_v[i + 1])
        d_yield = None
        j = bisect_right(geom.yield_lines, arclength)
        if j < len(geom.yield_lines):
            d_yield = geom.yield_lines[j] - arclength
        ahead = geom.curv_s >= arclength
        curvature = tuple(
            (float(s - arclength), float(r))
            for s, r in zip(geom.curv_s[ahead], geom.curv_rho[ahead])
            if math.isfinite(r)
        )
        return RouteFeatures(v_lim, next_vlim, d_yield, curvature)

    def priority_between(
        self, self_lanes: Iterable[str], other_lanes: Iterable[str]
    ) -> str:
        """Right-of-way of self against other at a shared conflict:
        'priority', or 'yield' when a rule favors the other or none exists."""
        self_set, other_set = set(self_lanes), set(other_lanes)
        for p, y in self.right_of_way:
            if p in self_set and y in other_set:
                return "priority"
            if p in other_set and y in self_set:
                return "yield"
        return "yield"


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------


def load_map(path: str | Path) -> LaneGraph:
    """Load a lane-graph map from its JSON document."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MapError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_map(doc)


def parse_map(doc: dict) -> LaneGraph:
    if not isinstance(doc, dict) or "lanes" not in doc:
        raise MapError("map document must be an object with a 'lanes' array")
    lanes = []
    for k, entry in enumerate(doc["lanes"]):
        try:
            centerline = Polyline(np.asarray(entry["centerline"], dtype=float))
            limits = tuple((float(d), float(v)) for d, v in entry["speed_limits"])
            yline = entry.get("yield_line")
            lanes.append(
                Lane(
                    id=str(entry["id"]),
                    centerline=centerline,
                    width=float(entry["width"]),
                    speed_limits=limits,
                    yield_line=None if yline is None else float(yline),
                    successors=tuple(str(s) for s in entry.get("successors", [])),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MapError(f"lane entry {k}: {exc}") from exc
    rules = [(str(p), str(y)) for p, y in doc.get("right_of_way", [])]
    return LaneGraph(lanes, rules)


def dump_map(graph: LaneGraph, path: str | Path) -> None:
    doc = {
        "lanes": [
            {
                "id": lane.id,
                "centerline": [[float(x), float(y)] for x, y in lane.centerline.points],
                "width": lane.width,
                "speed_limits": [[d, v] for d, v in lane.speed_limits],
                "yield_line": lane.yield_line,
                "successors": list(lane.successors),
            }
            for lane in graph.lanes.values()
        ],
        "right_of_way": [[p, y] for p, y in graph.right_of_way],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
