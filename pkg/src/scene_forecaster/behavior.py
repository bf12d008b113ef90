"""Context-dependent action model: acceleration bounds and (a, yaw-rate) sampling.

Each influence (vehicle dynamics, speed limit, preceding agent, curvature,
conflicts) contributes a feasible acceleration interval; the intervals are
intersected and the longitudinal acceleration is drawn from a truncated
normal whose mean sits just below the lowest upper bound.  The yaw rate
tracks the lane centerline with a small proportional heuristic.

All anticipatory bounds (curvature, conflicts) share one kinematic plan:
one step at the candidate acceleration, then constant comfortable braking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from scene_forecaster.config import ActionSamplerParams, IdmParams
from scene_forecaster.kinematics import Action

INF = math.inf
STOPPED_SPEED = 0.1  # below this, a conflicting agent is treated as stopped (m/s)


@dataclass(frozen=True)
class AccelRange:
    a_min: float
    a_max: float
    source: str = ""


@dataclass(frozen=True)
class LaneRef:
    """Lane-relative pose: signed lateral offset, heading error, and the
    centerline's signed curvature at the matched arclength."""

    e: float
    psi: float
    kappa_ref: float


@dataclass(frozen=True)
class ConflictConstraint:
    """One conflicting agent, as seen from the subject's route.

    Distances are relative (measured from the current positions along the
    respective routes to the pair's conflict area); order is 'self_first'
    or 'other_first'.
    """

    order: str
    priority: bool            # subject holds right of way over this agent
    v_other: float
    d_entry_other: float
    d_exit_other: float
    d_entry_self: float
    d_exit_self: float


# ----------------------------------------------------------------------
# intelligent-driver-model bound (speed limit, preceding agent, stop lines)
# ----------------------------------------------------------------------


def idm_max_accel(v_self: float, v_lim: float, d_p: float, v_p: float, params: IdmParams) -> float:
    """Maximum reasonable acceleration for following/speed-keeping.

    d_p = inf gives the free-road law; a red light or stop sign is the
    same call with v_p = 0 and d_p the distance to the line.
    """
    if v_self < 0 or v_lim <= 0 or d_p <= 0:
        raise ValueError("require v_self >= 0, v_lim > 0, d_p > 0")
    free = (v_self / v_lim) ** params.delta
    if math.isinf(d_p):
        interaction = 0.0
    else:
        d_star = (
            params.d_d
            + v_self * params.T_d
            + v_self * (v_self - v_p) / (2.0 * math.sqrt(abs(params.a_d * params.b_d)))
        )
        # a negative desired gap would brake through the squared term
        d_star = max(d_star, 0.0)
        interaction = (d_star / d_p) ** 2
    return params.a_d * (1.0 - free - interaction)


# ----------------------------------------------------------------------
# one-step-then-brake plan
# ----------------------------------------------------------------------


def plan_arrival_time(a: float, v: float, d_target: float, dt: float, b_d: float) -> float:
    """Arrival time at d_target under the one-step-at-a-then-brake plan.

    Returns inf when the plan stops short of the target.
    """
    if d_target <= 0.0:
        return 0.0
    a = max(a, -v / dt)
    d1 = v * dt + 0.5 * a * dt * dt
    if d1 >= d_target:
        if a == 0.0:
            return d_target / v if v > 0 else INF
        disc = v * v + 2.0 * a * d_target
        if disc < 0:
            return INF
        return (-v + math.sqrt(disc)) / a if a != 0 else d_target / v
    v1 = max(v + a * dt, 0.0)
    if v1 <= 0.0:
        return INF
    rem = d_target - d1
    disc = v1 * v1 + 2.0 * b_d * rem
    if disc < 0:
        return INF  # stops while still short of the target
    return dt + (-v1 + math.sqrt(disc)) / b_d


def plan_reach_accel(v: float, d_target: float, t_target: float, dt: float, b_d: float) -> Optional[float]:
    """Acceleration whose one-step-then-brake plan reaches d_target exactly
    at t_target while still moving.

    Arrival time decreases with the first-step acceleration, so this is the
    upper bound for arriving no earlier than t_target and the lower bound
    for arriving no later.  Returns None when every plan arriving that late
    stops short of the target first.
    """
    if d_target <= 0.0 or t_target <= 0.0:
        raise ValueError("requires d_target > 0 and t_target > 0")
    if not math.isfinite(t_target):
        return None
    if t_target <= dt:
        return 2.0 * (d_target - v * t_target) / (t_target * t_target)
    t2 = t_target - dt
    a_lin = (d_target - v * t_target - 0.5 * b_d * t2 * t2) / (dt * t_target - 0.5 * dt * dt)
    v1 = v + a_lin * dt
    if v1 >= 0.0 and v1 + b_d * t2 >= 0.0:
        return a_lin
    return None


def plan_stop_accel(v: float, d_target: float, dt: float, b_d: float) -> float:
    """Largest first-step acceleration whose one-step-then-brake plan comes
    to a stop at (or before) d_target."""
    if d_target <= 0.0:
        raise ValueError("requires d_target > 0")
    c = 1.0 / (2.0 * abs(b_d))
    qa = c * dt * dt
    qb = 0.5 * dt * dt + 2.0 * c * v * dt
    qc = v * dt + c * v * v - d_target
    disc = qb * qb - 4.0 * qa * qc
    if disc >= 0.0:
        a_q = (-qb + math.sqrt(disc)) / (2.0 * qa)
        if v + a_q * dt >= 0.0:
            return a_q
    # stops within the very first step
    return -v * v / (2.0 * d_target) if v > 0.0 else 0.0


# ----------------------------------------------------------------------
# curvature bound
# ----------------------------------------------------------------------


def speed_cap_accel(
    v: float, d_cap: float, v_cap: float, dt: float, params: ActionSamplerParams, b_d: float
) -> float:
    """Largest acceleration that still allows slowing to a speed cap before
    reaching the point where it starts to apply; inf when it cannot bind."""
    if v < 0 or d_cap < 0:
        raise ValueError("require v >= 0 and d_cap >= 0")
    reachable = math.sqrt(v * v + 2.0 * params.a_vd_max * d_cap)
    if v_cap >= reachable:
        return INF
    disc = 4.0 * v * dt * b_d + dt * dt * b_d * b_d - 8.0 * b_d * d_cap + 4.0 * v_cap * v_cap
    if disc < 0.0:
        return params.a_vd_min
    return (-2.0 * v + dt * b_d + math.sqrt(disc)) / (2.0 * dt)


def curvature_max_accel(
    v: float, pairs: Sequence[tuple[float, float]], dt: float, params: ActionSamplerParams, b_d: float
) -> float:
    """Largest acceleration that still allows slowing to each curve's
    speed ceiling before reaching it; inf when nothing constrains."""
    if v < 0:
        raise ValueError("v must be >= 0")
    best = INF
    for d_rho, rho in pairs:
        if d_rho < 0 or rho <= 0 or math.isinf(rho):
            continue
        v_rho = math.sqrt(rho * params.a_lat_max)
        best = min(best, speed_cap_accel(v, d_rho, v_rho, dt, params, b_d))
    return best


def curvature_max_accel_arrays(
    v: float, d_rho: np.ndarray, v_rho: np.ndarray, dt: float, params: ActionSamplerParams, b_d: float
) -> float:
    """Vectorized variant over precomputed distance/speed-ceiling arrays."""
    if len(d_rho) == 0:
        return INF
    reachable_sq = v * v + 2.0 * params.a_vd_max * d_rho
    active = v_rho * v_rho < reachable_sq
    if not np.any(active):
        return INF
    d = d_rho[active]
    vr = v_rho[active]
    disc = 4.0 * v * dt * b_d + dt * dt * b_d * b_d - 8.0 * b_d * d + 4.0 * vr * vr
    a = np.where(disc < 0.0, params.a_vd_min, (-2.0 * v + dt * b_d + np.sqrt(np.maximum(disc, 0.0))) / (2.0 * dt))
    return float(np.min(a))


# ----------------------------------------------------------------------
# conflict bounds
# ----------------------------------------------------------------------


def conflict_accel_bounds(
    v: float,
    d_yield: Optional[float],
    constraints: Sequence[ConflictConstraint],
    params: ActionSamplerParams,
    dt: float,
    b_d: float,
) -> AccelRange:
    """Acceleration interval keeping the sampled passing orders feasible.

    Each constraint carries the subject-side and other-side distances to the
    pair's conflict area; d_yield is the distance to the subject's stop line
    if one lies ahead.  Agents the subject has priority over contribute
    nothing.
    """
    a_max = INF
    a_min = -INF
    for c in constraints:
        if c.priority:
            continue
        wait = c.order == "other_first"
        if not wait:
            # clear the conflict before the other agent arrives
            if c.d_exit_self <= 0.0:
                continue
            if c.d_entry_other > 0.0:
                if c.v_other <= STOPPED_SPEED:
                    continue
                t_lim = c.d_entry_other / c.v_other - params.t_gap
                if t_lim <= 0.0:
                    a_min = max(a_min, params.a_vd_max)
                    continue
                a = plan_reach_accel(v, c.d_exit_self, t_lim, dt, b_d)
                if a is None:
                    a = plan_stop_accel(v, c.d_exit_self, dt, b_d)
                a_min = max(a_min, a)
                continue
            if c.d_entry_self <= 0.0:
                # both inside the area: get out of the way
                a_min = max(a_min, params.a_vd_max)
                continue
            wait = True  # the other agent got there first after all
        # wait until the other agent has left, plus the time gap
        if c.d_entry_self <= 0.0 or c.v_other <= STOPPED_SPEED:
            a_max = min(a_max, _stop_bound(v, d_yield, c.d_entry_self, params))
            continue
        t_req = max(c.d_exit_other, 0.0) / c.v_other + params.t_gap
        a = plan_reach_accel(v, c.d_entry_self, t_req, dt, b_d)
        if a is None or a < params.a_vd_min:
            # cannot time the arrival while rolling, so hold at the line
            a = _stop_bound(v, d_yield, c.d_entry_self, params)
        a_max = min(a_max, a)
    return AccelRange(a_min, a_max, "conflict")


def _stop_bound(v: float, d_yield: Optional[float], d_entry: float, params: ActionSamplerParams) -> float:
    """Deceleration that stops the subject at its stop line (yield line if
    one lies ahead, else the conflict entry)."""
    target = None
    if d_yield is not None and d_yield > 0.05:
        target = d_yield
    elif d_entry > 0.05:
        target = d_entry
    if target is None:
        return params.a_vd_min
    return max(-v * v / (2.0 * target), params.a_vd_min)


# ----------------------------------------------------------------------
# range combination and sampling
# ----------------------------------------------------------------------


def combine_ranges(ranges: Sequence[AccelRange]) -> AccelRange:
    """Intersect influence intervals; on an empty intersection the range
    collapses to the strictest safety (upper) bound."""
    if not ranges:
        raise ValueError("need at least the vehicle-dynamics range")
    a_min = max(r.a_min for r in ranges)
    a_max = min(r.a_max for r in ranges)
    if a_min > a_max:
        return AccelRange(a_max, a_max, "collapsed")
    return AccelRange(a_min, a_max, "combined")


def truncated_normal_mean(mu: float, sigma: float, lo: float, hi: float) -> float:
    if hi <= lo:
        return lo
    alpha = (lo - mu) / sigma
    beta = (hi - mu) / sigma
    z = ndtr(beta) - ndtr(alpha)
    if z < 1e-12:
        return min(max(mu, lo), hi)
    phi_a = math.exp(-0.5 * alpha * alpha) / math.sqrt(2.0 * math.pi) if math.isfinite(alpha) else 0.0
    phi_b = math.exp(-0.5 * beta * beta) / math.sqrt(2.0 * math.pi) if math.isfinite(beta) else 0.0
    return mu + sigma * (phi_a - phi_b) / z


def truncated_normal_ppf(u, mu, sigma, lo, hi):
    """Inverse-CDF sampling of a truncated normal; array friendly."""
    alpha = (np.asarray(lo) - mu) / sigma
    beta = (np.asarray(hi) - mu) / sigma
    p_lo = ndtr(alpha)
    p_hi = ndtr(beta)
    span = np.maximum(p_hi - p_lo, 1e-300)
    x = mu + sigma * ndtri(p_lo + np.asarray(u) * span)
    return np.clip(x, lo, hi)


def yaw_rate_mean(lane_ref: LaneRef, v: float, params: ActionSamplerParams) -> float:
    """Lane-keeping yaw-rate: follow the centerline curvature, steer down
    heading error and lateral offset."""
    return lane_ref.kappa_ref * v - params.k_psi * lane_ref.psi - params.k_e * lane_ref.e / max(v, 1.0)


def sample_action(
    accel_range: AccelRange,
    lane_ref: LaneRef,
    v: float,
    params: ActionSamplerParams,
    rng: np.random.Generator,
) -> Action:
    """Draw (a, yaw rate); the acceleration mean sits sigma_a below the
    upper bound so progress is preferred but the bound is rarely hit."""
    lo, hi = accel_range.a_min, accel_range.a_max
    if not math.isfinite(hi):
        raise ValueError("cap a_max at the vehicle-dynamics bound before sampling")
    if hi <= lo:
        a = hi
    else:
        mu_a = hi - params.sigma_a
        a = float(truncated_normal_ppf(rng.uniform(), mu_a, params.sigma_a, lo, hi))
    thetadot = float(rng.normal(yaw_rate_mean(lane_ref, v, params), params.sigma_thetadot))
    return Action(a, thetadot)


def mean_action(
    accel_range: AccelRange, lane_ref: LaneRef, v: float, params: ActionSamplerParams
) -> Action:
    """Noise-free action: truncated-normal mean accel, mean yaw rate."""
    lo, hi = accel_range.a_min, accel_range.a_max
    if not math.isfinite(hi):
        raise ValueError("cap a_max at the vehicle-dynamics bound first")
    a = hi if hi <= lo else truncated_normal_mean(hi - params.sigma_a, params.sigma_a, lo, hi)
    return Action(float(a), yaw_rate_mean(lane_ref, v, params))
