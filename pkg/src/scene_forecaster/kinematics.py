"""Kinematic state, stochastic transition, measurement model, CTRV baseline.

The transition first advances the heading, then displaces the position
along the new heading, then updates speed; zero-mean Gaussian noise is
added afterwards.  Speed is kept non-negative by limiting the effective
acceleration to a full stop within the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from scene_forecaster.config import NoiseConfig
from scene_forecaster.geometry import wrap_angle

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KinematicState:
    x: float
    y: float
    theta: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v])


@dataclass(frozen=True)
class Action:
    a: float          # longitudinal acceleration (m/s^2)
    thetadot: float   # yaw rate (rad/s)


@dataclass(frozen=True)
class Measurement:
    agent_id: str
    t: float
    z_x: float
    z_y: float
    z_theta: float
    z_v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.z_x, self.z_y, self.z_theta, self.z_v])


def step(
    state: KinematicState,
    action: Action,
    dt: float,
    noise: NoiseConfig | None = None,
    rng: np.random.Generator | None = None,
) -> KinematicState:
    """One transition step; pass noise + rng to add process noise."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    a = max(action.a, -state.v / dt)  # never reverse through a stop
    theta = wrap_angle(state.theta + action.thetadot * dt)
    disp = state.v * dt + 0.5 * a * dt * dt
    x = state.x + disp * math.cos(theta)
    y = state.y + disp * math.sin(theta)
    v = state.v + a * dt
    if noise is not None and rng is not None:
        n = rng.normal(size=4)
        x += noise.sigma_x * n[0]
        y += noise.sigma_y * n[1]
        theta = wrap_angle(theta + noise.sigma_theta * n[2])
        v += noise.sigma_v * n[3]
    return KinematicState(x, y, theta, max(v, 0.0))


def step_arrays(
    kin: np.ndarray, a: np.ndarray, thetadot: np.ndarray, dt: float,
    noise_std: np.ndarray | None = None, normals: np.ndarray | None = None,
) -> np.ndarray:
    """Vectorized transition over stacked [x, y, theta, v] rows.

    Same math as :func:`step`; noise_std is the 4-vector of process sigmas
    and normals must match kin's leading shape plus a trailing 4.
    """
    v = kin[..., 3]
    a = np.maximum(a, -v / dt)
    theta = kin[..., 2] + thetadot * dt
    disp = v * dt + 0.5 * a * dt * dt
    out = np.empty_like(kin)
    out[..., 0] = kin[..., 0] + disp * np.cos(theta)
    out[..., 1] = kin[..., 1] + disp * np.sin(theta)
    out[..., 2] = theta
    out[..., 3] = v + a * dt
    if noise_std is not None and normals is not None:
        out += noise_std * normals
    out[..., 2] = -((-out[..., 2] + np.pi) % (2.0 * np.pi) - np.pi)
    out[..., 3] = np.maximum(out[..., 3], 0.0)
    return out


def measurement_logpdf(state: KinematicState, z: Measurement, noise: NoiseConfig) -> float:
    """Log-density of the measurement given the state; heading wrapped."""
    sigmas = (noise.sigma_zx, noise.sigma_zy, noise.sigma_ztheta, noise.sigma_zv)
    if any(s <= 0 for s in sigmas):
        raise ValueError("measurement sigmas must be > 0")
    res = (
        z.z_x - state.x,
        z.z_y - state.y,
        wrap_angle(z.z_theta - state.theta),
        z.z_v - state.v,
    )
    out = 0.0
    for r, s in zip(res, sigmas):
        out += -0.5 * (r / s) ** 2 - math.log(s) - 0.5 * LOG_2PI
    return out


def measurement_logpdf_arrays(kin: np.ndarray, z: np.ndarray, noise: NoiseConfig) -> np.ndarray:
    """Vectorized log-density for stacked states against one measurement."""
    sig = np.array([noise.sigma_zx, noise.sigma_zy, noise.sigma_ztheta, noise.sigma_zv])
    res = z - kin
    res[..., 2] = -((-res[..., 2] + np.pi) % (2.0 * np.pi) - np.pi)
    quad = -0.5 * np.sum((res / sig) ** 2, axis=-1)
    return quad - np.sum(np.log(sig)) - 2.0 * LOG_2PI


def ctrv_predict(state: KinematicState, thetadot: float, dt: float, steps: int) -> list[KinematicState]:
    """Closed-form constant-turn-rate-and-velocity rollout."""
    out = []
    v, th0 = state.v, state.theta
    for k in range(1, steps + 1):
        t = k * dt
        if abs(thetadot) < 1e-6:
            x = state.x + v * t * math.cos(th0)
            y = state.y + v * t * math.sin(th0)
            th = th0
        else:
            th = th0 + thetadot * t
            x = state.x + (v / thetadot) * (math.sin(th) - math.sin(th0))
            y = state.y + (v / thetadot) * (-math.cos(th) + math.cos(th0))
        out.append(KinematicState(x, y, wrap_angle(th), v))
    return out


class YawRateTracker:
    """Per-agent yaw-rate estimate from finite-differenced headings,
    smoothed with an exponential moving average."""

    def __init__(self, alpha: float = 0.5):
        self.alpha = alpha
        self._last_theta: dict[str, float] = {}
        self._rate: dict[str, float] = {}

    def update(self, agent_id: str, theta: float, dt: float) -> float:
        prev = self._last_theta.get(agent_id)
        self._last_theta[agent_id] = theta
        if prev is None:
            self._rate[agent_id] = 0.0
            return 0.0
        raw = wrap_angle(theta - prev) / dt
        smoothed = self.alpha * raw + (1.0 - self.alpha) * self._rate.get(agent_id, 0.0)
        self._rate[agent_id] = smoothed
        return smoothed

    def rate(self, agent_id: str) -> float:
        return self._rate.get(agent_id, 0.0)
