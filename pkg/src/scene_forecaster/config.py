"""Run configuration: every tunable constant, with JSON round-tripping.

Defaults follow the standard evaluation parameter set; constants the
reference parameter table does not cover (time gap, vehicle-dynamics
range, forecast horizon, lane-keeping gains) are exposed here so runs
stay declarative.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


@dataclass(frozen=True)
class IdmParams:
    """Car-following parameters: spacing, headway, accel/brake comfort."""

    d_d: float = 2.0      # minimum spacing (m)
    T_d: float = 0.1      # desired time headway (s)
    a_d: float = 0.7      # comfortable acceleration (m/s^2)
    b_d: float = -0.5     # comfortable braking deceleration (m/s^2, < 0)
    delta: float = 4.0    # acceleration exponent

    def __post_init__(self) -> None:
        if self.d_d <= 0 or self.T_d < 0 or self.a_d <= 0 or self.b_d >= 0 or self.delta <= 0:
            raise ValueError(f"invalid IDM parameters: {self}")


@dataclass(frozen=True)
class NoiseConfig:
    """Process noise of the transition model and the measurement model."""

    sigma_x: float = 0.5
    sigma_y: float = 0.5
    sigma_theta: float = 0.05
    sigma_v: float = 1.5
    sigma_zx: float = 15.0
    sigma_zy: float = 15.0
    sigma_ztheta: float = 3.14
    sigma_zv: float = 15.0

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")


@dataclass(frozen=True)
class ActionSamplerParams:
    """Bounds and spreads for sampling longitudinal accel and yaw rate."""

    sigma_a: float = 1.5          # accel sampling spread (m/s^2)
    sigma_thetadot: float = 0.05  # yaw-rate sampling spread (rad/s)
    a_lat_max: float = 2.0        # desired max lateral acceleration (m/s^2)
    a_vd_min: float = -6.0        # vehicle-dynamics accel range (m/s^2)
    a_vd_max: float = 3.0
    t_gap: float = 2.0            # minimum time gap at conflict areas (s)
    k_psi: float = 1.5            # lane-keeping heading gain (1/s)
    k_e: float = 0.6              # lane-keeping offset gain (1/s)

    def __post_init__(self) -> None:
        if self.sigma_a <= 0 or self.sigma_thetadot <= 0:
            raise ValueError("sampling spreads must be > 0")
        if not (self.a_vd_min < 0 < self.a_vd_max):
            raise ValueError("vehicle-dynamics range must straddle 0")
        if self.t_gap <= 0:
            raise ValueError("t_gap must be > 0")


@dataclass(frozen=True)
class RunConfig:
    """Complete parameter set for estimation, forecasting, and evaluation."""

    dt: float = 0.2               # filter/simulation step (s)
    n_particles: int = 1000
    l_h: float = 30.0             # route enumeration horizon (m)
    idm: IdmParams = field(default_factory=IdmParams)
    sampler: ActionSamplerParams = field(default_factory=ActionSamplerParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    p_rej: float = 0.001          # per-particle rejuvenation probability
    sigma_rej: tuple[float, float, float, float] = (1.0, 1.0, 0.03, 1.0)
    horizon: float = 5.0          # forecast horizon T (s)
    p_floor: float = 1e-3         # hypothesis pruning floor
    sigma_eval: float = 1.0       # likelihood-metric kernel width (m)
    seed: int = 0
    vehicle_length: float = 4.0   # metadata only, used for conflict exit checks

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.n_particles < 1 or self.l_h <= 0:
            raise ValueError("dt, n_particles, l_h must be positive")
        if not (0.0 <= self.p_rej <= 1.0):
            raise ValueError("p_rej must be a probability")
        if len(self.sigma_rej) != 4 or any(s < 0 for s in self.sigma_rej):
            raise ValueError("sigma_rej must be four non-negative spreads")
        if self.horizon < 0 or self.p_floor < 0 or self.sigma_eval <= 0:
            raise ValueError("invalid horizon/p_floor/sigma_eval")

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = dict(data)
        for key, sub in (("idm", IdmParams), ("sampler", ActionSamplerParams), ("noise", NoiseConfig)):
            if key in kwargs and isinstance(kwargs[key], dict):
                kwargs[key] = sub(**kwargs[key])
        if "sigma_rej" in kwargs:
            kwargs["sigma_rej"] = tuple(kwargs["sigma_rej"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
