"""Scenario geometry and longitudinal kinematics for the one-way intersection.

The AV drives along +z towards the origin; crossing traffic drives along +x on
the transverse street (z = 0) and always has the right of way.
"""
from __future__ import annotations

import dataclasses
import json
import math
import random
from dataclasses import dataclass, field
from typing import Any

AXIS_Z = "+z"
AXIS_X = "+x"
AV_ID = "AV"


class ConfigurationError(ValueError):
    """Raised for scenario or controller parameters that violate their invariants."""


@dataclass(frozen=True)
class Vec2:
    x: float
    z: float

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.z + other.z)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.z - other.z)

    def norm(self) -> float:
        return math.hypot(self.x, self.z)


@dataclass(frozen=True)
class VehicleState:
    id: str
    position: Vec2
    speed: float
    heading: str
    length: float = 4.5
    width: float = 1.8

    def __post_init__(self):
        if self.heading not in (AXIS_X, AXIS_Z):
            raise ValueError(f"heading must be {AXIS_X!r} or {AXIS_Z!r}, got {self.heading!r}")
        if self.speed < 0 or self.length <= 0 or self.width <= 0:
            raise ValueError(f"invalid vehicle state for {self.id}")

    @property
    def along(self) -> float:
        """Coordinate along the vehicle's own travel axis."""
        return self.position.z if self.heading == AXIS_Z else self.position.x

    def footprint(self) -> tuple[float, float, float, float]:
        """Axis-aligned rectangle as (x_min, x_max, z_min, z_max)."""
        if self.heading == AXIS_Z:
            hx, hz = self.width / 2, self.length / 2
        else:
            hx, hz = self.length / 2, self.width / 2
        p = self.position
        return (p.x - hx, p.x + hx, p.z - hz, p.z + hz)


@dataclass(frozen=True)
class ControllerParams:
    margin: float = 0.35
    min_width: float = 1.0
    gain: float = 1.0
    horizon: float = 60.0

    def validate(self) -> None:
        if self.margin < 0 or self.min_width < 0 or self.gain <= 0 or self.horizon <= 0:
            raise ConfigurationError(f"invalid controller parameters: {self}")


@dataclass(frozen=True)
class ScenarioConfig:
    av_start_distance: float = 250.0
    traffic_start_distance: float = 270.0
    traffic_vmax: float = 15.0
    av_vmax: float = 16.7
    n_traffic: int = 5
    traffic_headway: float = 26.0
    traffic_accel: float = 2.0
    av_accel_max: float = 1.4
    av_brake_max: float = 6.0
    lane_width: float = 3.5
    vehicle_length: float = 4.5
    vehicle_width: float = 1.8
    dt: float = 0.1
    t_max: float = 120.0
    # per-run variability of the traffic (drawn from the run seed): gap jitter in
    # meters, relative spread of each car's cruise speed, and how often (per
    # second, per car) a driver picks a new cruise speed
    start_jitter: float = 5.0
    vmax_jitter: float = 0.05
    speed_change_rate: float = 0.15
    controller: ControllerParams = field(default_factory=ControllerParams)

    def __post_init__(self):
        if isinstance(self.controller, dict):
            object.__setattr__(self, "controller", ControllerParams(**self.controller))

    @property
    def zone_half(self) -> float:
        """Half side of the square conflict zone centred at the origin."""
        return (self.lane_width + self.vehicle_length) / 2

    def validate(self) -> None:
        positive = (
            "av_start_distance", "traffic_start_distance", "traffic_vmax", "av_vmax",
            "traffic_headway", "traffic_accel", "av_accel_max", "av_brake_max",
            "lane_width", "vehicle_length", "vehicle_width", "dt", "t_max",
        )
        for name in positive:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be a finite positive number, got {value!r}")
        if not isinstance(self.n_traffic, int) or self.n_traffic < 0:
            raise ConfigurationError(f"n_traffic must be a non-negative integer, got {self.n_traffic!r}")
        if self.start_jitter < 0 or not 0 <= self.vmax_jitter < 1 or self.speed_change_rate < 0:
            raise ConfigurationError("start_jitter and speed_change_rate must be >= 0, vmax_jitter in [0, 1)")
        if self.n_traffic > 1 and self.traffic_headway - self.start_jitter < self.vehicle_length:
            raise ConfigurationError("traffic_headway - start_jitter must exceed vehicle_length")
        self.controller.validate()

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
        ctrl = data.get("controller", {})
        if not isinstance(ctrl, dict):
            raise ConfigurationError("controller must be a JSON object")
        ctrl_known = {f.name for f in dataclasses.fields(ControllerParams)}
        bad = set(ctrl) - ctrl_known
        if bad:
            raise ConfigurationError(f"unknown controller key(s): {', '.join(sorted(bad))}")
        config = cls(**{**data, "controller": ControllerParams(**ctrl)})
        config.validate()
        return config

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class WorldState:
    time: float
    av: VehicleState
    traffic: tuple[VehicleState, ...]
    # actual per-car cruise speed; the controller only knows ScenarioConfig.traffic_vmax
    traffic_vmax: tuple[float, ...] = ()


def car_id(k: int) -> str:
    return f"Car{k}"


def make_scenario(config: ScenarioConfig, rng: random.Random | None = None) -> WorldState:
    """Build the initial world: AV at rest 250 m short of the junction, a platoon at rest on the left.

    With ``rng`` given and non-zero jitter in ``config``, each crossing car's
    start distance and top speed are perturbed uniformly.
    """
    config.validate()
    L, W = config.vehicle_length, config.vehicle_width
    av = VehicleState(AV_ID, Vec2(0.0, -config.av_start_distance), 0.0, AXIS_Z, L, W)
    cars = []
    vmaxes = []
    jitter = rng is not None and config.start_jitter > 0
    start = config.traffic_start_distance
    for k in range(1, config.n_traffic + 1):
        if k > 1:
            start += config.traffic_headway
        # jitter each gap (not each position) so the platoon keeps its order
        if jitter:
            start += rng.uniform(-config.start_jitter, config.start_jitter)
        vmax = draw_cruise_speed(config, rng)
        cars.append(VehicleState(car_id(k), Vec2(-start, 0.0), 0.0, AXIS_X, L, W))
        vmaxes.append(vmax)
    return WorldState(0.0, av, tuple(cars), tuple(vmaxes))


def draw_cruise_speed(config: ScenarioConfig, rng: random.Random | None) -> float:
    if rng is None or not config.vmax_jitter:
        return config.traffic_vmax
    return config.traffic_vmax * (1.0 + rng.uniform(-config.vmax_jitter, config.vmax_jitter))


def redraw_cruise_speeds(
    vmaxes: tuple[float, ...], config: ScenarioConfig, rng: random.Random
) -> tuple[float, ...]:
    """Each driver independently picks a new cruise speed with probability rate * dt."""
    p = config.speed_change_rate * config.dt
    if p <= 0:
        return vmaxes
    out = []
    for v in vmaxes:
        # one uniform per car per cycle keeps the stream aligned whatever the outcome
        if rng.random() < p:
            v = draw_cruise_speed(config, rng)
        out.append(v)
    return tuple(out)


def step_vehicle(state: VehicleState, accel: float, dt: float, vmax: float) -> VehicleState:
    """Advance one cycle with the speed clamped to [0, vmax] and trapezoidal displacement."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v0 = state.speed
    v1 = min(max(v0 + accel * dt, 0.0), vmax)
    ds = 0.5 * (v0 + v1) * dt
    p = state.position
    pos = Vec2(p.x, p.z + ds) if state.heading == AXIS_Z else Vec2(p.x + ds, p.z)
    return dataclasses.replace(state, position=pos, speed=v1)


# deceleration of a crossing car that lifts off the throttle to settle at a lower cruise speed
TRAFFIC_COAST_DECEL = 0.5


def traffic_accel_policy(state: VehicleState, config: ScenarioConfig, vmax: float | None = None) -> float:
    # right-of-way traffic never brakes; above its cruise speed it only coasts
    limit = config.traffic_vmax if vmax is None else vmax
    if state.speed < limit:
        return config.traffic_accel
    if state.speed > limit:
        return -TRAFFIC_COAST_DECEL
    return 0.0


def step_traffic(state: VehicleState, config: ScenarioConfig, vmax: float) -> VehicleState:
    """One cycle of a crossing car settling towards ``vmax`` from either side."""
    accel = traffic_accel_policy(state, config, vmax)
    if accel >= 0:
        return step_vehicle(state, accel, config.dt, vmax)
    # coasting: integrate without the upper clamp, but never drop below the new cruise speed
    v1 = max(state.speed + accel * config.dt, vmax)
    ds = 0.5 * (state.speed + v1) * config.dt
    return dataclasses.replace(state, position=Vec2(state.position.x + ds, state.position.z), speed=v1)
