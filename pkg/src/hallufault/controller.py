"""Gap-acceptance control: occupancy prediction, candidate windows, window choice, pedals."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .perception import PerceptionFrame
from .world import AXIS_X, ControllerParams, ScenarioConfig, VehicleState

INF = math.inf
# distance kept between the AV front and the zone entry edge when halting
STOP_BUFFER = 2.0


@dataclass(frozen=True)
class OccupancyInterval:
    t_enter: float
    t_exit: float
    source_id: str


@dataclass(frozen=True)
class CandidateWindow:
    t_open: float
    t_close: float
    # True when the gap runs to the end of the planning horizon (nothing predicted after it)
    open_ended: bool = False
    # True when the gap is already open at planning time, so t_open is just "now"
    open_start: bool = False

    @property
    def t_center(self) -> float:
        return 0.5 * (self.t_open + self.t_close)

    @property
    def width(self) -> float:
        return self.t_close - self.t_open


@dataclass(frozen=True)
class ControlCommand:
    throttle: float = 0.0
    brake: float = 0.0
    steering: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.throttle <= 1.0 and 0.0 <= self.brake <= 1.0 and -1.0 <= self.steering <= 1.0):
            raise ValueError(f"command out of range: {self}")
        if self.throttle * self.brake != 0.0:
            raise ValueError("throttle and brake pressed together")


def travel_time(distance: float, v0: float, accel: float, vmax: float) -> float:
    """Time to cover ``distance`` accelerating at ``accel`` up to ``vmax``, then cruising.

    Speeds above ``vmax`` are held constant.
    """
    if distance <= 0:
        return 0.0
    if v0 >= vmax or accel <= 0:
        return distance / v0 if v0 > 0 else INF
    t_ramp = (vmax - v0) / accel
    d_ramp = 0.5 * (v0 + vmax) * t_ramp
    if distance <= d_ramp:
        return (-v0 + math.sqrt(v0 * v0 + 2.0 * accel * distance)) / accel
    return t_ramp + (distance - d_ramp) / vmax


def predict_occupancy(
    frame: PerceptionFrame,
    geometry: ScenarioConfig,
    margin: float,
    now: float | None = None,
) -> list[OccupancyInterval]:
    """Predicted [enter - margin, exit + margin] of each perceived car in the conflict zone.

    Objects are taken to be where the frame says they are at time ``now``
    (default: the frame timestamp), so a stale frame is consumed as current.
    Cars that already left the zone get a back-dated interval; it lies in the
    past but still marks where the gap behind them opened.
    """
    t0 = frame.time if now is None else now
    h = geometry.zone_half
    out = []
    for obj in frame.objects:
        along = obj.position.x if obj.heading == AXIS_X else obj.position.z
        if along >= h:
            if obj.speed <= 0:
                continue
            t_out = t0 - (along - h) / obj.speed
            out.append(OccupancyInterval(t_out - 2 * h / obj.speed - margin, t_out + margin, obj.source_id))
            continue
        t_in = travel_time(-h - along, obj.speed, geometry.traffic_accel, geometry.traffic_vmax)
        t_out = travel_time(h - along, obj.speed, geometry.traffic_accel, geometry.traffic_vmax)
        if t_in == INF:
            continue
        out.append(OccupancyInterval(t0 + t_in - margin, t0 + t_out + margin, obj.source_id))
    return out


def candidate_windows(
    occupancy: Sequence[OccupancyInterval], horizon: float, now: float = 0.0
) -> list[CandidateWindow]:
    """Gaps in the union of occupancy intervals that are still open after ``now``.

    A gap whose opening edge is a past interval keeps that edge, so its centre
    does not move as time passes. Only a gap with no interval before it at all
    is reported as ``open_start`` (its ``t_open`` is then ``now``).
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    end = now + horizon
    spans = sorted((o.t_enter, o.t_exit) for o in occupancy if o.t_enter < end)
    windows = []
    cursor = -INF
    for lo, hi in spans:
        if lo > cursor and lo > now:
            if cursor == -INF:
                windows.append(CandidateWindow(now, lo, open_start=True))
            else:
                windows.append(CandidateWindow(cursor, lo))
        cursor = max(cursor, hi)
    if cursor == -INF:
        windows.append(CandidateWindow(now, end, open_ended=True, open_start=True))
    elif cursor < end:
        windows.append(CandidateWindow(cursor, end, open_ended=True))
    return windows


def earliest_arrival(av: VehicleState, distance: float, limits: ScenarioConfig) -> float:
    return travel_time(distance, av.speed, limits.av_accel_max, limits.av_vmax)


def latest_arrival(av: VehicleState, distance: float, limits: ScenarioConfig) -> float:
    """Arrival at the zone centre under full braking; infinite if the AV can stop before the zone."""
    v, b = av.speed, limits.av_brake_max
    to_entry = distance - limits.zone_half - av.length / 2
    if v * v / (2 * b) <= to_entry:
        return INF
    disc = v * v - 2 * b * distance
    if disc < 0:
        return INF
    return (v - math.sqrt(disc)) / b


def window_target(window: CandidateWindow, min_width: float, earliest: float) -> float:
    """Arrival time the AV aims for inside ``window``.

    Bounded gaps are entered at their centre. A gap with only one real edge has
    no meaningful centre (it would slide with the clock or the horizon), so the
    AV aims ``min_width / 2`` inside the edge that exists.
    """
    if window.open_ended and window.open_start:
        return earliest
    if window.open_ended:
        return max(window.t_open + 0.5 * min_width, earliest)
    if window.open_start:
        return window.t_close - 0.5 * min_width
    return window.t_center


def select_window(
    windows: Sequence[CandidateWindow],
    av: VehicleState,
    limits: ScenarioConfig,
    min_width: float,
    now: float = 0.0,
) -> CandidateWindow | None:
    distance = -av.position.z
    t_early = now + earliest_arrival(av, distance, limits)
    t_late = now + latest_arrival(av, distance, limits)
    for w in windows:
        if w.width < min_width:
            continue
        target = window_target(w, min_width, t_early)
        if t_early <= target <= t_late and target > now:
            return w
    return None


def committed(av: VehicleState, geometry: ScenarioConfig) -> bool:
    """The AV's front has passed the conflict-zone entry edge."""
    return av.position.z + av.length / 2 >= -geometry.zone_half


def longitudinal_control(
    av: VehicleState,
    target: CandidateWindow | None,
    geometry: ScenarioConfig,
    now: float = 0.0,
    params: ControllerParams | None = None,
) -> ControlCommand:
    params = params or geometry.controller
    if committed(av, geometry):
        return ControlCommand(throttle=1.0)
    distance = -av.position.z
    v = av.speed
    t_arrive = None
    if target is not None:
        t_arrive = window_target(target, params.min_width, now + earliest_arrival(av, distance, geometry))
    if t_arrive is None or t_arrive <= now:
        # no usable window: come to rest before the conflict zone
        if v <= 0.0:
            return ControlCommand(brake=1.0)
        to_stop = distance - geometry.zone_half - av.length / 2 - STOP_BUFFER
        decel = max(v * v / (2 * to_stop) if to_stop > 0 else INF, params.gain * v)
        return ControlCommand(brake=min(decel / geometry.av_brake_max, 1.0))
    v_req = distance / (t_arrive - now)
    dv = params.gain * (v_req - v)
    if dv > 0:
        return ControlCommand(throttle=min(dv / geometry.av_accel_max, 1.0))
    if dv < 0:
        return ControlCommand(brake=min(-dv / geometry.av_brake_max, 1.0))
    return ControlCommand()


class Controller:
    """Per-run controller: re-plans every cycle and latches once committed."""

    def __init__(self, geometry: ScenarioConfig):
        self.geometry = geometry
        self.params = geometry.controller
        self.is_committed = False
        self.target: CandidateWindow | None = None

    def step(self, frame: PerceptionFrame, av: VehicleState, now: float) -> ControlCommand:
        g, p = self.geometry, self.params
        if self.is_committed or committed(av, g):
            self.is_committed = True
            self.target = None
            return ControlCommand(throttle=1.0)
        occ = predict_occupancy(frame, g, p.margin, now=now)
        windows = candidate_windows(occ, p.horizon, now)
        self.target = select_window(windows, av, g, p.min_width, now)
        return longitudinal_control(av, self.target, g, now, p)
