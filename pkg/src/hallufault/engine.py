"""Single-run simulation loop: sense -> inject -> control -> actuate, until a terminal outcome."""
from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

from .controller import ControlCommand, Controller
from .hallucination import HIConfig, HIState, apply
from .perception import FovConfig, sense
from .world import (
    ScenarioConfig, VehicleState, WorldState, make_scenario, redraw_cruise_speeds, step_traffic, step_vehicle,
)

MASK64 = (1 << 64) - 1
N_LOGGED_CARS = 5


class Outcome(str, Enum):
    Crossed = "Crossed"
    Collision = "Collision"
    Halted = "Halted"


class InvalidRun(RuntimeError):
    """Simulator produced a non-finite state; the run must be discarded."""


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix_seed(*parts: int) -> int:
    """Order-sensitive 64-bit hash of integers, used to derive independent per-run streams."""
    h = 0
    for p in parts:
        h = splitmix64(h ^ (p & MASK64))
    return h


def log_header(n_traffic: int) -> list[str]:
    cols = ["time_ms", "x_av", "z_av", "v_av", "steering", "throttle", "brake"]
    for k in range(1, max(N_LOGGED_CARS, n_traffic) + 1):
        cols += [f"x_{k}", f"z_{k}", f"v_{k}"]
    return cols


def scenario_hash(scenario: ScenarioConfig) -> str:
    return hashlib.sha256(scenario.to_json().encode()).hexdigest()[:16]


@dataclass
class RunLog:
    seed: int
    hi: HIConfig
    scenario_hash: str
    n_traffic: int
    rows: list[tuple] = field(default_factory=list)

    @property
    def header(self) -> list[str]:
        return log_header(self.n_traffic)

    def to_csv(self) -> str:
        width = len(self.header)
        buf = io.StringIO()
        buf.write(",".join(self.header) + "\n")
        for row in self.rows:
            cells = [str(row[0])] + [repr(float(v)) for v in row[1:]]
            cells += [""] * (width - len(cells))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed: int = 0, hi: HIConfig | None = None, scenario_hash: str = "") -> "RunLog":
        lines = text.splitlines()
        header = lines[0].split(",")
        n = (len(header) - 7) // 3
        rows = []
        for line in lines[1:]:
            cells = line.split(",")
            values = [int(cells[0])] + [float(c) for c in cells[1:] if c != ""]
            rows.append(tuple(values))
        n_traffic = max((len(r) - 7) // 3 for r in rows) if rows else n
        return cls(seed, hi or HIConfig.off(), scenario_hash, n_traffic, rows)

    def car_positions(self, row: tuple) -> list[tuple[float, float]]:
        cars = row[7:]
        return [(cars[i], cars[i + 1]) for i in range(0, len(cars) - 2, 3)]


@dataclass
class RunResult:
    log: RunLog
    outcome: Outcome | None
    min_distance: float
    valid: bool = True
    error: str = ""

    def sidecar(self, **extra) -> dict:
        md = self.min_distance
        out = {
            "seed": self.log.seed,
            "hi": self.log.hi.to_dict(),
            "scenario_hash": self.log.scenario_hash,
            "outcome": self.outcome.value if self.outcome else None,
            "min_distance": md if math.isfinite(md) else None,
            "valid": self.valid,
        }
        if self.error:
            out["error"] = self.error
        out.update(extra)
        return out

    def write(self, prefix: str | Path, **extra) -> tuple[Path, Path]:
        prefix = Path(prefix)
        csv_path = prefix.with_name(prefix.name + ".csv")
        json_path = prefix.with_name(prefix.name + ".json")
        csv_path.write_text(self.log.to_csv(), encoding="utf-8")
        json_path.write_text(json.dumps(self.sidecar(**extra), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return csv_path, json_path


def _overlap(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1] and a[2] <= b[3] and b[2] <= a[3]


def detect_collision(world: WorldState) -> bool:
    """Closed overlap of the AV footprint with any real crossing car's footprint."""
    fp = world.av.footprint()
    return any(_overlap(fp, car.footprint()) for car in world.traffic)


def min_distance(log: RunLog | Sequence[tuple]) -> float:
    rows = log.rows if isinstance(log, RunLog) else log
    if not rows:
        raise ValueError("min_distance of an empty log")
    best = math.inf
    for row in rows:
        ax, az = row[1], row[2]
        cars = row[7:]
        for i in range(0, len(cars) - 2, 3):
            d = math.hypot(cars[i] - ax, cars[i + 1] - az)
            if d < best:
                best = d
    return best


def crossed(av: VehicleState, scenario: ScenarioConfig) -> bool:
    return av.position.z - av.length / 2 > scenario.zone_half


def _row(time_ms: int, world: WorldState, cmd: ControlCommand) -> tuple:
    av = world.av
    row = [time_ms, av.position.x, av.position.z, av.speed, cmd.steering, cmd.throttle, cmd.brake]
    for car in world.traffic:
        row += [car.position.x, car.position.z, car.speed]
    return tuple(row)


def _finite(world: WorldState) -> bool:
    vs = [world.av] + list(world.traffic)
    return all(math.isfinite(v.position.x) and math.isfinite(v.position.z) and math.isfinite(v.speed) for v in vs)


def actuate(
    world: WorldState,
    cmd: ControlCommand,
    scenario: ScenarioConfig,
    time: float,
    rng: random.Random | None = None,
) -> WorldState:
    dt = scenario.dt
    accel = cmd.throttle * scenario.av_accel_max - cmd.brake * scenario.av_brake_max
    av = step_vehicle(world.av, accel, dt, scenario.av_vmax)
    vmaxes = world.traffic_vmax or (scenario.traffic_vmax,) * len(world.traffic)
    if rng is not None:
        vmaxes = redraw_cruise_speeds(vmaxes, scenario, rng)
    cars = tuple(step_traffic(car, scenario, vmax) for car, vmax in zip(world.traffic, vmaxes))
    return WorldState(time, av, cars, vmaxes)


def run(
    scenario: ScenarioConfig,
    hi: HIConfig,
    seed: int,
    fov: FovConfig | None = None,
) -> RunResult:
    """Simulate one execution; identical (scenario, hi, seed) give identical logs."""
    scenario.validate()
    fov = fov or FovConfig()
    seed &= MASK64
    world_rng = random.Random(mix_seed(seed, 1))
    world = make_scenario(scenario, world_rng)
    state = HIState(hi, random.Random(mix_seed(seed, 2)))
    controller = Controller(scenario)
    log = RunLog(seed, hi, scenario_hash(scenario), scenario.n_traffic)
    dt = scenario.dt
    idle = ControlCommand()
    outcome = None
    cycle = 0
    try:
        while True:
            t = cycle * dt
            time_ms = round(t * 1000)
            if not _finite(world):
                raise InvalidRun(f"non-finite state at t={t:.3f}s")
            if detect_collision(world):
                outcome = Outcome.Collision
            elif crossed(world.av, scenario):
                outcome = Outcome.Crossed
            elif t >= scenario.t_max - 1e-9:
                outcome = Outcome.Halted
            if outcome is not None:
                log.rows.append(_row(time_ms, world, idle))
                break
            frame = apply(sense(world, fov, cycle), state, world.av)
            cmd = controller.step(frame, world.av, t)
            log.rows.append(_row(time_ms, world, cmd))
            cycle += 1
            world = actuate(world, cmd, scenario, cycle * dt, world_rng)
    except (InvalidRun, ArithmeticError, ValueError) as exc:
        return RunResult(log, None, math.nan, valid=False, error=str(exc))
    return RunResult(log, outcome, min_distance(log), valid=True)

