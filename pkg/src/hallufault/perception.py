"""Ground-truth bypass perception with a virtual field-of-view filter."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .world import AXIS_Z, Vec2, VehicleState, WorldState

PHANTOM_PREFIX = "Phantom:"


class BearingError(ValueError):
    pass


@dataclass(frozen=True)
class PerceivedObject:
    source_id: str
    position: Vec2
    speed: float
    heading: str

    @property
    def is_phantom(self) -> bool:
        return self.source_id.startswith(PHANTOM_PREFIX)


@dataclass(frozen=True)
class PerceptionFrame:
    cycle: int
    time: float
    objects: tuple[PerceivedObject, ...]

    def find(self, source_id: str) -> PerceivedObject | None:
        for obj in self.objects:
            if obj.source_id == source_id:
                return obj
        return None


@dataclass(frozen=True)
class FovConfig:
    half_angle: float = 90.0
    range: float = math.inf

    def __post_init__(self):
        if not 0 < self.half_angle <= 180:
            raise ValueError(f"half_angle must lie in (0, 180], got {self.half_angle}")
        if not self.range > 0:
            raise ValueError(f"range must be positive, got {self.range}")


def bearing(av: VehicleState, p: Vec2) -> float:
    """Signed angle in degrees from the AV heading to the ray AV->p, left positive, in (-180, 180]."""
    dx = p.x - av.position.x
    dz = p.z - av.position.z
    if dx == 0.0 and dz == 0.0:
        raise BearingError("bearing undefined for a point coincident with the AV")
    if av.heading == AXIS_Z:
        fwd, left = dz, -dx
    else:
        fwd, left = dx, dz
    angle = math.degrees(math.atan2(left, fwd))
    return 180.0 if angle == -180.0 else angle


def sense(world: WorldState, fov: FovConfig, cycle: int) -> PerceptionFrame:
    av = world.av
    objects = []
    for car in world.traffic:
        d = (car.position - av.position).norm()
        if d > fov.range:
            continue
        if d > 0 and abs(bearing(av, car.position)) > fov.half_angle:
            continue
        objects.append(PerceivedObject(car.id, car.position, car.speed, car.heading))
    return PerceptionFrame(cycle, world.time, tuple(objects))
