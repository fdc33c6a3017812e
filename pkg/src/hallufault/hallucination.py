"""Hallucination injection (HI): per-cycle activation and the six perception transforms.

Category labels (types, domains, configurations, persistence) are kept verbatim
so that configs, logs and the analysis dataset share one vocabulary.
"""
from __future__ import annotations

import dataclasses
import json
import math
import random
import re
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .perception import PHANTOM_PREFIX, BearingError, PerceivedObject, PerceptionFrame, bearing
from .world import AXIS_X, Vec2, VehicleState


class HallucinationType(str, Enum):
    LinDrift = "LinDrift"
    Phant = "Phant"
    Missed = "Missed"
    AngDrift = "AngDrift"
    Blind = "Blind"
    Latency = "Latency"


class AffectedDomain(str, Enum):
    Pos = "Pos"
    Rec = "Rec"
    Time = "Time"


class Persistence(str, Enum):
    Baseline = "Baseline"
    Intermittent = "Intermittent"
    Permanent = "Permanent"


DOMAIN_OF = {
    HallucinationType.LinDrift: AffectedDomain.Pos,
    HallucinationType.AngDrift: AffectedDomain.Pos,
    HallucinationType.Phant: AffectedDomain.Rec,
    HallucinationType.Missed: AffectedDomain.Rec,
    HallucinationType.Blind: AffectedDomain.Rec,
    HallucinationType.Latency: AffectedDomain.Time,
}

PROBABILITIES = (0.01, 0.05, 0.10, 0.25, 0.50)
ANGLE_LABELS = tuple(f"Ang{a:02d}{s}" for a in (5, 10, 20, 25) for s in "LR")
BLIND_LABELS = ("Blind40L", "Blind50L", "Blind60L")
LATENCY_LABELS = ("Lat20", "Lat40")
CAR_LABELS = ("Car1", "Car2", "Car3")

CONFIGURATIONS: dict[HallucinationType, tuple[str, ...]] = {
    HallucinationType.LinDrift: ("Location",),
    HallucinationType.Missed: CAR_LABELS,
    HallucinationType.Phant: CAR_LABELS,
    HallucinationType.AngDrift: ANGLE_LABELS,
    HallucinationType.Blind: BLIND_LABELS,
    HallucinationType.Latency: LATENCY_LABELS,
}

DEFAULT_DRIFT_OFFSET = Vec2(-2.0, 0.0)
DEFAULT_PHANTOM_OFFSET = -30.0
DEFAULT_BLIND_WIDTH = 20.0


class HIConfigError(ValueError):
    """Invalid HI configuration; ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class ContractViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class HallucinationConfiguration:
    """A configuration label plus the numeric parameters it stands for."""

    label: str
    offset: Vec2 | None = None  # Location
    target: str | None = None  # Car1..Car3
    phantom_offset: float = DEFAULT_PHANTOM_OFFSET
    angle: float | None = None  # signed degrees, left positive
    center: float | None = None  # blind stripe centre, degrees, left positive
    width: float = DEFAULT_BLIND_WIDTH
    cycles: int | None = None  # latency

    @property
    def tag(self) -> str:
        if self.offset is not None:
            return "Location"
        if self.target is not None:
            return "TargetCar"
        if self.angle is not None:
            return "Angle"
        if self.center is not None:
            return "BlindAt"
        return "LatencyCycles"

    @classmethod
    def from_label(cls, label: str, **overrides: Any) -> "HallucinationConfiguration":
        if label == "Location":
            off = overrides.pop("offset", DEFAULT_DRIFT_OFFSET)
            if not isinstance(off, Vec2):
                off = Vec2(float(off[0]), float(off[1]))
            return cls(label, offset=off, **overrides)
        if label in CAR_LABELS:
            return cls(label, target=label, **overrides)
        m = re.fullmatch(r"Ang(\d\d)([LR])", label)
        if m:
            angle = float(m.group(1)) * (1 if m.group(2) == "L" else -1)
            return cls(label, angle=angle, **overrides)
        m = re.fullmatch(r"Blind(\d\d)L", label)
        if m:
            return cls(label, center=float(m.group(1)), **overrides)
        m = re.fullmatch(r"Lat(\d+)", label)
        if m:
            return cls(label, cycles=int(m.group(1)), **overrides)
        raise HIConfigError("configuration", f"unknown configuration label {label!r}")

    def parameters(self) -> dict[str, Any]:
        """Non-default tunables, for JSON round trips."""
        out: dict[str, Any] = {}
        if self.offset is not None and self.offset != DEFAULT_DRIFT_OFFSET:
            out["offset"] = [self.offset.x, self.offset.z]
        if self.target is not None and self.phantom_offset != DEFAULT_PHANTOM_OFFSET:
            out["phantom_offset"] = self.phantom_offset
        if self.center is not None and self.width != DEFAULT_BLIND_WIDTH:
            out["width"] = self.width
        return out


_TAG_FOR_TYPE = {
    HallucinationType.LinDrift: "Location",
    HallucinationType.Phant: "TargetCar",
    HallucinationType.Missed: "TargetCar",
    HallucinationType.AngDrift: "Angle",
    HallucinationType.Blind: "BlindAt",
    HallucinationType.Latency: "LatencyCycles",
}


@dataclass(frozen=True)
class HIConfig:
    module_activation: str = "OFF"
    type: HallucinationType | None = None
    domain: AffectedDomain | None = None
    configuration: HallucinationConfiguration | None = None
    probability: float | None = None
    persistence: Persistence = Persistence.Baseline

    def __post_init__(self):
        self.validate()

    @property
    def on(self) -> bool:
        return self.module_activation == "ON"

    def validate(self) -> None:
        if self.module_activation not in ("ON", "OFF"):
            raise HIConfigError("module_activation", f"expected 'ON' or 'OFF', got {self.module_activation!r}")
        if not self.on:
            if self.persistence != Persistence.Baseline:
                raise HIConfigError("persistence", "OFF requires persistence 'Baseline'")
            return
        if self.persistence == Persistence.Baseline:
            raise HIConfigError("persistence", "ON requires 'Intermittent' or 'Permanent'")
        if self.type is None:
            raise HIConfigError("type", "required when module_activation is ON")
        if self.domain != DOMAIN_OF[self.type]:
            raise HIConfigError("domain", f"{self.type.value} belongs to domain {DOMAIN_OF[self.type].value}")
        if self.configuration is None:
            raise HIConfigError("configuration", "required when module_activation is ON")
        if self.configuration.tag != _TAG_FOR_TYPE[self.type]:
            raise HIConfigError(
                "configuration", f"{self.configuration.label!r} is not valid for type {self.type.value}"
            )
        p = self.probability
        if not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
            raise HIConfigError("probability", f"must be a number in [0, 1], got {p!r}")

    @classmethod
    def off(cls) -> "HIConfig":
        return cls()

    @classmethod
    def make(cls, type: str, configuration: str, probability: float, persistence: str, **params: Any) -> "HIConfig":
        htype = HallucinationType(type)
        return cls(
            "ON",
            htype,
            DOMAIN_OF[htype],
            HallucinationConfiguration.from_label(configuration, **params),
            probability,
            Persistence(persistence),
        )

    def to_dict(self) -> dict[str, Any]:
        if not self.on:
            return {"module_activation": "OFF", "persistence": "Baseline"}
        out: dict[str, Any] = {
            "module_activation": "ON",
            "type": self.type.value,
            "domain": self.domain.value,
            "configuration": self.configuration.label,
            "probability": self.probability,
            "persistence": self.persistence.value,
        }
        params = self.configuration.parameters()
        if params:
            out["parameters"] = params
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "HIConfig":
        if not isinstance(data, dict):
            raise HIConfigError("<root>", "HI config must be a JSON object")
        allowed = {"module_activation", "type", "domain", "configuration", "probability", "persistence", "parameters"}
        for key in data:
            if key not in allowed:
                raise HIConfigError(key, "unknown key")
        if "module_activation" not in data:
            raise HIConfigError("module_activation", "missing")
        activation = data["module_activation"]
        if activation == "OFF":
            persistence = data.get("persistence", "Baseline")
            try:
                return cls("OFF", persistence=Persistence(persistence))
            except ValueError:
                raise HIConfigError("persistence", f"unknown persistence {persistence!r}") from None
        if activation != "ON":
            raise HIConfigError("module_activation", f"expected 'ON' or 'OFF', got {activation!r}")
        for key in ("type", "configuration", "probability", "persistence"):
            if key not in data:
                raise HIConfigError(key, "missing")
        try:
            htype = HallucinationType(data["type"])
        except ValueError:
            raise HIConfigError("type", f"unknown hallucination type {data['type']!r}") from None
        domain = data.get("domain", DOMAIN_OF[htype].value)
        try:
            domain = AffectedDomain(domain)
        except ValueError:
            raise HIConfigError("domain", f"unknown domain {domain!r}") from None
        try:
            persistence = Persistence(data["persistence"])
        except ValueError:
            raise HIConfigError("persistence", f"unknown persistence {data['persistence']!r}") from None
        params = data.get("parameters", {})
        if not isinstance(params, dict):
            raise HIConfigError("parameters", "must be a JSON object")
        if not isinstance(data["configuration"], str):
            raise HIConfigError("configuration", "must be a category label string")
        try:
            conf = HallucinationConfiguration.from_label(data["configuration"], **params)
        except TypeError as exc:
            raise HIConfigError("parameters", str(exc)) from None
        prob = data["probability"]
        if isinstance(prob, bool) or not isinstance(prob, (int, float)):
            raise HIConfigError("probability", f"must be a number, got {prob!r}")
        return cls("ON", htype, domain, conf, float(prob), persistence)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "HIConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise HIConfigError("<json>", str(exc)) from None
        return cls.from_dict(data)


@dataclass
class HIState:
    config: HIConfig
    rng: random.Random = field(default_factory=random.Random)
    triggered: bool = False
    delay_buffer: deque = field(init=False)

    def __post_init__(self):
        n = self.latency_cycles
        self.delay_buffer = deque(maxlen=n + 1)

    @property
    def latency_cycles(self) -> int:
        conf = self.config.configuration
        if self.config.on and self.config.type == HallucinationType.Latency and conf is not None:
            return conf.cycles
        return 0


def sample_activation(state: HIState) -> bool:
    cfg = state.config
    if not cfg.on:
        raise ContractViolation("sample_activation called with the HI module OFF")
    if cfg.persistence == Persistence.Permanent:
        if state.triggered:
            return True
        if state.rng.random() < cfg.probability:
            state.triggered = True
        return state.triggered
    return state.rng.random() < cfg.probability


def _with_objects(frame: PerceptionFrame, objects) -> PerceptionFrame:
    return PerceptionFrame(frame.cycle, frame.time, tuple(objects))


def inject_linear_drift(frame: PerceptionFrame, offset: Vec2) -> PerceptionFrame:
    return _with_objects(
        frame, (dataclasses.replace(o, position=o.position + offset) for o in frame.objects)
    )


def inject_phantom(frame: PerceptionFrame, target: str, phantom_offset: float = DEFAULT_PHANTOM_OFFSET) -> PerceptionFrame:
    template = frame.find(target)
    if template is None:
        return frame
    p = template.position
    if template.heading == AXIS_X:
        pos = Vec2(p.x + phantom_offset, p.z)
    else:
        pos = Vec2(p.x, p.z + phantom_offset)
    ghost = PerceivedObject(PHANTOM_PREFIX + target, pos, template.speed, template.heading)
    return _with_objects(frame, frame.objects + (ghost,))


def inject_missed(frame: PerceptionFrame, target: str) -> PerceptionFrame:
    if frame.find(target) is None:
        return frame
    return _with_objects(frame, (o for o in frame.objects if o.source_id != target))


def rotate_about(p: Vec2, pivot: Vec2, degrees: float) -> Vec2:
    """Counter-clockwise rotation in the (x, z) plane; positive angles move points to the AV's left."""
    a = math.radians(degrees)
    c, s = math.cos(a), math.sin(a)
    dx, dz = p.x - pivot.x, p.z - pivot.z
    return Vec2(pivot.x + c * dx - s * dz, pivot.z + s * dx + c * dz)


def inject_angular_drift(frame: PerceptionFrame, av: VehicleState, angle: float) -> PerceptionFrame:
    if angle == 0:
        return frame
    pivot = av.position
    return _with_objects(
        frame,
        (dataclasses.replace(o, position=rotate_about(o.position, pivot, angle)) for o in frame.objects),
    )


def in_stripe(av: VehicleState, p: Vec2, center: float, width: float) -> bool:
    try:
        b = bearing(av, p)
    except BearingError:
        return False
    # offset from the stripe centre, wrapped so stripes may straddle the rear (+-180)
    off = (b - center + 180.0) % 360.0 - 180.0
    return abs(off) <= width / 2


def inject_blind_region(frame: PerceptionFrame, av: VehicleState, center: float, width: float = DEFAULT_BLIND_WIDTH) -> PerceptionFrame:
    if width <= 0:
        raise ValueError("blind stripe width must be positive")
    return _with_objects(frame, (o for o in frame.objects if not in_stripe(av, o.position, center, width)))


def inject_latency(frame: PerceptionFrame, state: HIState, n: int | None = None) -> PerceptionFrame:
    """Push ``frame`` into the delay line and return the frame from ``n`` cycles ago.

    Until ``n`` older frames exist the oldest buffered frame is replayed (frozen).
    """
    n = state.latency_cycles if n is None else n
    if n == 0:
        return frame
    buf = state.delay_buffer
    if buf.maxlen != n + 1:
        state.delay_buffer = buf = deque(buf, maxlen=n + 1)
    buf.append(frame)
    return buf[0]


def apply(frame: PerceptionFrame, state: HIState, av: VehicleState) -> PerceptionFrame:
    cfg = state.config
    if not cfg.on:
        return frame
    htype = cfg.type
    if htype == HallucinationType.Latency:
        delayed = inject_latency(frame, state)
        return delayed if sample_activation(state) else frame
    if not sample_activation(state):
        return frame
    conf = cfg.configuration
    if htype == HallucinationType.LinDrift:
        return inject_linear_drift(frame, conf.offset)
    if htype == HallucinationType.Phant:
        return inject_phantom(frame, conf.target, conf.phantom_offset)
    if htype == HallucinationType.Missed:
        return inject_missed(frame, conf.target)
    if htype == HallucinationType.AngDrift:
        return inject_angular_drift(frame, av, conf.angle)
    if htype == HallucinationType.Blind:
        return inject_blind_region(frame, av, conf.center, conf.width)
    raise ContractViolation(f"unhandled hallucination type {htype}")
