"""Race track geometry: ordered gates, pass/collision tests, progress distance."""

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels


class ParseError(ValueError):
    """Track file is not well-formed."""


class ValidationError(ValueError):
    """Track file parsed but violates a structural invariant."""


@dataclass(frozen=True, eq=False)
class Gate:
    """Square gate opening centered at `center`, plane normal (cos yaw, sin yaw, 0)."""

    center: np.ndarray
    yaw: float
    half_size: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if not self.half_size > 0:
            raise ValidationError("gate half_size must be > 0")

    @property
    def normal(self) -> np.ndarray:
        return np.array([np.cos(self.yaw), np.sin(self.yaw), 0.0])


@dataclass(frozen=True, eq=False)
class Bbox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class GateEvent:
    kind: str  # "none" | "passed" | "collided"
    d_gate: float


@dataclass(frozen=True, eq=False)
class TrackSpec:
    name: str
    gates: tuple
    bbox: Bbox
    start_gate_index: int = 0
    frame_width: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        self.validate()

    def validate(self) -> None:
        problems = []
        if len(self.gates) < 2:
            problems.append("track needs at least 2 gates")
        if np.any(self.bbox.lo >= self.bbox.hi):
            problems.append("bbox min must be strictly below bbox max")
        for i, g in enumerate(self.gates):
            if np.any(g.center < self.bbox.lo + 1.0) or np.any(g.center > self.bbox.hi - 1.0):
                problems.append(f"gate {i} center must sit inside bbox with >= 1 m margin")
        if not 0 <= self.start_gate_index < max(len(self.gates), 1):
            problems.append("start_gate_index out of range")
        if self.frame_width < 0:
            problems.append("frame_width must be >= 0")
        if problems:
            raise ValidationError("; ".join(problems))

    @property
    def n_gates(self) -> int:
        return len(self.gates)

    @cached_property
    def _packed(self) -> tuple:
        centers = np.stack([g.center for g in self.gates])
        yaws = np.array([g.yaw for g in self.gates])
        halfs = np.array([g.half_size for g in self.gates])
        return (centers, np.cos(yaws), np.sin(yaws), halfs, self.frame_width,
                self.bbox.lo, self.bbox.hi)

    def packed(self) -> tuple:
        return self._packed


def check_transition(p_prev: np.ndarray, p_curr: np.ndarray, gate: Gate,
                     frame_width: float = 0.3) -> GateEvent:
    """Classify the motion segment against one gate.

    `passed`: crossed the gate plane along its normal with l_inf opening offset
    below half_size. `collided`: crossed (either direction) inside the frame
    band [half_size, half_size + frame_width]. d_gate reports |p_curr - center|.
    """
    a = np.asarray(p_prev, dtype=np.float64)
    b = np.asarray(p_curr, dtype=np.float64)
    code = _kernels.segment_gate_event(
        a[0], a[1], a[2], b[0], b[1], b[2],
        gate.center[0], gate.center[1], gate.center[2],
        np.cos(gate.yaw), np.sin(gate.yaw), gate.half_size, frame_width)
    kind = ("none", "passed", "collided")[code]
    return GateEvent(kind=kind, d_gate=float(np.linalg.norm(b - gate.center)))


def in_bounds(p: np.ndarray, bbox: Bbox) -> bool:
    """True iff p lies inside the closed box."""
    p = np.asarray(p, dtype=np.float64)
    return bool(np.all(p >= bbox.lo) and np.all(p <= bbox.hi))


def gate_distance(p: np.ndarray, track: TrackSpec, gate_index: int) -> float:
    return float(np.linalg.norm(np.asarray(p) - track.gates[gate_index].center))


def load_track(text: str) -> TrackSpec:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON at line {e.lineno} col {e.colno}: {e.msg}") from e

    def need(obj, key, where):
        if key not in obj:
            raise ParseError(f"missing field '{key}' in {where}")
        return obj[key]

    if not isinstance(raw, dict):
        raise ParseError("track file must be a JSON object")
    known = {"name", "gates", "bbox", "start_gate_index", "frame_width"}
    unknown = set(raw) - known
    if unknown:
        raise ParseError(f"unknown fields: {sorted(unknown)}")
    gates = []
    for i, g in enumerate(need(raw, "gates", "track")):
        where = f"gates[{i}]"
        gates.append(Gate(center=np.array(need(g, "center", where), dtype=np.float64),
                          yaw=float(need(g, "yaw", where)),
                          half_size=float(need(g, "half_size", where))))
    bbox_raw = need(raw, "bbox", "track")
    bbox = Bbox(lo=np.array(need(bbox_raw, "min", "bbox"), dtype=np.float64),
                hi=np.array(need(bbox_raw, "max", "bbox"), dtype=np.float64))
    return TrackSpec(name=str(need(raw, "name", "track")), gates=tuple(gates), bbox=bbox,
                     start_gate_index=int(raw.get("start_gate_index", 0)),
                     frame_width=float(raw.get("frame_width", 0.3)))


def serialize_track(track: TrackSpec) -> str:
    doc = {
        "name": track.name,
        "gates": [{"center": list(g.center), "yaw": g.yaw, "half_size": g.half_size}
                  for g in track.gates],
        "bbox": {"min": list(track.bbox.lo), "max": list(track.bbox.hi)},
        "start_gate_index": track.start_gate_index,
        "frame_width": track.frame_width,
    }
    return json.dumps(doc, indent=2)


def load_track_file(path: str) -> TrackSpec:
    with open(path, "r", encoding="utf-8") as f:
        return load_track(f.read())
