"""Approach-cone operational design domain.

The nominal cone covers along-track distances from -6000 m to -280 m
relative to the landing threshold point, split into three segments with
their own yaw and roll ranges.  Lateral path angle, vertical path angle
and pitch share one range over the whole cone.

A pose is *In ODD* when every parameter is inside its nominal range,
*Extended ODD* when none leaves the extended band (each nominal range
scaled about its midpoint by ``extension_factor``) but at least one
leaves its nominal range, and *Out of ODD* otherwise.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

import yaml

from .errors import ValidationError

PARAMETERS = (
    "along_track",
    "lateral_path_angle",
    "vertical_path_angle",
    "relative_yaw",
    "pitch",
    "roll",
)


@dataclass(frozen=True)
class PoseParameters:
    """Pose of the aircraft relative to one runway.

    ``along_track`` is in meters (negative on the approach side); every
    other field is in degrees.
    """

    along_track: float
    lateral_path_angle: float
    vertical_path_angle: float
    relative_yaw: float
    pitch: float
    roll: float

    def __post_init__(self):
        for name in PARAMETERS:
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")

    def as_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in PARAMETERS}

    def replace(self, **changes) -> "PoseParameters":
        values = self.as_dict()
        values.update(changes)
        return PoseParameters(**values)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValidationError(f"interval bounds out of order: [{self.lo}, {self.hi}]")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def distance(self, x: float) -> float:
        """Distance from ``x`` to the interval, 0 inside."""
        if x < self.lo:
            return self.lo - x
        if x > self.hi:
            return x - self.hi
        return 0.0

    def to_list(self) -> list[float]:
        return [float(self.lo), float(self.hi)]


def extended_interval(interval: Interval, factor: float) -> Interval:
    """Scale ``interval`` about its midpoint by ``factor``.

    Scaling (rather than multiplying the bounds) keeps the band meaningful
    for one-sided ranges such as the vertical path angle [-5.2, -1.8].
    """
    if factor < 1:
        raise ValidationError(f"extension factor must be >= 1, got {factor}")
    if factor == 1:
        return interval
    mid = interval.midpoint
    half = factor * interval.half_width
    return Interval(mid - half, mid + half)


@dataclass(frozen=True)
class Segment:
    along_track: Interval
    yaw: Interval
    roll: Interval


DEFAULT_SEGMENTS = (
    Segment(Interval(-6000.0, -4500.0), Interval(-24.0, 24.0), Interval(-30.0, 30.0)),
    Segment(Interval(-4500.0, -2500.0), Interval(-24.0, 24.0), Interval(-15.0, 15.0)),
    Segment(Interval(-2500.0, -280.0), Interval(-18.5, 18.5), Interval(-10.0, 10.0)),
)


@dataclass(frozen=True)
class OddConfig:
    segments: tuple[Segment, ...] = DEFAULT_SEGMENTS
    lateral: Interval = Interval(-3.0, 3.0)
    vertical: Interval = Interval(-5.2, -1.8)
    pitch: Interval = Interval(-15.0, 5.0)
    extension_factor: float = 2.0
    clamp_along_track_hi_to_zero: bool = True

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValidationError("segment table is empty")
        if self.extension_factor < 1:
            raise ValidationError("extension_factor must be >= 1")
        for far, near in zip(self.segments, self.segments[1:]):
            if far.along_track.hi != near.along_track.lo:
                raise ValidationError(
                    "segments must be contiguous and ordered far-to-near: "
                    f"{far.along_track.to_list()} then {near.along_track.to_list()}"
                )

    @property
    def along_track(self) -> Interval:
        return Interval(self.segments[0].along_track.lo, self.segments[-1].along_track.hi)

    @property
    def extended_along_track(self) -> Interval:
        ext = extended_interval(self.along_track, self.extension_factor)
        if self.clamp_along_track_hi_to_zero and ext.hi > 0.0:
            ext = Interval(ext.lo, max(0.0, self.along_track.hi))
        return ext

    def extended(self, interval: Interval) -> Interval:
        return extended_interval(interval, self.extension_factor)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "segments": [
                {
                    "along_track": s.along_track.to_list(),
                    "yaw": s.yaw.to_list(),
                    "roll": s.roll.to_list(),
                }
                for s in self.segments
            ],
            "lateral_path_angle": self.lateral.to_list(),
            "vertical_path_angle": self.vertical.to_list(),
            "pitch": self.pitch.to_list(),
            "extension_factor": float(self.extension_factor),
            "clamp_along_track_hi_to_zero": bool(self.clamp_along_track_hi_to_zero),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "OddConfig":
        default = cls()

        def interval(value, fallback):
            if value is None:
                if fallback is None:
                    raise ValidationError("segment entries need along_track, yaw and roll")
                return fallback
            try:
                lo, hi = value
                return Interval(float(lo), float(hi))
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"bad interval {value!r}") from exc

        segments = default.segments
        if data.get("segments") is not None:
            segments = tuple(
                Segment(
                    interval(s.get("along_track"), None),
                    interval(s.get("yaw"), None),
                    interval(s.get("roll"), None),
                )
                for s in data["segments"]
            )
        known = {
            "segments",
            "lateral_path_angle",
            "vertical_path_angle",
            "pitch",
            "extension_factor",
            "clamp_along_track_hi_to_zero",
        }
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown ODD config keys: {sorted(unknown)}")
        return cls(
            segments=segments,
            lateral=interval(data.get("lateral_path_angle"), default.lateral),
            vertical=interval(data.get("vertical_path_angle"), default.vertical),
            pitch=interval(data.get("pitch"), default.pitch),
            extension_factor=float(data.get("extension_factor", default.extension_factor)),
            clamp_along_track_hi_to_zero=bool(
                data.get("clamp_along_track_hi_to_zero", default.clamp_along_track_hi_to_zero)
            ),
        )

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    @classmethod
    def loads(cls, text: str) -> "OddConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ValidationError(f"ODD config is not valid YAML: {exc}") from exc
        if data is None:
            return cls()
        if not isinstance(data, Mapping):
            raise ValidationError("ODD config document must be a mapping")
        return cls.from_dict(data)

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


class OddCategory(str, Enum):
    IN_ODD = "in"
    EXTENDED_ODD = "extended"
    OUT_OF_ODD = "out"


class ParameterStatus(str, Enum):
    NOMINAL = "nominal"
    EXTENDED = "extended"
    OUT = "out"


@dataclass(frozen=True)
class ParameterCheck:
    value: float
    nominal: Interval
    extended: Interval
    status: ParameterStatus


@dataclass(frozen=True)
class SegmentMatch:
    index: int
    extended: bool


@dataclass(frozen=True)
class OddClass:
    category: OddCategory
    per_parameter: dict[str, ParameterCheck] = field(default_factory=dict)
    segment: SegmentMatch | None = None

    def report(self) -> dict[str, dict[str, Any]]:
        return {
            name: {
                "value": c.value,
                "nominal": c.nominal.to_list(),
                "extended": c.extended.to_list(),
                "status": c.status.value,
            }
            for name, c in self.per_parameter.items()
        }


def _nearest_segment(along_track: float, cfg: OddConfig) -> int:
    distances = [s.along_track.distance(along_track) for s in cfg.segments]
    return min(range(len(distances)), key=distances.__getitem__)


def segment_for(along_track: float, cfg: OddConfig = OddConfig()) -> SegmentMatch | None:
    """Segment governing yaw/roll ranges at ``along_track``.

    Shared bounds belong to the farther segment.  Positions only inside
    the extended along-track envelope map to the nearest segment and are
    flagged ``extended``; positions outside it return None.
    """
    for i, seg in enumerate(cfg.segments):
        if seg.along_track.contains(along_track):
            return SegmentMatch(i, False)
    if cfg.extended_along_track.contains(along_track):
        return SegmentMatch(_nearest_segment(along_track, cfg), True)
    return None


def _check(value: float, nominal: Interval, extended: Interval) -> ParameterCheck:
    if nominal.contains(value):
        status = ParameterStatus.NOMINAL
    elif extended.contains(value):
        status = ParameterStatus.EXTENDED
    else:
        status = ParameterStatus.OUT
    return ParameterCheck(float(value), nominal, extended, status)


def classify(p: PoseParameters, cfg: OddConfig = OddConfig()) -> OddClass:
    seg_match = segment_for(p.along_track, cfg)
    seg_index = seg_match.index if seg_match else _nearest_segment(p.along_track, cfg)
    seg = cfg.segments[seg_index]

    checks = {
        "along_track": _check(p.along_track, cfg.along_track, cfg.extended_along_track),
        "lateral_path_angle": _check(p.lateral_path_angle, cfg.lateral, cfg.extended(cfg.lateral)),
        "vertical_path_angle": _check(
            p.vertical_path_angle, cfg.vertical, cfg.extended(cfg.vertical)
        ),
        "relative_yaw": _check(p.relative_yaw, seg.yaw, cfg.extended(seg.yaw)),
        "pitch": _check(p.pitch, cfg.pitch, cfg.extended(cfg.pitch)),
        "roll": _check(p.roll, seg.roll, cfg.extended(seg.roll)),
    }
    statuses = {c.status for c in checks.values()}
    if ParameterStatus.OUT in statuses:
        category = OddCategory.OUT_OF_ODD
    elif ParameterStatus.EXTENDED in statuses:
        category = OddCategory.EXTENDED_ODD
    else:
        category = OddCategory.IN_ODD
    return OddClass(category, checks, seg_match)
