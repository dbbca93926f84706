"""Scenario files, ODD-consistent pose sampling, runway databases and splits.

Scenario documents are YAML with the keys ``airports_runways``, ``image``,
``poses``, ``runways_database`` and ``trajectory``.  Each pose carries six
numbers ``[longitude, latitude, altitude, heading, tilt, roll]`` where
tilt is 0 for a nadir view and 90 for a level one.  The mapping between
those six numbers and a position/attitude lives in
:func:`pose_numbers_to_state` and :func:`state_to_pose_numbers` only.
"""
from __future__ import annotations

import calendar
import json
import math
import uuid
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

from .camera import CameraModel, CameraPose
from .errors import GeometryError, ValidationError
from .geodesy import (
    NED_TO_ENU,
    VRP_OFFSET_M,
    Attitude,
    GeodeticPoint,
    RunwayFrame,
    RunwayGeometry,
    build_runway_frame,
    compose_attitude,
    ecef_to_geodetic,
    euler_zyx_angles,
)
from .odd import PARAMETERS, Interval, OddConfig, PoseParameters

TIME_FIELDS = ("second", "minute", "hour", "day", "month", "year")
DEFAULT_TIME = {"second": 0, "minute": 0, "hour": 12, "day": 1, "month": 6, "year": 2020}


# -- six-number pose convention ---------------------------------------------


def pose_numbers_to_state(numbers: Sequence[float]) -> tuple[GeodeticPoint, Attitude]:
    lon, lat, alt, heading, tilt, roll = (float(x) for x in numbers)
    if not 0.0 <= tilt <= 180.0:
        raise ValidationError(f"tilt {tilt} outside [0, 180]")
    return GeodeticPoint(lat, lon, alt), Attitude(heading, tilt - 90.0, roll)


def state_to_pose_numbers(position: GeodeticPoint, attitude: Attitude) -> tuple[float, ...]:
    return (
        position.longitude,
        position.latitude,
        position.altitude,
        attitude.heading,
        attitude.pitch + 90.0,
        attitude.roll,
    )


# -- data model ----------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioPose:
    uuid: str
    airport: str
    runway: str
    pose: tuple[float, float, float, float, float, float]
    time: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_TIME))
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "pose", tuple(float(x) for x in self.pose))
        if len(self.pose) != 6:
            raise ValidationError(f"pose {self.uuid}: expected 6 numbers, got {len(self.pose)}")
        _validate_time(self.time, self.uuid)
        # raises on invalid lat/lon/tilt
        pose_numbers_to_state(self.pose)

    @property
    def position(self) -> GeodeticPoint:
        return pose_numbers_to_state(self.pose)[0]

    @property
    def attitude(self) -> Attitude:
        return pose_numbers_to_state(self.pose)[1]

    def camera_pose(self) -> CameraPose:
        return CameraPose.from_attitude(*pose_numbers_to_state(self.pose))

    def to_dict(self) -> dict[str, Any]:
        d = {
            "uuid": self.uuid,
            "airport": self.airport,
            "runway": self.runway,
            "pose": [float(x) for x in self.pose],
            "time": dict(self.time),
        }
        d.update(self.extras)
        return d


def _validate_time(t: Mapping[str, int], owner: str):
    missing = [k for k in TIME_FIELDS if k not in t]
    if missing:
        raise ValidationError(f"pose {owner}: time is missing {missing}")
    try:
        second, minute, hour, day, month, year = (int(t[k]) for k in TIME_FIELDS)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"pose {owner}: time fields must be integers") from exc
    ok = (
        0 <= second <= 60
        and 0 <= minute <= 59
        and 0 <= hour <= 23
        and 1 <= month <= 12
        and year >= 1
    )
    if ok:
        ok = 1 <= day <= calendar.monthrange(year, month)[1]
    if not ok:
        raise ValidationError(f"pose {owner}: time {dict(t)} outside calendar ranges")


@dataclass(frozen=True)
class Scenario:
    airports_runways: dict[str, list[str]]
    image: CameraModel
    poses: list[ScenarioPose]
    runways_database: str = ""
    trajectory: dict[str, Any] = field(default_factory=lambda: {"sample_number": 1})
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for p in self.poses:
            if p.uuid in seen:
                raise ValidationError(f"duplicate pose uuid {p.uuid}")
            seen.add(p.uuid)
            if p.runway not in self.airports_runways.get(p.airport, ()):
                raise ValidationError(
                    f"pose {p.uuid} references {p.airport}/{p.runway}, "
                    "which is not listed in airports_runways"
                )
        n = self.trajectory.get("sample_number", 1)
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ValidationError(f"trajectory.sample_number must be an integer >= 1, got {n!r}")

    def to_dict(self) -> dict[str, Any]:
        d = {
            "airports_runways": {k: list(v) for k, v in self.airports_runways.items()},
            "image": {
                "height": int(self.image.height),
                "width": int(self.image.width),
                "fov_x": float(self.image.fov_x),
                "fov_y": float(self.image.fov_y),
            },
            "poses": [p.to_dict() for p in self.poses],
            "runways_database": self.runways_database,
            "trajectory": dict(self.trajectory),
        }
        d.update(self.extras)
        return d


# -- parse / emit ------------------------------------------------------------------


def _number(value, what: str) -> float:
    if isinstance(value, str):
        # hand-written files often carry "- 1.3271," list items
        value = value.strip().rstrip(",").strip()
    try:
        out = float(value)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{what}: expected a number, got {value!r}") from exc
    if not math.isfinite(out):
        raise ValidationError(f"{what}: expected a finite number, got {value!r}")
    return out


def _require(mapping: Mapping, key: str, where: str):
    if not isinstance(mapping, Mapping):
        raise ValidationError(f"{where}: expected a mapping")
    if key not in mapping:
        raise ValidationError(f"{where}: missing required field '{key}'")
    return mapping[key]


def pose_from_dict(raw: Mapping, index: int = 0) -> ScenarioPose:
    where = f"poses[{index}]"
    pid = str(_require(raw, "uuid", where))
    where = f"pose {pid}"
    numbers = _require(raw, "pose", where)
    if not isinstance(numbers, (list, tuple)):
        raise ValidationError(f"{where}: 'pose' must be a list of 6 numbers")
    time = _require(raw, "time", where)
    if not isinstance(time, Mapping):
        raise ValidationError(f"{where}: 'time' must be a mapping")
    extras = {k: v for k, v in raw.items() if k not in {"uuid", "airport", "runway", "pose", "time"}}
    return ScenarioPose(
        uuid=pid,
        airport=str(_require(raw, "airport", where)),
        runway=str(_require(raw, "runway", where)),
        pose=tuple(_number(x, f"{where} pose[{i}]") for i, x in enumerate(numbers)),
        time={k: time[k] for k in time},
        extras=extras,
    )


def scenario_from_dict(data: Mapping[str, Any]) -> Scenario:
    if not isinstance(data, Mapping):
        raise ValidationError("scenario document must be a mapping")
    ar = _require(data, "airports_runways", "scenario")
    if not isinstance(ar, Mapping):
        raise ValidationError("airports_runways must map ICAO codes to runway lists")
    airports_runways = {str(k): [str(r) for r in (v or [])] for k, v in ar.items()}
    img = _require(data, "image", "scenario")
    try:
        image = CameraModel(
            width=int(_require(img, "width", "image")),
            height=int(_require(img, "height", "image")),
            fov_x=_number(_require(img, "fov_x", "image"), "image.fov_x"),
            fov_y=_number(_require(img, "fov_y", "image"), "image.fov_y"),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid image header: {exc}") from exc
    poses_raw = data.get("poses") or []
    if not isinstance(poses_raw, list):
        raise ValidationError("poses must be a list")
    poses = [pose_from_dict(p, i) for i, p in enumerate(poses_raw)]
    trajectory = data.get("trajectory") or {"sample_number": 1}
    if not isinstance(trajectory, Mapping):
        raise ValidationError("trajectory must be a mapping")
    known = {"airports_runways", "image", "poses", "runways_database", "trajectory"}
    return Scenario(
        airports_runways=airports_runways,
        image=image,
        poses=poses,
        runways_database=str(data.get("runways_database", "")),
        trajectory=dict(trajectory),
        extras={k: v for k, v in data.items() if k not in known},
    )


def parse_scenario(document: str) -> Scenario:
    try:
        data = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ValidationError(f"scenario syntax error{where}: {getattr(exc, 'problem', exc)}") from exc
    return scenario_from_dict(data)


def emit_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False, default_flow_style=False)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


# -- forward construction --------------------------------------------------------


def pose_from_parameters(p: PoseParameters, frame: RunwayFrame) -> tuple[GeodeticPoint, Attitude]:
    """World position and true-north attitude realizing ``p`` for ``frame``'s runway."""
    if p.along_track >= 0:
        raise GeometryError("forward construction needs a negative along-track distance")
    dist = -p.along_track
    d_cross = math.tan(math.radians(p.lateral_path_angle)) * dist
    h = math.tan(math.radians(-p.vertical_path_angle)) * (dist + VRP_OFFSET_M)
    position = ecef_to_geodetic(frame.from_runway([p.along_track, d_cross, h]))

    body_to_enu = compose_attitude(p.relative_yaw, p.pitch, p.roll, frame)
    heading, pitch, roll = euler_zyx_angles(NED_TO_ENU @ body_to_enu)
    return position, Attitude(heading, pitch, roll)


# -- sampling ------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValidationError(f"uniform bounds out of order: {self.lo} > {self.hi}")


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValidationError(f"normal std must be positive, got {self.std}")


def _nominal(name: str, segment_index: int, cfg: OddConfig) -> Interval:
    seg = cfg.segments[segment_index]
    return {
        "along_track": seg.along_track,
        "lateral_path_angle": cfg.lateral,
        "vertical_path_angle": cfg.vertical,
        "relative_yaw": seg.yaw,
        "pitch": cfg.pitch,
        "roll": seg.roll,
    }[name]


def _hull(name: str, cfg: OddConfig) -> Interval:
    ivs = [_nominal(name, i, cfg) for i in range(len(cfg.segments))]
    return Interval(min(i.lo for i in ivs), max(i.hi for i in ivs))


@dataclass(frozen=True)
class SamplingSpec:
    """Per-parameter distributions; parameters left out draw uniformly
    over their nominal range in each segment."""

    distributions: Mapping[str, Uniform | Normal] = field(default_factory=dict)
    poses_per_segment: int = 10
    seed: int = 0
    time: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_TIME))

    def __post_init__(self):
        unknown = set(self.distributions) - set(PARAMETERS)
        if unknown:
            raise ValidationError(f"unknown sampled parameters: {sorted(unknown)}")
        if self.poses_per_segment < 1:
            raise ValidationError("poses_per_segment must be >= 1")
        _validate_time(self.time, "sampling spec")

    def validate(self, cfg: OddConfig):
        for name, dist in self.distributions.items():
            if isinstance(dist, Uniform):
                hull = _hull(name, cfg)
                if dist.lo < hull.lo or dist.hi > hull.hi:
                    raise ValidationError(
                        f"{name}: uniform [{dist.lo}, {dist.hi}] leaves the nominal range "
                        f"[{hull.lo}, {hull.hi}]"
                    )


def _draw(rng: np.random.Generator, dist, nominal: Interval, name: str, max_tries: int = 10000) -> float:
    if dist is None:
        return float(rng.uniform(nominal.lo, nominal.hi))
    if isinstance(dist, Uniform):
        lo, hi = max(dist.lo, nominal.lo), min(dist.hi, nominal.hi)
        if lo > hi:
            raise ValidationError(f"{name}: uniform range misses segment range {nominal.to_list()}")
        return float(rng.uniform(lo, hi))
    for _ in range(max_tries):
        x = float(rng.normal(dist.mean, dist.std))
        if nominal.contains(x):
            return x
    raise ValidationError(f"{name}: normal({dist.mean}, {dist.std}) rarely lands in {nominal.to_list()}")


def sample_parameters(spec: SamplingSpec, cfg: OddConfig, rng: np.random.Generator, segment_index: int):
    values = {
        name: _draw(rng, spec.distributions.get(name), _nominal(name, segment_index, cfg), name)
        for name in PARAMETERS
    }
    return PoseParameters(**values)


def sample_scenario(
    runways: Sequence[RunwayGeometry],
    spec: SamplingSpec = SamplingSpec(),
    cfg: OddConfig = OddConfig(),
    image: CameraModel = CameraModel(1024, 1024, 60.0, 60.0),
    runways_database: str = "",
) -> Scenario:
    """``poses_per_segment`` In-ODD poses per runway and segment.

    Each pose is built forward from sampled ODD parameters, so it is In
    ODD for its target runway by construction.  Output depends only on
    ``spec.seed`` and the order of ``runways``.
    """
    if not runways:
        raise ValidationError("no runways to sample")
    spec.validate(cfg)
    rng = np.random.default_rng(spec.seed)
    airports: dict[str, list[str]] = {}
    poses = []
    for rw in runways:
        ids = airports.setdefault(rw.airport_icao, [])
        if rw.runway_id not in ids:
            ids.append(rw.runway_id)
        frame = build_runway_frame(rw)
        for seg in range(len(cfg.segments)):
            for _ in range(spec.poses_per_segment):
                params = sample_parameters(spec, cfg, rng, seg)
                position, attitude = pose_from_parameters(params, frame)
                pid = str(uuid.UUID(bytes=rng.bytes(16), version=4))
                poses.append(
                    ScenarioPose(
                        uuid=pid,
                        airport=rw.airport_icao,
                        runway=rw.runway_id,
                        pose=state_to_pose_numbers(position, attitude),
                        time=dict(spec.time),
                    )
                )
    return Scenario(airports, image, poses, runways_database, {"sample_number": 1})


# -- runway database --------------------------------------------------------------

RunwayDb = dict[str, dict[str, RunwayGeometry]]


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ValidationError(f"duplicate key {k!r} in runway database")
        out[k] = v
    return out


def parse_runway_db(document: str | Mapping[str, Any]) -> RunwayDb:
    """Runway database JSON: ``{icao: {runway_id: {corners, has_piano, source}}}``."""
    if isinstance(document, str):
        if not document.strip():
            return {}
        try:
            data = json.loads(document, object_pairs_hook=_no_duplicates)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"runway database: {exc}") from exc
    else:
        data = document
    if not isinstance(data, Mapping):
        raise ValidationError("runway database must be a JSON object")
    db: RunwayDb = {}
    for icao, runways in data.items():
        if not isinstance(runways, Mapping):
            raise ValidationError(f"{icao}: expected a mapping of runways")
        db[icao] = {}
        for rid, entry in runways.items():
            corners = _require(entry, "corners", f"{icao}/{rid}")
            if not isinstance(corners, list) or len(corners) != 4:
                raise ValidationError(f"{icao}/{rid}: exactly 4 corners required")
            pts = []
            for c in corners:
                if not isinstance(c, (list, tuple)) or len(c) != 3:
                    raise ValidationError(f"{icao}/{rid}: corner must be [lat, lon, alt], got {c!r}")
                pts.append(GeodeticPoint(*(_number(x, f"{icao}/{rid} corner") for x in c)))
            db[icao][str(rid)] = RunwayGeometry(
                icao,
                str(rid),
                tuple(pts),
                has_piano=bool(entry.get("has_piano", True)),
                source=str(entry.get("source", "")),
            )
    return db


def dump_runway_db(db: Mapping[str, Mapping[str, RunwayGeometry]]) -> str:
    out = {
        icao: {
            rid: {
                "corners": [c.as_list() for c in rw.corners],
                "has_piano": rw.has_piano,
                "source": rw.source,
            }
            for rid, rw in runways.items()
        }
        for icao, runways in db.items()
    }
    return json.dumps(out, indent=2)


def load_runway_db(path) -> RunwayDb:
    with open(path, encoding="utf-8") as fh:
        return parse_runway_db(fh.read())


def iter_runways(db: Mapping[str, Mapping[str, RunwayGeometry]]) -> Iterable[RunwayGeometry]:
    for icao in db:
        yield from db[icao].values()


# -- airport split -------------------------------------------------------------------


def split_airports(airports: Iterable[str], ratio: float = 0.5, seed: int = 0) -> tuple[list[str], list[str]]:
    """Leakage-free (train, test) split at airport granularity.

    ``ratio`` is the fraction of airports reserved for the test set,
    rounded half up.  Input order does not matter: airports are
    de-duplicated and sorted before the seeded shuffle.
    """
    if not 0.0 < ratio < 1.0:
        raise ValidationError(f"ratio must be in (0, 1), got {ratio}")
    pool = sorted(set(airports))
    if not pool:
        raise ValidationError("no airports to split")
    order = np.random.default_rng(seed).permutation(len(pool))
    n_test = int(math.floor(ratio * len(pool) + 0.5))
    test = sorted(pool[i] for i in order[:n_test])
    train = sorted(pool[i] for i in order[n_test:])
    return train, test


def split_manifest(airports: Iterable[str], ratio: float = 0.5, seed: int = 0) -> dict[str, Any]:
    train, test = split_airports(airports, ratio, seed)
    return {"seed": seed, "ratio": ratio, "train": train, "test": test}
