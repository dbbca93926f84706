"""Per-source runway corner calibration from nadir acquisitions.

A camera is placed ``altitude_agl`` above each threshold center, looking
straight down with the image "up" direction along the runway.  Given the
pixel positions of the two bottom threshold corners (from a detector or
manual labelling), back-projection onto the ground altitude yields their
geodetic positions.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .camera import CameraModel, PixelPoint, backproject_to_ground, nadir_calibration_pose
from .errors import ValidationError
from .geodesy import GeodeticPoint, RunwayGeometry, geodetic_to_ecef

CSV_COLUMNS = (
    "image_id",
    "airport",
    "runway",
    "latitude",
    "longitude",
    "ground_altitude",
    "heading",
    "u_left",
    "v_left",
    "u_right",
    "v_right",
)


@dataclass(frozen=True)
class CornerObservation:
    image_id: str
    airport: str
    runway: str
    threshold_center: GeodeticPoint
    heading: float
    left: PixelPoint
    right: PixelPoint


@dataclass(frozen=True)
class CalibratedThreshold:
    image_id: str
    airport: str
    runway: str
    left: GeodeticPoint
    right: GeodeticPoint


def calibrate(obs: CornerObservation, cam: CameraModel, altitude_agl: float = 400.0) -> CalibratedThreshold:
    pose = nadir_calibration_pose(obs.threshold_center, obs.heading, altitude_agl)
    ground = obs.threshold_center.altitude
    return CalibratedThreshold(
        obs.image_id,
        obs.airport,
        obs.runway,
        backproject_to_ground(obs.left, cam, pose, ground),
        backproject_to_ground(obs.right, cam, pose, ground),
    )


def read_corner_csv(lines: Iterable[str]) -> list[CornerObservation]:
    reader = csv.DictReader(lines)
    missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise ValidationError(f"corner CSV is missing columns: {missing}")
    out = []
    for n, row in enumerate(reader, start=2):
        try:
            f = {c: float(row[c]) for c in CSV_COLUMNS[3:]}
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"corner CSV line {n}: {exc}") from exc
        out.append(
            CornerObservation(
                image_id=row["image_id"],
                airport=row["airport"],
                runway=row["runway"],
                threshold_center=GeodeticPoint(f["latitude"], f["longitude"], f["ground_altitude"]),
                heading=f["heading"],
                left=PixelPoint(f["u_left"], f["v_left"]),
                right=PixelPoint(f["u_right"], f["v_right"]),
            )
        )
    return out


def fragment(results: Iterable[CalibratedThreshold], source: str = "") -> dict:
    """Runway-database fragment: ``{icao: {runway: {threshold_corners, source, image_id}}}``."""
    out: dict = {}
    for r in sorted(results, key=lambda r: (r.airport, r.runway, r.image_id)):
        out.setdefault(r.airport, {})[r.runway] = {
            "threshold_corners": [r.left.as_list(), r.right.as_list()],
            "source": source,
            "image_id": r.image_id,
        }
    return out


def _dist(a: GeodeticPoint, b: GeodeticPoint) -> float:
    return float(np.linalg.norm(geodetic_to_ecef(a) - geodetic_to_ecef(b)))


def apply_calibration(db: Mapping[str, Mapping[str, RunwayGeometry]], frag: Mapping, match_radius: float = 50.0):
    """Copy of ``db`` with calibrated threshold corners substituted.

    The reciprocal runway end sharing the pavement (far corners within
    ``match_radius`` meters of the old threshold corners) is updated too.
    """
    out = {icao: dict(rws) for icao, rws in db.items()}
    for icao, entries in frag.items():
        for rid, entry in entries.items():
            if rid not in out.get(icao, {}):
                raise ValidationError(f"calibrated runway {icao}/{rid} is not in the database")
            old = out[icao][rid]
            left, right = (GeodeticPoint(*c) for c in entry["threshold_corners"])
            src = entry.get("source", old.source)
            c = old.corners
            out[icao][rid] = RunwayGeometry(icao, rid, (left, right, c[2], c[3]), old.has_piano, src)
            for oid, other in out[icao].items():
                oc = other.corners
                if oid != rid and _dist(oc[2], c[0]) < match_radius and _dist(oc[3], c[1]) < match_radius:
                    out[icao][oid] = RunwayGeometry(
                        icao, oid, (oc[0], oc[1], left, right), other.has_piano, other.source
                    )
    return out


def horizontal_error(a: GeodeticPoint, b: GeodeticPoint) -> float:
    """Meters between two points, ignoring altitude (small-distance approximation)."""
    lat = math.radians(0.5 * (a.latitude + b.latitude))
    dy = math.radians(a.latitude - b.latitude) * 6378137.0
    dx = math.radians(a.longitude - b.longitude) * 6378137.0 * math.cos(lat)
    return math.hypot(dx, dy)
