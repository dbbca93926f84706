"""Pinhole camera: projection, ground back-projection and runway boxes.

Camera axes follow the image: x right, y down, z along the optical axis.
The principal point is the image center; there is no skew and no lens
distortion.  A camera's orientation is stored as the rotation from the
local ENU frame at the camera position into camera axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from shapely.geometry import Polygon, box

from .errors import ProjectionError, ValidationError
from .geodesy import (
    Attitude,
    GeodeticPoint,
    RunwayGeometry,
    attitude_to_enu,
    ecef_to_lla,
    enu_rotation,
    geodetic_to_ecef,
    lla_to_ecef,
)

# camera x/y/z = body y (right) / z (down) / x (forward)
BODY_TO_CAMERA = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class CameraModel:
    width: int
    height: int
    fov_x: float
    fov_y: float

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError("image size must be at least 1x1 pixel")
        for fov in (self.fov_x, self.fov_y):
            if not 0.0 < fov < 180.0:
                raise ValidationError(f"field of view {fov} outside (0, 180)")

    @property
    def fx(self) -> float:
        return (self.width / 2.0) / math.tan(math.radians(self.fov_x) / 2.0)

    @property
    def fy(self) -> float:
        return (self.height / 2.0) / math.tan(math.radians(self.fov_y) / 2.0)

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0


@dataclass(frozen=True, eq=False)
class CameraPose:
    position: GeodeticPoint
    rotation: np.ndarray  # local ENU -> camera

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float)
        if r.shape != (3, 3) or not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise ValidationError("camera rotation must be orthonormal")
        if np.linalg.det(r) < 0:
            raise ValidationError("camera rotation must be proper (det = +1)")
        r.setflags(write=False)
        object.__setattr__(self, "rotation", r)

    @classmethod
    def from_attitude(cls, position: GeodeticPoint, attitude: Attitude) -> "CameraPose":
        """Camera rigidly aligned with the aircraft body."""
        return cls(position, BODY_TO_CAMERA @ attitude_to_enu(attitude).T)

    @classmethod
    def from_heading_tilt_roll(
        cls, position: GeodeticPoint, heading: float, tilt: float, roll: float
    ) -> "CameraPose":
        """Scenario-file convention: tilt 0 looks straight down, 90 at the horizon."""
        if not 0.0 <= tilt <= 180.0:
            raise ValidationError(f"tilt {tilt} outside [0, 180]")
        return cls.from_attitude(position, Attitude(heading, tilt - 90.0, roll))


class PixelPoint(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned box in center format (cx, cy, w, h), pixels."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValidationError(f"box size must be positive, got {self.w}x{self.h}")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "PixelBox":
        return cls(0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1)

    def corners(self) -> tuple[float, float, float, float]:
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_list(self) -> list[float]:
        return [float(self.cx), float(self.cy), float(self.w), float(self.h)]


def project_ecef(xyz, cam: CameraModel, pose: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """Project ECEF points (N, 3); returns pixel coords (N, 2) and depths (N,)."""
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    enu = (xyz - geodetic_to_ecef(pose.position)) @ enu_rotation(pose.position).T
    pc = enu @ pose.rotation.T
    depth = pc[:, 2]
    if np.any(np.abs(depth) < 1e-9):
        raise ProjectionError("point lies in the camera's focal plane")
    u = cam.cx + cam.fx * pc[:, 0] / depth
    v = cam.cy + cam.fy * pc[:, 1] / depth
    return np.column_stack([u, v]), depth


def project(p: GeodeticPoint, cam: CameraModel, pose: CameraPose) -> tuple[PixelPoint, bool]:
    uv, depth = project_ecef(geodetic_to_ecef(p), cam, pose)
    return PixelPoint(float(uv[0, 0]), float(uv[0, 1])), bool(depth[0] > 0)


def pixel_ray(px: PixelPoint, cam: CameraModel, pose: CameraPose) -> np.ndarray:
    """Unit ray direction of a pixel in the local ENU frame of the camera."""
    d = np.array([(px[0] - cam.cx) / cam.fx, (px[1] - cam.cy) / cam.fy, 1.0])
    d = pose.rotation.T @ d
    return d / np.linalg.norm(d)


def backproject_to_ground(
    px: PixelPoint,
    cam: CameraModel,
    pose: CameraPose,
    ground_altitude: float,
    tol: float = 1e-7,
    max_iter: int = 20,
) -> GeodeticPoint:
    """Geodetic point where the pixel's ray reaches ``ground_altitude``.

    The first guess intersects the ray with the horizontal plane at
    ``ground_altitude`` in the ENU frame under the camera.  Newton steps
    along the ray then move it onto the ellipsoidal height surface, so
    :func:`project` and this function are exact inverses even kilometers
    away from the nadir point.
    """
    ray_enu = pixel_ray(px, cam, pose)
    dz = ground_altitude - pose.position.altitude
    if ray_enu[2] >= -1e-12:
        raise ProjectionError("pixel ray is parallel to or points away from the ground")
    s = dz / ray_enu[2]
    if s <= 0:
        raise ProjectionError("ground plane lies behind the camera")

    origin = geodetic_to_ecef(pose.position)
    ray = enu_rotation(pose.position).T @ ray_enu
    for _ in range(max_iter):
        point = origin + s * ray
        lat, lon, alt = ecef_to_lla(point)
        err = float(alt) - ground_altitude
        if abs(err) < tol:
            break
        la, lo = math.radians(float(lat)), math.radians(float(lon))
        normal = np.array([math.cos(la) * math.cos(lo), math.cos(la) * math.sin(lo), math.sin(la)])
        slope = float(ray @ normal)
        if slope >= 0:
            raise ProjectionError("pixel ray grazes the ground surface without reaching it")
        s -= err / slope
        if s <= 0:
            raise ProjectionError("ground surface lies behind the camera")
    else:
        raise ProjectionError("back-projection did not converge")
    return GeodeticPoint(float(lat), float(lon), float(alt))


def nadir_calibration_pose(
    threshold_center: GeodeticPoint, runway_heading: float, altitude_agl: float
) -> CameraPose:
    """Camera straight above the threshold, image up along the runway heading."""
    if altitude_agl <= 0:
        raise ValidationError("calibration altitude must be above ground")
    position = GeodeticPoint(
        threshold_center.latitude,
        threshold_center.longitude,
        threshold_center.altitude + altitude_agl,
    )
    return CameraPose.from_heading_tilt_roll(position, runway_heading, 0.0, 0.0)


def project_runway(rw: RunwayGeometry, cam: CameraModel, pose: CameraPose):
    """Pixel coordinates (4, 2) and in-front flags (4,) of the runway corners."""
    c = rw.corners
    xyz = lla_to_ecef(
        [p.latitude for p in c], [p.longitude for p in c], [p.altitude for p in c]
    )
    uv, depth = project_ecef(xyz, cam, pose)
    return uv, depth > 0


def quad_to_bbox(
    corners: Sequence[Sequence[float]], in_front: Sequence[bool], cam: CameraModel
) -> tuple[PixelBox, float] | None:
    """Image-clipped bounding box of a projected quadrilateral.

    Returns None when any corner is behind the camera or nothing of the
    quad lands in the image.  The visible fraction is the clipped polygon
    area over the full quad area.
    """
    if not all(in_front):
        return None
    quad = Polygon([tuple(map(float, c)) for c in corners])
    if not quad.is_valid:
        quad = quad.convex_hull
    if quad.area <= 0:
        return None
    clipped = quad.intersection(box(0.0, 0.0, float(cam.width), float(cam.height)))
    if clipped.is_empty or clipped.area <= 0:
        return None
    x1, y1, x2, y2 = clipped.bounds
    fraction = min(1.0, clipped.area / quad.area)
    return PixelBox.from_corners(x1, y1, x2, y2), fraction
