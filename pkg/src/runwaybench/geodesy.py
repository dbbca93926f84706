"""WGS84 conversions, runway-anchored frames and ODD pose extraction.

Altitudes are ellipsoidal heights throughout.  All ODD angles are taken
in the flat ENU tangent plane at the landing threshold point (LTP); over
the 6 km approach the curvature error stays below a centimeter.

Conventions
-----------
* ENU: x east, y north, z up.
* Body axes: x forward, y right wing, z down.  Attitudes are intrinsic
  Z-Y'-X'' (heading, pitch, roll) relative to local north/level.
* Runway frame: along-track toward the far end, cross-track to the right
  when looking down the runway, up.  Approach positions have negative
  along-track distance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from shapely.geometry import Polygon

from .errors import GeometryError, ValidationError
from .odd import PoseParameters

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)
WGS84_EP2 = WGS84_E2 / (1.0 - WGS84_E2)

VRP_OFFSET_M = 305.0

# ENU <-> NED swap; symmetric and its own inverse.
NED_TO_ENU = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])


def wrap180(angle):
    """Wrap degrees to (-180, 180]; in-range values pass through untouched."""
    a = np.asarray(angle, dtype=float)
    wrapped = -((-a + 180.0) % 360.0 - 180.0)
    return np.where((a > -180.0) & (a <= 180.0), a, wrapped)


def wrap360(angle):
    """Wrap degrees to [0, 360); in-range values pass through untouched."""
    a = np.asarray(angle, dtype=float)
    return np.where((a >= 0.0) & (a < 360.0), a, a % 360.0)


@dataclass(frozen=True)
class GeodeticPoint:
    latitude: float
    longitude: float
    altitude: float = 0.0

    def __post_init__(self):
        lat, lon, alt = float(self.latitude), float(self.longitude), float(self.altitude)
        if not (math.isfinite(lat) and math.isfinite(lon) and math.isfinite(alt)):
            raise ValidationError("geodetic coordinates must be finite")
        if not -90.0 <= lat <= 90.0:
            raise ValidationError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "latitude", lat)
        object.__setattr__(self, "longitude", float(wrap180(lon)))
        object.__setattr__(self, "altitude", alt)

    def as_list(self) -> list[float]:
        """``[lat, lon, alt]`` as stored in the runway database."""
        return [self.latitude, self.longitude, self.altitude]


# -- ellipsoid conversions ---------------------------------------------------


def lla_to_ecef(lat, lon, alt):
    """Vectorized geodetic (degrees, meters) to ECEF (meters), shape (..., 3)."""
    lat = np.radians(np.asarray(lat, dtype=float))
    lon = np.radians(np.asarray(lon, dtype=float))
    alt = np.asarray(alt, dtype=float)
    slat, clat = np.sin(lat), np.cos(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * slat**2)
    x = (n + alt) * clat * np.cos(lon)
    y = (n + alt) * clat * np.sin(lon)
    z = (n * (1.0 - WGS84_E2) + alt) * slat
    return np.stack([x, y, z], axis=-1)


def ecef_to_lla(xyz, max_iter: int = 10):
    """Vectorized ECEF to geodetic; returns (lat, lon, alt).

    Bowring's parametric-latitude guess followed by fixed-point refinement
    of the geodetic latitude.  Bowring alone is accurate to ~1e-10 rad for
    terrestrial altitudes; two refinement passes reach machine precision,
    the loop stops once the update falls under 1e-15 rad.
    """
    xyz = np.asarray(xyz, dtype=float)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    p = np.hypot(x, y)
    if np.any(np.hypot(p, z) < 1.0):
        raise GeometryError("ECEF vector at the Earth's center has no geodetic position")
    lon = np.arctan2(y, x)
    theta = np.arctan2(z * WGS84_A, p * WGS84_B)
    lat = np.arctan2(
        z + WGS84_EP2 * WGS84_B * np.sin(theta) ** 3,
        p - WGS84_E2 * WGS84_A * np.cos(theta) ** 3,
    )
    for _ in range(max_iter):
        n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * np.sin(lat) ** 2)
        new = np.arctan2(z + WGS84_E2 * n * np.sin(lat), p)
        done = np.all(np.abs(new - lat) < 1e-15)
        lat = new
        if done:
            break
    slat, clat = np.sin(lat), np.cos(lat)
    # stable at the poles, unlike p / cos(lat) - N
    alt = p * clat + z * slat - WGS84_A * np.sqrt(1.0 - WGS84_E2 * slat**2)
    lon_deg = wrap180(np.degrees(lon))
    return np.degrees(lat), lon_deg, alt


def geodetic_to_ecef(p: GeodeticPoint) -> np.ndarray:
    return lla_to_ecef(p.latitude, p.longitude, p.altitude)


def ecef_to_geodetic(v) -> GeodeticPoint:
    lat, lon, alt = ecef_to_lla(np.asarray(v, dtype=float))
    return GeodeticPoint(float(lat), float(lon), float(alt))


def enu_rotation(origin: GeodeticPoint) -> np.ndarray:
    """Rotation taking ECEF deltas to the ENU frame at ``origin``."""
    lat, lon = math.radians(origin.latitude), math.radians(origin.longitude)
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    return np.array(
        [
            [-so, co, 0.0],
            [-sl * co, -sl * so, cl],
            [cl * co, cl * so, sl],
        ]
    )


def ecef_to_enu(xyz, origin: GeodeticPoint) -> np.ndarray:
    delta = np.asarray(xyz, dtype=float) - geodetic_to_ecef(origin)
    return delta @ enu_rotation(origin).T


def enu_to_ecef(enu, origin: GeodeticPoint) -> np.ndarray:
    return np.asarray(enu, dtype=float) @ enu_rotation(origin) + geodetic_to_ecef(origin)


def enu_to_geodetic(enu, origin: GeodeticPoint) -> GeodeticPoint:
    return ecef_to_geodetic(enu_to_ecef(enu, origin))


# -- runways -------------------------------------------------------------------


@dataclass(frozen=True)
class RunwayGeometry:
    """One runway end.

    ``corners`` are ordered threshold-left, threshold-right, far-right,
    far-left, with left/right seen from the threshold looking down the
    runway.
    """

    airport_icao: str
    runway_id: str
    corners: tuple[GeodeticPoint, GeodeticPoint, GeodeticPoint, GeodeticPoint]
    has_piano: bool = True
    source: str = ""

    def __post_init__(self):
        corners = tuple(self.corners)
        if len(corners) != 4:
            raise ValidationError(
                f"{self.airport_icao}/{self.runway_id}: expected 4 corners, got {len(corners)}"
            )
        object.__setattr__(self, "corners", corners)
        object.__setattr__(self, "runway_id", str(self.runway_id))
        self._validate()

    @property
    def key(self) -> tuple[str, str]:
        return (self.airport_icao, self.runway_id)

    def threshold_center(self) -> GeodeticPoint:
        return _midpoint(self.corners[0], self.corners[1])

    def local_corners(self) -> np.ndarray:
        """Corner ENU coordinates in the tangent plane at the threshold center."""
        ecef = np.array([geodetic_to_ecef(c) for c in self.corners])
        return ecef_to_enu(ecef, self.threshold_center())

    def _validate(self):
        enu = self.local_corners()
        width = float(np.linalg.norm(enu[1, :2] - enu[0, :2]))
        far_mid = 0.5 * (enu[2, :2] + enu[3, :2])
        length = float(np.linalg.norm(far_mid))
        name = f"{self.airport_icao}/{self.runway_id}"
        if width <= 0.0:
            raise ValidationError(f"{name}: threshold edge has zero width")
        if length <= width:
            raise ValidationError(f"{name}: centerline length {length:.2f} m <= width {width:.2f} m")
        if not Polygon(enu[:, :2]).is_valid:
            raise ValidationError(f"{name}: corner quadrilateral self-intersects")

    def reversed(self, runway_id: str) -> "RunwayGeometry":
        """The opposite runway end over the same pavement."""
        c = self.corners
        return RunwayGeometry(
            self.airport_icao, runway_id, (c[2], c[3], c[0], c[1]), self.has_piano, self.source
        )


def _midpoint(a: GeodeticPoint, b: GeodeticPoint) -> GeodeticPoint:
    return ecef_to_geodetic(0.5 * (geodetic_to_ecef(a) + geodetic_to_ecef(b)))


def make_runway(
    airport_icao: str,
    runway_id: str,
    threshold_center: GeodeticPoint,
    heading: float,
    length: float,
    width: float,
    has_piano: bool = True,
    source: str = "",
) -> RunwayGeometry:
    """Flat rectangular runway laid out in the tangent plane at its threshold."""
    h = math.radians(heading)
    along = np.array([math.sin(h), math.cos(h), 0.0])
    right = np.array([math.cos(h), -math.sin(h), 0.0])
    half = 0.5 * width
    enu = [
        -half * right,
        half * right,
        length * along + half * right,
        length * along - half * right,
    ]
    corners = tuple(enu_to_geodetic(e, threshold_center) for e in enu)
    # keep the pavement level with the threshold
    corners = tuple(GeodeticPoint(c.latitude, c.longitude, threshold_center.altitude) for c in corners)
    return RunwayGeometry(airport_icao, runway_id, corners, has_piano, source)


@dataclass(frozen=True, eq=False)
class RunwayFrame:
    ltp: GeodeticPoint
    vrp: GeodeticPoint
    true_heading: float
    enu_basis: np.ndarray
    runway_axes: np.ndarray  # rows: along-track, cross-track right, up (in ENU)
    ltp_ecef: np.ndarray

    def to_runway(self, xyz) -> np.ndarray:
        """ECEF positions to (along, cross, up) meters relative to the LTP."""
        enu = (np.asarray(xyz, dtype=float) - self.ltp_ecef) @ self.enu_basis.T
        return enu @ self.runway_axes.T

    def from_runway(self, local) -> np.ndarray:
        """(along, cross, up) meters back to ECEF."""
        enu = np.asarray(local, dtype=float) @ self.runway_axes
        return enu @ self.enu_basis + self.ltp_ecef

    @property
    def level_rotation(self) -> np.ndarray:
        """Runway-aligned level frame (x along, y right, z down) expressed in ENU."""
        along, right, up = self.runway_axes
        return np.column_stack([along, right, -up])


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def build_runway_frame(rw: RunwayGeometry) -> RunwayFrame:
    ltp = rw.threshold_center()
    basis = enu_rotation(ltp)
    ltp_ecef = geodetic_to_ecef(ltp)
    far = 0.5 * (geodetic_to_ecef(rw.corners[2]) + geodetic_to_ecef(rw.corners[3]))
    d = basis @ (far - ltp_ecef)
    horiz = math.hypot(d[0], d[1])
    if horiz < 1e-6:
        raise GeometryError(f"{rw.airport_icao}/{rw.runway_id}: zero-length runway")
    along = np.array([d[0] / horiz, d[1] / horiz, 0.0])
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(along, up)
    heading = float(wrap360(math.degrees(math.atan2(along[0], along[1]))))
    vrp_geo = enu_to_geodetic(VRP_OFFSET_M * along, ltp)
    vrp = GeodeticPoint(vrp_geo.latitude, vrp_geo.longitude, ltp.altitude)
    return RunwayFrame(
        ltp=ltp,
        vrp=vrp,
        true_heading=heading,
        enu_basis=_readonly(basis),
        runway_axes=_readonly(np.vstack([along, right, up])),
        ltp_ecef=_readonly(ltp_ecef),
    )


# -- attitude -----------------------------------------------------------------


@dataclass(frozen=True)
class Attitude:
    heading: float
    pitch: float
    roll: float

    def __post_init__(self):
        if not -90.0 <= self.pitch <= 90.0:
            raise ValidationError(f"pitch {self.pitch} outside [-90, 90]")
        object.__setattr__(self, "heading", float(wrap360(self.heading)))
        object.__setattr__(self, "pitch", float(self.pitch))
        object.__setattr__(self, "roll", float(wrap180(self.roll)))


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rx(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def euler_zyx_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Body-to-reference rotation for intrinsic Z-Y'-X'' angles in degrees."""
    return _rz(math.radians(yaw)) @ _ry(math.radians(pitch)) @ _rx(math.radians(roll))


def euler_zyx_angles(r: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`euler_zyx_matrix`; raises near gimbal lock."""
    r = np.asarray(r, dtype=float)
    pitch = math.degrees(math.atan2(-r[2, 0], math.hypot(r[2, 1], r[2, 2])))
    if abs(abs(pitch) - 90.0) < 0.1:
        raise GeometryError(f"pitch {pitch:.4f} deg is within 0.1 deg of gimbal lock")
    yaw = math.degrees(math.atan2(r[1, 0], r[0, 0]))
    roll = math.degrees(math.atan2(r[2, 1], r[2, 2]))
    return float(wrap180(yaw)), pitch, float(wrap180(roll))


def compose_attitude(relative_yaw: float, pitch: float, roll: float, frame: RunwayFrame) -> np.ndarray:
    """Body-to-ENU rotation (ENU at the LTP) for angles relative to the runway.

    Starts aligned with the runway heading and level, then yaws about the
    local down axis, pitches about the new lateral axis and rolls about the
    resulting longitudinal axis.
    """
    return frame.level_rotation @ euler_zyx_matrix(relative_yaw, pitch, roll)


def extract_attitude(rotation: np.ndarray, frame: RunwayFrame) -> tuple[float, float, float]:
    """(relative_yaw, pitch, roll) of a body-to-ENU rotation, relative to the runway."""
    return euler_zyx_angles(frame.level_rotation.T @ np.asarray(rotation, dtype=float))


def attitude_to_enu(att: Attitude) -> np.ndarray:
    """Body-to-ENU rotation of a true-north attitude in the local level frame."""
    return NED_TO_ENU @ euler_zyx_matrix(att.heading, att.pitch, att.roll)


# -- ODD pose parameters --------------------------------------------------------


def runway_coordinates(position: GeodeticPoint, frame: RunwayFrame) -> np.ndarray:
    """(along, cross, up) meters of ``position`` relative to the LTP."""
    return frame.to_runway(geodetic_to_ecef(position))


def pose_parameters(position: GeodeticPoint, attitude: Attitude, frame: RunwayFrame) -> PoseParameters:
    d_along, d_cross, h = runway_coordinates(position, frame)
    if math.hypot(d_along - VRP_OFFSET_M, d_cross) < 1.0:
        raise GeometryError("position within 1 m of the VRP: path angles undefined")
    # VRP sits on the LTP tangent plane, so its height in this frame is 0.
    lateral = math.degrees(math.atan2(d_cross, -d_along))
    vertical = -math.degrees(math.atan2(h, -d_along + VRP_OFFSET_M))
    yaw = float(wrap180(attitude.heading - frame.true_heading))
    return PoseParameters(
        along_track=float(d_along),
        lateral_path_angle=lateral,
        vertical_path_angle=vertical,
        relative_yaw=yaw,
        pitch=attitude.pitch,
        roll=attitude.roll,
    )
