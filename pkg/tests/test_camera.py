import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from runwaybench.camera import (
    CameraModel,
    CameraPose,
    PixelBox,
    PixelPoint,
    backproject_to_ground,
    nadir_calibration_pose,
    project,
    project_runway,
    quad_to_bbox,
)
from runwaybench.errors import ProjectionError, ValidationError
from runwaybench.geodesy import Attitude, GeodeticPoint, enu_to_geodetic, geodetic_to_ecef, make_runway

CAM = CameraModel(1024, 1024, 60.0, 60.0)
ORIGIN = GeodeticPoint(43.6448, 1.3448, 151.0)


def dist(a, b):
    return float(np.linalg.norm(geodetic_to_ecef(a) - geodetic_to_ecef(b)))


def test_focal_lengths():
    assert CAM.fx == pytest.approx(512 / math.tan(math.radians(30)))
    cam = CameraModel(1920, 1080, 90.0, 60.0)
    assert cam.fx == pytest.approx(960.0)
    assert (cam.cx, cam.cy) == (960.0, 540.0)


@pytest.mark.parametrize("args", [(0, 10, 60, 60), (10, 10, 0, 60), (10, 10, 60, 180)])
def test_camera_validation(args):
    with pytest.raises(ValidationError):
        CameraModel(*args)


def test_box_corner_round_trip():
    b = PixelBox(10, 20, 4, 6)
    assert PixelBox.from_corners(*b.corners()) == b
    with pytest.raises(ValidationError):
        PixelBox(0, 0, 0, 1)


def test_level_camera_center_and_edge():
    pose = CameraPose.from_attitude(ORIGIN, Attitude(0.0, 0.0, 0.0))  # looking north
    ahead = enu_to_geodetic([0.0, 1000.0, 0.0], ORIGIN)
    px, front = project(ahead, CAM, pose)
    assert front and px == pytest.approx((512, 512), abs=1e-6)
    edge = enu_to_geodetic([1000 * math.tan(math.radians(30)), 1000.0, 0.0], ORIGIN)
    px, _ = project(edge, CAM, pose)
    assert px.u == pytest.approx(1024, abs=1e-6)
    behind = enu_to_geodetic([0.0, -1000.0, 0.0], ORIGIN)
    assert project(behind, CAM, pose)[1] is False


def test_focal_plane_is_singular():
    pose = CameraPose.from_attitude(ORIGIN, Attitude(0.0, 0.0, 0.0))
    with pytest.raises(ProjectionError):
        project(enu_to_geodetic([50.0, 0.0, 0.0], ORIGIN), CAM, pose)


def test_pose_rotation_validated():
    with pytest.raises(ValidationError):
        CameraPose(ORIGIN, np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValidationError):
        CameraPose.from_heading_tilt_roll(ORIGIN, 0, 190, 0)


def test_nadir_center_and_border():
    pose = nadir_calibration_pose(ORIGIN, 0.0, 400.0)
    g = backproject_to_ground(PixelPoint(512, 512), CAM, pose, ORIGIN.altitude)
    assert dist(g, ORIGIN) < 1e-6
    g = backproject_to_ground(PixelPoint(1024, 512), CAM, pose, ORIGIN.altitude)
    assert dist(g, ORIGIN) == pytest.approx(400 * math.tan(math.radians(30)), abs=1e-2)


def test_nadir_heading_zero_is_north_up():
    pose = nadir_calibration_pose(ORIGIN, 0.0, 400.0)
    north = enu_to_geodetic([0.0, 50.0, 0.0], ORIGIN)
    east = enu_to_geodetic([50.0, 0.0, 0.0], ORIGIN)
    pn, _ = project(north, CAM, pose)
    pe, _ = project(east, CAM, pose)
    assert pn.v < 512 and pn.u == pytest.approx(512, abs=1e-6)
    assert pe.u > 512 and pe.v == pytest.approx(512, abs=1e-6)


def test_nadir_threshold_spacing():
    """45 m threshold at 400 m AGL, 60 deg, 1024 px."""
    rw = make_runway("LFBO", "14R", ORIGIN, 143.0, 3000.0, 45.0)
    pose = nadir_calibration_pose(ORIGIN, 143.0, 400.0)
    uv, front = project_runway(rw, CAM, pose)
    assert front.all()
    expected = 45 / (2 * 400 * math.tan(math.radians(30))) * 1024
    assert expected == pytest.approx(99.77, abs=0.01)
    assert uv[1, 0] - uv[0, 0] == pytest.approx(expected, rel=1e-4)
    assert uv[0, 1] == pytest.approx(512, abs=0.05)
    assert uv[3, 1] < 0  # the runway runs off the top of the frame
    for corner, px in zip(rw.corners[:2], uv[:2]):
        back = backproject_to_ground(PixelPoint(*px), CAM, pose, ORIGIN.altitude)
        assert dist(back, corner) < 1e-3


@st.composite
def camera_and_ground(draw):
    lat, lon = draw(st.floats(-60, 60)), draw(st.floats(-180, 180))
    ground = draw(st.floats(-50, 3000))
    agl = draw(st.floats(50, 3000))
    tilt = draw(st.floats(0, 80))
    heading, roll = draw(st.floats(0, 360)), draw(st.floats(-30, 30))
    pose = CameraPose.from_heading_tilt_roll(GeodeticPoint(lat, lon, ground + agl), heading, tilt, roll)
    u, v = draw(st.floats(0, 1024)), draw(st.floats(0, 1024))
    return pose, ground, PixelPoint(u, v)


@settings(max_examples=300)
@given(camera_and_ground())
def test_backproject_project_round_trip(sample):
    pose, ground, px = sample
    try:
        g = backproject_to_ground(px, CAM, pose, ground)
    except ProjectionError:
        return  # ray above the horizon
    # keep away from grazing incidence
    depth = dist(g, pose.position)
    if (pose.position.altitude - ground) / depth < math.sin(math.radians(5)):
        return
    assert g.altitude == pytest.approx(ground, abs=1e-6)
    back, front = project(g, CAM, pose)
    assert front
    assert back == pytest.approx(px, abs=1e-6)
    again = backproject_to_ground(back, CAM, pose, ground)
    assert dist(again, g) < 1e-3


def test_ray_above_horizon():
    pose = CameraPose.from_attitude(ORIGIN, Attitude(0.0, 0.0, 0.0))
    with pytest.raises(ProjectionError):
        backproject_to_ground(PixelPoint(512, 100), CAM, pose, ORIGIN.altitude - 100)
    with pytest.raises(ProjectionError):
        backproject_to_ground(PixelPoint(512, 900), CAM, pose, ORIGIN.altitude + 100)


def rect(x1, y1, x2, y2):
    return np.array([[x1, y1], [x2, y1], [x2, y2], [x1, y2]], dtype=float)


def test_quad_inside():
    box, frac = quad_to_bbox(rect(100, 200, 300, 260), [True] * 4, CAM)
    assert box == PixelBox(200, 230, 200, 60)
    assert frac == 1.0


def test_quad_half_outside_left():
    box, frac = quad_to_bbox(rect(-100, 200, 100, 260), [True] * 4, CAM)
    assert frac == pytest.approx(0.5)
    assert box.corners()[0] == 0.0
    assert box.w == pytest.approx(100)


def test_quad_behind_or_outside():
    assert quad_to_bbox(rect(100, 200, 300, 260), [True, True, False, True], CAM) is None
    assert quad_to_bbox(rect(-300, 200, -100, 260), [True] * 4, CAM) is None
    assert quad_to_bbox(rect(100, 200, 100, 260), [True] * 4, CAM) is None


@given(st.floats(-1500, 1500), st.floats(-1500, 1500), st.floats(1, 800), st.floats(1, 800))
def test_quad_box_in_image(x, y, w, h):
    out = quad_to_bbox(rect(x, y, x + w, y + h), [True] * 4, CAM)
    if out is None:
        return
    box, frac = out
    x1, y1, x2, y2 = box.corners()
    assert -1e-9 <= x1 and x2 <= 1024 + 1e-9 and -1e-9 <= y1 and y2 <= 1024 + 1e-9
    assert 0 <= frac <= 1


def test_visible_fraction_monotone_leaving_frame():
    quad = np.array([[400, 300], [520, 310], [560, 700], [380, 690]], dtype=float)
    fracs = []
    for shift in np.linspace(0, 1200, 61):
        out = quad_to_bbox(quad + [shift, 0], [True] * 4, CAM)
        fracs.append(0.0 if out is None else out[1])
    assert all(b <= a + 1e-12 for a, b in zip(fracs, fracs[1:]))
    assert fracs[0] == 1.0 and fracs[-1] == 0.0
