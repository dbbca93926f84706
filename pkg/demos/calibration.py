"""Closed-loop nadir calibration: shift a threshold, recover it from pixels."""
from runwaybench import CameraModel, GeodeticPoint, make_runway
from runwaybench.calibration import CornerObservation, calibrate, horizontal_error
from runwaybench.camera import PixelPoint, nadir_calibration_pose, project_runway
from runwaybench.geodesy import enu_to_geodetic

cam = CameraModel(1024, 1024, 60.0, 60.0)
center = GeodeticPoint(43.6448, 1.3448, 151.0)
truth = make_runway("LFBO", "14R", center, 143.0, 3500.0, 45.0)
database = make_runway("LFBO", "14R", enu_to_geodetic([3.0, -2.0, 0.0], center), 143.0, 3500.0, 45.0)

pose = nadir_calibration_pose(database.threshold_center(), 143.0, 400.0)
uv, _ = project_runway(truth, cam, pose)  # what a labeller clicks on the nadir image
obs = CornerObservation("nadir-1", "LFBO", "14R", database.threshold_center(), 143.0,
                        PixelPoint(*uv[0]), PixelPoint(*uv[1]))
got = calibrate(obs, cam)
for name, before, after, want in (("left", database.corners[0], got.left, truth.corners[0]),
                                  ("right", database.corners[1], got.right, truth.corners[1])):
    print(f"{name:5s}: database off by {horizontal_error(before, want):.3f} m, "
          f"calibrated off by {horizontal_error(after, want):.2e} m")
