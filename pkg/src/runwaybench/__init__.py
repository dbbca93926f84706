"""Runway-detection benchmark toolkit: approach-cone ODD, geodesy, camera
projection, scenario generation, automatic labelling and ODD-aware metrics."""

from .errors import GeometryError, MetricError, ProjectionError, RunwayBenchError, ValidationError
from .geodesy import (
    Attitude,
    GeodeticPoint,
    RunwayFrame,
    RunwayGeometry,
    build_runway_frame,
    make_runway,
    pose_parameters,
)
from .odd import OddCategory, OddClass, OddConfig, PoseParameters, classify
from .camera import CameraModel, CameraPose, PixelBox, backproject_to_ground, project, quad_to_bbox
from .scenario import (
    SamplingSpec,
    Scenario,
    ScenarioPose,
    emit_scenario,
    load_runway_db,
    parse_runway_db,
    parse_scenario,
    pose_from_parameters,
    sample_scenario,
    split_airports,
)
from .labeler import LabelConfig, Manifest, count_flags, label_image, label_scenario, write_annotations
from .metrics import Detection, EvalConfig, GroundTruth, GroundTruthSet, build_report, e_map, map_suite

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
