"""Automatic multi-runway labelling of scenario poses.

For every pose, each runway whose projected outline is usefully visible
is a candidate.  Candidates are classified against the approach cone of
*their own* runway frame; In-ODD and Extended-ODD runways become ground
truth boxes, Out-of-ODD ones are left as unlabelled background.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .camera import CameraModel, PixelBox, project_runway, quad_to_bbox
from .errors import GeometryError, ValidationError
from .geodesy import RunwayGeometry, build_runway_frame, pose_parameters
from .odd import OddCategory, OddConfig, classify
from .scenario import Scenario, ScenarioPose, pose_from_dict, iter_runways

LABELLED = (OddCategory.IN_ODD, OddCategory.EXTENDED_ODD)


@dataclass(frozen=True)
class LabelConfig:
    min_visible_fraction: float = 0.25
    min_bbox_area_px: float = 16.0
    require_piano: bool = True
    source_tag: str = ""

    def __post_init__(self):
        if self.min_visible_fraction < 0 or self.min_bbox_area_px < 0:
            raise ValidationError("visibility thresholds must be non-negative")


@dataclass(frozen=True)
class Annotation:
    image_id: str
    airport: str
    runway: str
    bbox: PixelBox
    odd: str
    visible_fraction: float
    report: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.odd not in ("in", "extended"):
            raise ValidationError(f"annotation odd flag must be 'in' or 'extended', got {self.odd!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "airport": self.airport,
            "runway": self.runway,
            "bbox": self.bbox.to_list(),
            "odd": self.odd,
            "visible_fraction": float(self.visible_fraction),
        }


def image_id_for(pose: ScenarioPose, source_tag: str = "") -> str:
    return f"{pose.uuid}_{source_tag}" if source_tag else pose.uuid


def _visible(pose: ScenarioPose, cam: CameraModel, db, lc: LabelConfig):
    camera_pose = pose.camera_pose()
    for rw in iter_runways(db):
        if lc.require_piano and not rw.has_piano:
            continue
        uv, in_front = project_runway(rw, cam, camera_pose)
        out = quad_to_bbox(uv, in_front, cam)
        if out is None:
            continue
        bbox, fraction = out
        if fraction >= lc.min_visible_fraction and bbox.area >= lc.min_bbox_area_px:
            yield rw, bbox, fraction


def candidate_runways(pose: ScenarioPose, cam: CameraModel, db, lc: LabelConfig = LabelConfig()) -> list[RunwayGeometry]:
    return [rw for rw, _, _ in _visible(pose, cam, db, lc)]


def label_image(
    pose: ScenarioPose,
    cam: CameraModel,
    db,
    cfg: OddConfig = OddConfig(),
    lc: LabelConfig = LabelConfig(),
) -> list[Annotation]:
    image_id = image_id_for(pose, lc.source_tag)
    position, attitude = pose.position, pose.attitude
    annotations = []
    for rw, bbox, fraction in _visible(pose, cam, db, lc):
        try:
            params = pose_parameters(position, attitude, build_runway_frame(rw))
        except GeometryError:
            continue  # sitting on the VRP: no approach geometry
        verdict = classify(params, cfg)
        if verdict.category not in LABELLED:
            continue
        annotations.append(
            Annotation(
                image_id=image_id,
                airport=rw.airport_icao,
                runway=rw.runway_id,
                bbox=bbox,
                odd=verdict.category.value,
                visible_fraction=fraction,
                report=verdict.report(),
            )
        )
    annotations.sort(key=lambda a: (a.airport, a.runway))
    return annotations


# -- dataset manifest ---------------------------------------------------------


@dataclass(frozen=True)
class ManifestImage:
    image_id: str
    pose: ScenarioPose
    annotations: list[Annotation]

    def to_dict(self) -> dict[str, Any]:
        return {
            "image_id": self.image_id,
            "pose": self.pose.to_dict(),
            "annotations": [a.to_dict() for a in self.annotations],
        }


@dataclass(frozen=True)
class Manifest:
    source_tag: str
    image: CameraModel
    odd_config_hash: str
    images: list[ManifestImage]

    def to_dict(self) -> dict[str, Any]:
        images = sorted(self.images, key=lambda im: im.image_id)
        return {
            "meta": {
                "source_tag": self.source_tag,
                "image": {
                    "w": int(self.image.width),
                    "h": int(self.image.height),
                    "fov_x": float(self.image.fov_x),
                    "fov_y": float(self.image.fov_y),
                },
                "odd_config_hash": self.odd_config_hash,
            },
            "images": [im.to_dict() for im in images],
        }

    @property
    def annotations(self) -> list[Annotation]:
        return [a for im in self.images for a in im.annotations]


def label_scenario(
    scenario: Scenario,
    db,
    cfg: OddConfig = OddConfig(),
    lc: LabelConfig = LabelConfig(),
) -> Manifest:
    images = [
        ManifestImage(image_id_for(p, lc.source_tag), p, label_image(p, scenario.image, db, cfg, lc))
        for p in scenario.poses
    ]
    return Manifest(lc.source_tag, scenario.image, cfg.digest(), images)


def dumps_manifest(manifest: Manifest) -> str:
    return json.dumps(manifest.to_dict(), indent=1)


def write_annotations(manifest: Manifest, sink=None) -> str:
    """Serialize with images sorted by id and annotations by (airport, runway).

    ``sink`` may be a path, a writable file object or None.
    """
    text = dumps_manifest(manifest)
    if sink is None:
        return text
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def manifest_from_dict(data: Mapping[str, Any]) -> Manifest:
    try:
        meta = data["meta"]
        img = meta["image"]
        image = CameraModel(int(img["w"]), int(img["h"]), float(img["fov_x"]), float(img["fov_y"]))
        images = []
        for i, entry in enumerate(data["images"]):
            image_id = str(entry["image_id"])
            anns = [
                Annotation(
                    image_id=image_id,
                    airport=str(a["airport"]),
                    runway=str(a["runway"]),
                    bbox=PixelBox(*(float(x) for x in a["bbox"])),
                    odd=str(a["odd"]),
                    visible_fraction=float(a["visible_fraction"]),
                )
                for a in entry["annotations"]
            ]
            images.append(ManifestImage(image_id, pose_from_dict(entry["pose"], i), anns))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed manifest: missing or invalid {exc}") from exc
    return Manifest(str(meta.get("source_tag", "")), image, str(meta.get("odd_config_hash", "")), images)


def parse_manifest(text: str) -> Manifest:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest is not valid JSON: {exc}") from exc
    return manifest_from_dict(data)


def load_manifest(path) -> Manifest:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh.read())


def count_flags(annotations: Iterable[Annotation]) -> dict[str, int]:
    counts = {"in": 0, "extended": 0}
    for a in annotations:
        counts[a.odd] += 1
    return counts
