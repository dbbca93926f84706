"""Shared generators for the test suite."""
from __future__ import annotations

import numpy as np

from runwaybench.camera import PixelBox
from runwaybench.geodesy import GeodeticPoint, make_runway
from runwaybench.metrics import Detection, GroundTruth, GroundTruthSet


def random_runway(rng: np.random.Generator, icao: str = "ZZZZ", rid: str = "09"):
    center = GeodeticPoint(
        float(rng.uniform(-65, 65)), float(rng.uniform(-180, 180)), float(rng.uniform(-50, 2500))
    )
    return make_runway(
        icao,
        rid,
        center,
        float(rng.uniform(0, 360)),
        float(rng.uniform(1500, 4000)),
        float(rng.uniform(30, 60)),
    )


def random_instance(rng: np.random.Generator, max_ext: int = 8, n_images=(1, 5)):
    """Small detection problem on a 4x4 grid of non-overlapping GT slots.

    Detections are jittered copies of GT boxes plus random clutter; some
    GT boxes are flagged extended, never more than ``max_ext``.
    """
    gt, dets = GroundTruthSet(), []
    ext_left = int(rng.integers(0, max_ext + 1))
    first = True
    for k in range(int(rng.integers(*n_images))):
        iid = f"img{k}"
        gt.images[iid] = []
        for s in rng.permutation(16)[: rng.integers(1, 5)]:
            cx, cy = 50 + 100 * (s % 4), 50 + 100 * (s // 4)
            w, h = rng.uniform(20, 60), rng.uniform(20, 60)
            odd = "in" if first or ext_left == 0 or rng.random() < 0.5 else "extended"
            ext_left -= odd == "extended"
            first = False
            gt.add(iid, GroundTruth(PixelBox(cx, cy, w, h), odd))
            for _ in range(rng.integers(0, 3)):
                j = rng.normal(0, rng.choice([1, 5, 10]), 4)
                box = PixelBox(cx + j[0], cy + j[1], max(1.0, w + j[2]), max(1.0, h + j[3]))
                dets.append(Detection(iid, box, float(rng.uniform(0.3, 1))))
        for _ in range(rng.integers(0, 3)):
            box = PixelBox(*rng.uniform(0, 400, 2), *rng.uniform(10, 50, 2))
            dets.append(Detection(iid, box, float(rng.uniform(0.3, 1))))
    return gt, dets


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> bool:
    line = f"acceptance {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
