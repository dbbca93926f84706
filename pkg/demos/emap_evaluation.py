"""Three-row report for a detector that also finds some extended-ODD runways."""
import json

import numpy as np

from runwaybench import Detection, GroundTruth, GroundTruthSet, PixelBox, build_report

rng = np.random.default_rng(0)
gt, dets = GroundTruthSet(), []
for i in range(60):
    image, slot = f"im{i // 3}", i % 3
    box = PixelBox(150 + 300 * slot, 500, 120, 60)
    odd = "extended" if rng.random() < 0.25 else "in"
    gt.add(image, GroundTruth(box, odd))
    if odd == "in" or rng.random() < 0.5:
        jitter = rng.normal(0, 3, 4)
        dets.append(Detection(image, PixelBox(*(box.to_list() + jitter)), float(rng.uniform(0.55, 1))))

report = build_report(gt, dets)
print(f"{'score':6s} {'test GT':20s} {'#GT':>4s} {'mAP':>6s} {'mAP50':>6s} {'mAP75':>6s}")
for r in report.rows:
    print(f"{r.score:6s} {r.test_gt:20s} {r.gt_count_used:4d} {r.mAP:6.3f} {r.mAP50:6.3f} {r.mAP75:6.3f}")
print(json.dumps(report.e_map_gt_by_threshold, indent=None))
