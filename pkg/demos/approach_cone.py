"""Walk a pose down the centerline and print how the approach cone classifies it."""
from runwaybench import OddConfig, PoseParameters, classify

cfg = OddConfig()
print(cfg.dumps())
print(f"{'along':>8} {'yaw':>6} {'roll':>6}  class     segment")
for along in (-8000, -6000, -4500, -3000, -1000, -280, -100):
    for yaw, roll in ((0, 0), (20, 12), (40, 0)):
        c = classify(PoseParameters(along, 0.0, -3.0, yaw, -3.0, roll), cfg)
        seg = c.segment.index if c.segment else "-"
        print(f"{along:8.0f} {yaw:6.1f} {roll:6.1f}  {c.category.value:9s} {seg}")
