"""Sample in-ODD poses on the bundled LFBO runways and label every visible runway."""
from importlib import resources

from runwaybench import LabelConfig, count_flags, emit_scenario, label_scenario, parse_runway_db, sample_scenario
from runwaybench.scenario import SamplingSpec

db = parse_runway_db(resources.files("runwaybench").joinpath("data/lfbo_sample_runways.json").read_text())
runways = [db["LFBO"]["14R"], db["LFBO"]["32L"]]
scenario = sample_scenario(runways, SamplingSpec(poses_per_segment=3, seed=1))
print(emit_scenario(scenario)[:600], "...\n")

manifest = label_scenario(scenario, db, lc=LabelConfig(source_tag="demo"))
for im in manifest.images:
    tags = ", ".join(f"{a.runway}:{a.odd}" for a in im.annotations)
    print(f"{im.image_id[:13]}  target {im.pose.runway}  ->  {tags}")
print(count_flags(manifest.annotations))
