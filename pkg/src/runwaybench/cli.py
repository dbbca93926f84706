"""Command-line front end.

Every subcommand writes its primary output to ``--out`` (or stdout) and,
next to a file output, a ``<out>.run.json`` run manifest recording the
command, effective configuration, seed, input hashes, tool version and
timestamps.  Settings resolve as flags > ``--config`` file > defaults.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from . import __version__
from .calibration import apply_calibration, calibrate, fragment, read_corner_csv
from .camera import CameraModel
from .errors import RunwayBenchError, ValidationError
from .labeler import LabelConfig, label_scenario, load_manifest, write_annotations
from .metrics import (
    COCO_THRESHOLDS,
    EvalConfig,
    GroundTruthSet,
    build_report,
    crossbar,
    parse_predictions,
)
from .odd import PARAMETERS, OddConfig
from .scenario import (
    DEFAULT_TIME,
    Normal,
    SamplingSpec,
    Uniform,
    dump_runway_db,
    emit_scenario,
    load_runway_db,
    load_scenario,
    sample_scenario,
    split_manifest,
)

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2

IMAGE_DEFAULTS = {"width": 1024, "height": 1024, "fov_x": 60.0, "fov_y": 60.0}

DEFAULTS: dict[str, dict[str, Any]] = {
    "sample": {
        "runway_db": None,
        "airports": None,
        "per_segment": 10,
        "seed": 0,
        "odd_config": None,
        "distributions": {},
        "time": dict(DEFAULT_TIME),
        **IMAGE_DEFAULTS,
    },
    "label": {
        "scenario": None,
        "runway_db": None,
        "odd_config": None,
        "source_tag": "",
        "min_visible_fraction": 0.25,
        "min_area": 16.0,
        "ignore_piano": False,
    },
    "calibrate": {
        "corners": None,
        "runway_db": None,
        "altitude_agl": 400.0,
        "source": "",
        **IMAGE_DEFAULTS,
    },
    "eval": {
        "manifest": None,
        "predictions": None,
        "pair": None,
        "crossbar_out": None,
        "metric": "mAP",
        "score_threshold": 0.5,
        "iou_thresholds": list(COCO_THRESHOLDS),
        "exhaustive_limit": 20,
    },
    "split": {"airports": None, "runway_db": None, "ratio": 0.5, "seed": 0},
    "dump-odd-config": {"odd_config": None},
}


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1), not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _settings(command: str, args: argparse.Namespace) -> dict[str, Any]:
    defaults = DEFAULTS[command]
    from_file: dict[str, Any] = {}
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        try:
            loaded = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ValidationError(f"config file: {exc}") from exc
        if not isinstance(loaded, Mapping):
            raise ValidationError("config file must be a mapping")
        from_file = {str(k).replace("-", "_"): v for k, v in loaded.items()}
        unknown = set(from_file) - set(defaults)
        if unknown:
            raise ValidationError(f"unknown keys for '{command}' in config file: {sorted(unknown)}")
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else from_file.get(key, default)
    return out


def _require(settings: Mapping[str, Any], *keys: str):
    for k in keys:
        if settings.get(k) in (None, ""):
            raise ValidationError(f"--{k.replace('_', '-')} is required")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _odd_config(path) -> OddConfig:
    if not path:
        return OddConfig()
    return OddConfig.loads(Path(path).read_text(encoding="utf-8"))


def _camera(s: Mapping[str, Any]) -> CameraModel:
    try:
        return CameraModel(int(s["width"]), int(s["height"]), float(s["fov_x"]), float(s["fov_y"]))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad camera settings: {exc}") from exc


def _emit(text: str, out) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _jsonable(value):
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_run_manifest(path, command: str, settings, seed, inputs: Sequence, started: str) -> dict:
    record = {
        "command": command,
        "argv": sys.argv[1:],
        "config": _jsonable(settings),
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "tool_version": __version__,
        "started": started,
        "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=1)
        fh.write("\n")
    return record


# -- subcommands ----------------------------------------------------------------


def _distribution(name: str, spec) -> Uniform | Normal:
    if not isinstance(spec, Mapping) or len(spec) != 1:
        raise ValidationError(f"{name}: distribution must be {{uniform: [lo, hi]}} or {{normal: [mean, std]}}")
    (kind, values), = spec.items()
    try:
        a, b = (float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name}: {kind} needs two numbers") from exc
    if kind == "uniform":
        return Uniform(a, b)
    if kind == "normal":
        return Normal(a, b)
    raise ValidationError(f"{name}: unknown distribution {kind!r}")


def _select_runways(db, selection):
    if not selection:
        return [rw for icao in sorted(db) for _, rw in sorted(db[icao].items())]
    items = selection.split(",") if isinstance(selection, str) else list(selection)
    out = []
    for item in (str(i).strip() for i in items):
        icao, _, rid = item.partition("/")
        if icao not in db:
            raise ValidationError(f"airport {icao!r} is not in the runway database")
        if rid:
            if rid not in db[icao]:
                raise ValidationError(f"runway {icao}/{rid} is not in the runway database")
            out.append(db[icao][rid])
        else:
            out.extend(rw for _, rw in sorted(db[icao].items()))
    return out


def cmd_sample(s: dict[str, Any]):
    _require(s, "runway_db")
    db = load_runway_db(s["runway_db"])
    cfg = _odd_config(s["odd_config"])
    dists = {k: _distribution(k, v) for k, v in (s["distributions"] or {}).items()}
    unknown = set(dists) - set(PARAMETERS)
    if unknown:
        raise ValidationError(f"unknown sampled parameters: {sorted(unknown)}")
    spec = SamplingSpec(dists, int(s["per_segment"]), int(s["seed"]), dict(s["time"]))
    scenario = sample_scenario(
        _select_runways(db, s["airports"]),
        spec,
        cfg,
        _camera(s),
        runways_database=os.path.basename(s["runway_db"]),
    )
    inputs = [s["runway_db"]] + ([s["odd_config"]] if s["odd_config"] else [])
    return emit_scenario(scenario), inputs, spec.seed


def _db_for_source(path, tag: str):
    p = Path(path)
    if p.is_dir():
        if not tag:
            raise ValidationError("--source-tag is required when --runway-db is a directory")
        p = p / f"{tag}.json"
    return p, load_runway_db(p)


def cmd_label(s: dict[str, Any]):
    _require(s, "scenario", "runway_db")
    db_path, db = _db_for_source(s["runway_db"], s["source_tag"])
    lc = LabelConfig(float(s["min_visible_fraction"]), float(s["min_area"]), not s["ignore_piano"], s["source_tag"])
    manifest = label_scenario(load_scenario(s["scenario"]), db, _odd_config(s["odd_config"]), lc)
    inputs = [s["scenario"], db_path] + ([s["odd_config"]] if s["odd_config"] else [])
    return write_annotations(manifest), inputs, None


def cmd_calibrate(s: dict[str, Any]):
    _require(s, "corners")
    cam = _camera(s)
    with open(s["corners"], encoding="utf-8", newline="") as fh:
        observations = read_corner_csv(fh)
    results = [calibrate(o, cam, float(s["altitude_agl"])) for o in observations]
    frag = fragment(results, s["source"])
    inputs = [s["corners"]]
    if s["runway_db"]:
        inputs.append(s["runway_db"])
        return dump_runway_db(apply_calibration(load_runway_db(s["runway_db"]), frag)), inputs, None
    return json.dumps(frag, indent=2), inputs, None


def _eval_config(s: Mapping[str, Any]) -> EvalConfig:
    thr = s["score_threshold"]
    if isinstance(thr, str):
        thr = None if thr.lower() == "none" else float(thr)
    return EvalConfig(thr, tuple(float(t) for t in s["iou_thresholds"]), exhaustive_limit=int(s["exhaustive_limit"]))


def _evaluate(manifest_path, predictions_path, cfg: EvalConfig):
    gt = GroundTruthSet.from_manifest(load_manifest(manifest_path))
    dets = parse_predictions(Path(predictions_path).read_text(encoding="utf-8"))
    unknown = sorted({d.image_id for d in dets} - set(gt.images))
    if unknown:
        raise ValidationError(f"predictions reference images missing from the manifest: {unknown[:5]}")
    return build_report(gt, dets, cfg)


def cmd_eval(s: dict[str, Any]):
    cfg = _eval_config(s)
    if s["pair"]:
        if s["manifest"] or s["predictions"]:
            raise ValidationError("use either --pair or --manifest/--predictions, not both")
        reports, rows, cols, inputs = {}, [], [], []
        for row, col, man, pred in s["pair"]:
            if (row, col) in reports:
                raise ValidationError(f"duplicate crossbar cell ({row}, {col})")
            reports[(row, col)] = _evaluate(man, pred, cfg)
            rows += [row] if row not in rows else []
            cols += [col] if col not in cols else []
            inputs += [man, pred]
        tables = crossbar(reports, s["metric"], rows, cols)
        if s["crossbar_out"]:
            os.makedirs(s["crossbar_out"], exist_ok=True)
            for family, text in tables.items():
                with open(os.path.join(s["crossbar_out"], f"{family}.csv"), "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
        doc = {"cells": [{"row": r, "col": c, "report": rep.to_dict()} for (r, c), rep in reports.items()]}
        return json.dumps(doc, indent=1), inputs, None
    _require(s, "manifest", "predictions")
    report = _evaluate(s["manifest"], s["predictions"], cfg)
    return json.dumps(report.to_dict(), indent=1), [s["manifest"], s["predictions"]], None


def cmd_split(s: dict[str, Any]):
    if bool(s["airports"]) == bool(s["runway_db"]):
        raise ValidationError("give exactly one of --airports or --runway-db")
    if s["airports"]:
        lines = Path(s["airports"]).read_text(encoding="utf-8").splitlines()
        airports = [a.strip() for a in lines if a.strip() and not a.lstrip().startswith("#")]
        src = s["airports"]
    else:
        airports = list(load_runway_db(s["runway_db"]))
        src = s["runway_db"]
    doc = split_manifest(airports, float(s["ratio"]), int(s["seed"]))
    return json.dumps(doc, indent=1), [src], int(s["seed"])


def cmd_dump_odd_config(s: dict[str, Any]):
    cfg = _odd_config(s["odd_config"])
    return cfg.dumps(), [s["odd_config"]] if s["odd_config"] else [], None


COMMANDS = {
    "sample": cmd_sample,
    "label": cmd_label,
    "calibrate": cmd_calibrate,
    "eval": cmd_eval,
    "split": cmd_split,
    "dump-odd-config": cmd_dump_odd_config,
}


def _camera_flags(p):
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--fov-x", type=float, help="horizontal field of view, degrees")
    p.add_argument("--fov-y", type=float, help="vertical field of view, degrees")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="runwaybench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="YAML file of settings (overridden by flags)")
        p.add_argument("--out", help="output file (default: stdout)")
        return p

    p = command("sample", "generate an in-ODD scenario file")
    p.add_argument("--runway-db")
    p.add_argument("--airports", help="comma-separated ICAO or ICAO/RUNWAY list (default: all)")
    p.add_argument("--per-segment", type=int, help="poses per runway and approach segment")
    p.add_argument("--seed", type=int)
    p.add_argument("--odd-config")
    _camera_flags(p)

    p = command("label", "label scenario poses against a runway database")
    p.add_argument("--scenario")
    p.add_argument("--runway-db", help="database file, or a directory of <source-tag>.json files")
    p.add_argument("--odd-config")
    p.add_argument("--source-tag")
    p.add_argument("--min-visible-fraction", type=float)
    p.add_argument("--min-area", type=float, help="minimum clipped box area, pixels")
    p.add_argument("--ignore-piano", action="store_true", default=None, help="label runways without threshold markings")

    p = command("calibrate", "recover threshold corners from nadir pixel observations")
    p.add_argument("--corners", help="CSV of pixel corner observations")
    p.add_argument("--runway-db", help="emit this database with calibrated corners instead of a fragment")
    p.add_argument("--altitude-agl", type=float)
    p.add_argument("--source", help="source tag recorded on calibrated runways")
    _camera_flags(p)

    p = command("eval", "score predictions against a labelled manifest")
    p.add_argument("--manifest")
    p.add_argument("--predictions")
    p.add_argument("--pair", nargs=4, action="append", metavar=("ROW", "COL", "MANIFEST", "PREDICTIONS"))
    p.add_argument("--crossbar-out", help="directory for per-family crossbar CSVs")
    p.add_argument("--metric", choices=("mAP", "mAP50", "mAP75"))
    p.add_argument("--score-threshold", help="keep detections scoring above this; 'none' keeps all")
    p.add_argument("--exhaustive-limit", type=int)

    p = command("split", "train/test split at airport granularity")
    p.add_argument("--airports", help="text file, one ICAO per line")
    p.add_argument("--runway-db")
    p.add_argument("--ratio", type=float, help="fraction of airports reserved for test")
    p.add_argument("--seed", type=int)

    p = command("dump-odd-config", "print the (default or given) ODD configuration")
    p.add_argument("--odd-config")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    started = dt.datetime.now(dt.timezone.utc).isoformat()
    try:
        settings = _settings(args.command, args)
        text, inputs, seed = COMMANDS[args.command](settings)
        _emit(text, args.out)
        if args.out:
            write_run_manifest(f"{args.out}.run.json", args.command, settings, seed, inputs, started)
    except (RunwayBenchError, ValueError) as exc:
        print(f"runwaybench {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"runwaybench {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
