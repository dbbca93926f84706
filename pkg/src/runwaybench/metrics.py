"""Single-class detection metrics: AP, mAP and the extended e-mAP.

AP is the area under the precision envelope (all-point interpolation)
with detections pooled over images.  The averaged ``mAP`` uses IoU
thresholds 0.50:0.05:0.95.  Because there is one class ("runway"), mAP
at a threshold is the AP at that threshold.

e-mAP at a threshold is the best AP over every subset J of the
Extended-ODD ground truths, evaluated with In-ODD boxes plus J as
targets.  It is computed exactly by enumeration when the extended pool is
small and by a greedy search otherwise.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .camera import PixelBox
from .errors import MetricError, ValidationError

COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
FLAGS = ("in", "extended")


@dataclass(frozen=True)
class Detection:
    image_id: str
    bbox: PixelBox
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"detection score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    bbox: PixelBox
    odd: str = "in"
    ref: tuple[str, str] | None = None

    def __post_init__(self):
        if self.odd not in FLAGS:
            raise ValidationError(f"ground-truth flag must be one of {FLAGS}, got {self.odd!r}")


class GroundTruthSet:
    """Ground-truth boxes per image, in insertion order."""

    def __init__(self, images: Mapping[str, Sequence[GroundTruth]] | None = None):
        self.images: dict[str, list[GroundTruth]] = {k: list(v) for k, v in (images or {}).items()}

    def add(self, image_id: str, gt: GroundTruth):
        self.images.setdefault(image_id, []).append(gt)

    def count(self, flags: Iterable[str] = FLAGS) -> int:
        flags = set(flags)
        return sum(g.odd in flags for gts in self.images.values() for g in gts)

    def filtered(self, flags: Iterable[str]) -> "GroundTruthSet":
        flags = set(flags)
        return GroundTruthSet({k: [g for g in v if g.odd in flags] for k, v in self.images.items()})

    def extended_pool(self) -> list[tuple[str, int]]:
        return [(k, i) for k, gts in self.images.items() for i, g in enumerate(gts) if g.odd == "extended"]

    @classmethod
    def from_manifest(cls, manifest) -> "GroundTruthSet":
        out = cls()
        for im in manifest.images:
            out.images.setdefault(im.image_id, [])
            for a in im.annotations:
                out.add(im.image_id, GroundTruth(a.bbox, a.odd, (a.airport, a.runway)))
        return out


@dataclass(frozen=True)
class EvalConfig:
    score_threshold: float | None = 0.5
    iou_thresholds: tuple[float, ...] = COCO_THRESHOLDS
    named_thresholds: Mapping[str, float] = field(
        default_factory=lambda: {"mAP50": 0.50, "mAP75": 0.75}
    )
    exhaustive_limit: int = 20

    def __post_init__(self):
        for t in (*self.iou_thresholds, *self.named_thresholds.values()):
            if not 0.0 < t < 1.0:
                raise ValidationError(f"IoU threshold {t} outside (0, 1)")
        if not self.iou_thresholds:
            raise ValidationError("at least one IoU threshold is required")

    @property
    def all_thresholds(self) -> tuple[float, ...]:
        return tuple(sorted(set(self.iou_thresholds) | set(self.named_thresholds.values())))


def filter_detections(dets: Iterable[Detection], threshold: float | None) -> list[Detection]:
    """Keep detections with score strictly above ``threshold``."""
    if threshold is None:
        return list(dets)
    return [d for d in dets if d.score > threshold]


def group_detections(dets: Iterable[Detection]) -> dict[str, list[Detection]]:
    out: dict[str, list[Detection]] = {}
    for d in dets:
        out.setdefault(d.image_id, []).append(d)
    return out


# -- IoU and matching ---------------------------------------------------------------


def _xyxy(boxes: Sequence[PixelBox]) -> np.ndarray:
    if not boxes:
        return np.zeros((0, 4))
    return np.array([b.corners() for b in boxes], dtype=float)


def iou_matrix(a: Sequence[PixelBox], b: Sequence[PixelBox]) -> np.ndarray:
    """Pairwise IoU, shape (len(a), len(b))."""
    A, B = _xyxy(a), _xyxy(b)
    ix = np.clip(np.minimum(A[:, None, 2], B[None, :, 2]) - np.maximum(A[:, None, 0], B[None, :, 0]), 0, None)
    iy = np.clip(np.minimum(A[:, None, 3], B[None, :, 3]) - np.maximum(A[:, None, 1], B[None, :, 1]), 0, None)
    inter = ix * iy
    area_a = (A[:, 2] - A[:, 0]) * (A[:, 3] - A[:, 1])
    area_b = (B[:, 2] - B[:, 0]) * (B[:, 3] - B[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def iou(a: PixelBox, b: PixelBox) -> float:
    return float(iou_matrix([a], [b])[0, 0])


@dataclass(frozen=True)
class ImageMatch:
    """Greedy matching of one image; detections in descending score order."""

    image_id: str
    scores: np.ndarray
    tp: np.ndarray
    gt_index: np.ndarray  # matched ground-truth index, -1 for false positives
    n_gt: int

    @property
    def n_tp(self) -> int:
        return int(self.tp.sum())

    @property
    def n_fp(self) -> int:
        return int(len(self.tp) - self.tp.sum())

    @property
    def n_fn(self) -> int:
        return self.n_gt - self.n_tp


def _greedy(ious: np.ndarray, tau: float) -> np.ndarray:
    """Rows are detections in score order; returns matched column or -1."""
    n_det, n_gt = ious.shape
    assigned = np.full(n_det, -1, dtype=int)
    free = np.ones(n_gt, dtype=bool)
    for d in range(n_det):
        if not free.any():
            break
        cand = np.where(free & (ious[d] >= tau), ious[d], -1.0)
        g = int(np.argmax(cand))  # first index wins IoU ties
        if cand[g] >= tau:
            assigned[d] = g
            free[g] = False
    return assigned


def match(gts: Sequence[PixelBox], dets: Sequence[Detection], tau: float, image_id: str = "") -> ImageMatch:
    """One-to-one greedy matching of one image's detections to its ground truth.

    Detections are visited by descending score (input order on ties); each
    takes the still-unmatched ground truth with the highest IoU >= tau.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    ranked = [dets[i] for i in order]
    ious = iou_matrix([d.bbox for d in ranked], list(gts))
    assigned = _greedy(ious, tau) if len(gts) else np.full(len(ranked), -1, dtype=int)
    if not image_id and ranked:
        image_id = ranked[0].image_id
    return ImageMatch(
        image_id=image_id,
        scores=np.array([d.score for d in ranked], dtype=float),
        tp=assigned >= 0,
        gt_index=assigned,
        n_gt=len(gts),
    )


def match_dataset(gt: GroundTruthSet, dets: Iterable[Detection], tau: float) -> list[ImageMatch]:
    by_image = group_detections(dets)
    ids = sorted(set(gt.images) | set(by_image))
    return [match([g.bbox for g in gt.images.get(i, [])], by_image.get(i, []), tau, i) for i in ids]


# -- average precision -------------------------------------------------------------


def _ap_sorted(tp: np.ndarray, n_gt: int) -> float:
    if len(tp) == 0:
        return 0.0
    hits = np.cumsum(tp)
    precision = hits / np.arange(1, len(tp) + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(envelope[tp].sum() / n_gt)


def _pooled_order(matches: Sequence[ImageMatch]) -> np.ndarray:
    scores = np.concatenate([m.scores for m in matches]) if matches else np.zeros(0)
    ids = np.concatenate([np.full(len(m.scores), m.image_id, dtype=object) for m in matches]) if matches else np.zeros(0, dtype=object)
    ranks = np.concatenate([np.arange(len(m.scores)) for m in matches]) if matches else np.zeros(0, dtype=int)
    if len(scores) == 0:
        return np.zeros(0, dtype=int)
    # image ids through their sorted codes so order never depends on input order
    _, codes = np.unique(ids.astype(str), return_inverse=True)
    return np.lexsort((ranks, codes, -scores))


def average_precision(matches: Iterable[ImageMatch]) -> float:
    """AP of pooled per-image matchings; order of ``matches`` is irrelevant."""
    matches = list(matches)
    n_gt = sum(m.n_gt for m in matches)
    if n_gt == 0:
        raise MetricError("average precision is undefined without ground truth")
    if not matches:
        return 0.0
    tp = np.concatenate([m.tp for m in matches])
    return _ap_sorted(tp[_pooled_order(matches)], n_gt)


def ap_at(gt: GroundTruthSet, dets: Iterable[Detection], tau: float) -> float:
    return average_precision(match_dataset(gt, dets, tau))


@dataclass(frozen=True)
class MapResult:
    mAP: float
    named: dict[str, float]
    per_threshold: dict[float, float]

    def __getitem__(self, key: str) -> float:
        return self.mAP if key == "mAP" else self.named[key]

    def triple(self) -> tuple[float, ...]:
        return (self.mAP, *self.named.values())


def map_suite(
    gt: GroundTruthSet,
    dets: Iterable[Detection],
    cfg: EvalConfig = EvalConfig(),
    flags: Iterable[str] = ("in",),
) -> MapResult:
    """mAP over ``cfg.iou_thresholds`` plus the named thresholds, on GT with ``flags``."""
    sub = gt.filtered(flags)
    kept = filter_detections(dets, cfg.score_threshold)
    per = {t: ap_at(sub, kept, t) for t in cfg.all_thresholds}
    return MapResult(
        mAP=float(np.mean([per[t] for t in cfg.iou_thresholds])),
        named={k: per[t] for k, t in cfg.named_thresholds.items()},
        per_threshold=per,
    )


# -- extended mAP ------------------------------------------------------------------


class _SubsetEvaluator:
    """AP at one threshold for In-ODD GT plus any subset of the extended pool.

    Images without extended ground truth are matched once.  Images with
    extended ground truth cache their matching per local subset, so each
    evaluation only rebuilds the TP flags of those images.
    """

    def __init__(self, gt: GroundTruthSet, dets: Iterable[Detection], tau: float):
        self.tau = tau
        self.gt = gt
        self.pool = gt.extended_pool()
        self.n_in = gt.count(("in",))
        by_image = group_detections(dets)
        ids = sorted(set(gt.images) | set(by_image))
        self.ranked = {i: sorted(by_image.get(i, []), key=lambda d: -d.score) for i in ids}

        self._local: dict[str, list[int]] = {}
        for pos, (img, _) in enumerate(self.pool):
            self._local.setdefault(img, []).append(pos)

        matches = [self._match(i, frozenset()) for i in ids]
        order = _pooled_order(matches)
        offsets = np.cumsum([0] + [len(m.scores) for m in matches])
        self._slices = {m.image_id: (offsets[k], offsets[k + 1]) for k, m in enumerate(matches)}
        self._base = np.concatenate([m.tp for m in matches]) if matches else np.zeros(0, dtype=bool)
        self._order = order
        self._cache: dict[tuple[str, frozenset], ImageMatch] = {}

    def _match(self, image_id: str, chosen: frozenset) -> ImageMatch:
        """``chosen`` holds pool positions of extended GT kept for this image."""
        keep_idx = {self.pool[p][1] for p in chosen}
        boxes = [
            g.bbox
            for i, g in enumerate(self.gt.images.get(image_id, []))
            if g.odd == "in" or i in keep_idx
        ]
        dets = self.ranked[image_id]
        ious = iou_matrix([d.bbox for d in dets], boxes)
        assigned = _greedy(ious, self.tau) if boxes else np.full(len(dets), -1, dtype=int)
        return ImageMatch(image_id, np.array([d.score for d in dets]), assigned >= 0, assigned, len(boxes))

    def _cached(self, image_id: str, chosen: frozenset) -> ImageMatch:
        key = (image_id, chosen)
        if key not in self._cache:
            self._cache[key] = self._match(image_id, chosen)
        return self._cache[key]

    def score(self, subset: Iterable[int]) -> tuple[float, int] | None:
        """(AP, true positives) for In-ODD GT plus the pool positions in
        ``subset``; None if there is no GT at all."""
        subset = frozenset(subset)
        n_gt = self.n_in + len(subset)
        if n_gt == 0:
            return None
        tp = self._base.copy()
        for img, positions in self._local.items():
            chosen = subset.intersection(positions)
            if chosen:
                lo, hi = self._slices[img]
                tp[lo:hi] = self._cached(img, chosen).tp
        return _ap_sorted(tp[self._order], n_gt), int(tp.sum())

    def value(self, subset: Iterable[int]) -> float | None:
        s = self.score(subset)
        return None if s is None else s[0]

    def matched_pool(self) -> dict[int, float]:
        """Pool positions matched when every extended GT is a target, with the
        matching detection's score."""
        out = {}
        for img, positions in self._local.items():
            # with every GT of the image kept, matched columns are GT indices
            m = self._cached(img, frozenset(positions))
            score_of = {int(col): float(m.scores[r]) for r, col in enumerate(m.gt_index) if col >= 0}
            for p in positions:
                gt_idx = self.pool[p][1]
                if gt_idx in score_of:
                    out[p] = score_of[gt_idx]
        return out


@dataclass(frozen=True)
class EMapResult:
    value: float
    subset: frozenset  # of (image_id, gt_index)
    exact: bool

    @property
    def gt_added(self) -> int:
        return len(self.subset)


_EPS = 1e-12


class _Choice:
    """Candidate J ordered by AP, then true positives, then smaller size."""

    __slots__ = ("subset", "ap", "tp")

    def __init__(self, subset: frozenset, ap: float, tp: int):
        self.subset, self.ap, self.tp = subset, ap, tp

    def beats(self, other: "_Choice | None") -> bool:
        if other is None or self.ap > other.ap + _EPS:
            return True
        if self.ap < other.ap - _EPS:
            return False
        if self.tp != other.tp:
            return self.tp > other.tp
        return len(self.subset) < len(other.subset)


def _choice(ev: _SubsetEvaluator, subset: frozenset) -> _Choice | None:
    s = ev.score(subset)
    return None if s is None else _Choice(subset, *s)


def _best(ev: _SubsetEvaluator, candidates: Iterable[frozenset]) -> _Choice:
    best = None
    for subset in candidates:
        c = _choice(ev, subset)
        if c is not None and c.beats(best):
            best = c
    if best is None:
        raise MetricError("e-mAP is undefined without any ground truth")
    return best


def _result(ev: _SubsetEvaluator, best: _Choice, exact: bool) -> EMapResult:
    return EMapResult(best.ap, frozenset(ev.pool[p] for p in best.subset), exact)


def e_map_exact(gt: GroundTruthSet, dets: Iterable[Detection], tau: float, limit: int = 20) -> EMapResult:
    """Exhaustive e-mAP at ``tau``.

    Among subsets reaching the best AP, the one confirming the most
    detections as true positives wins, then the smallest; so an extended
    GT no detection hits is never kept.
    """
    ev = _SubsetEvaluator(gt, dets, tau)
    m = len(ev.pool)
    if m > limit:
        raise MetricError(f"{m} extended ground truths exceed the exhaustive limit {limit}; use e_map_greedy")
    subsets = (frozenset(c) for r in range(m + 1) for c in itertools.combinations(range(m), r))
    return _result(ev, _best(ev, subsets), True)


def e_map_greedy(gt: GroundTruthSet, dets: Iterable[Detection], tau: float) -> EMapResult:
    """Greedy e-mAP at ``tau`` for pools too large to enumerate.

    Candidates are the extended GT that get matched when all of them are
    targets; unmatched ones can only add false negatives.  Candidates are
    ranked by the score of their matching detection, the best prefix of
    that ranking is kept, then single additions/removals are applied while
    they improve the result.  J = {} is always among the prefixes, so the
    value never falls below mAP on In-ODD ground truth alone.
    """
    ev = _SubsetEvaluator(gt, dets, tau)
    matched = ev.matched_pool()
    ranked = sorted(matched, key=lambda p: (-matched[p], p))
    best = _best(ev, (frozenset(ranked[:k]) for k in range(len(ranked) + 1)))

    for _ in range(4 * len(ranked) + 4):  # bound guards against eps-tie cycling
        improved = False
        for p in ranked:
            trial = best.subset - {p} if p in best.subset else best.subset | {p}
            c = _choice(ev, trial)
            if c is not None and c.beats(best):
                best, improved = c, True
        if not improved:
            break
    return _result(ev, best, False)


def e_map(gt: GroundTruthSet, dets: Iterable[Detection], tau: float, limit: int = 20) -> EMapResult:
    dets = list(dets)
    if len(gt.extended_pool()) <= limit:
        return e_map_exact(gt, dets, tau, limit)
    return e_map_greedy(gt, dets, tau)


# -- reports -----------------------------------------------------------------------


@dataclass(frozen=True)
class MetricRow:
    score: str  # "mAP" or "e-mAP"
    test_gt: str  # "IN_ODD" or "IN_ODD+EXTENDED_ODD"
    gt_count_used: int
    detection_count: int
    mAP: float
    mAP50: float
    mAP75: float
    per_threshold: dict[float, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "score": self.score,
            "test_gt": self.test_gt,
            "gt": self.gt_count_used,
            "detections": self.detection_count,
            "mAP": self.mAP,
            "mAP50": self.mAP50,
            "mAP75": self.mAP75,
            "per_threshold": {f"{t:.2f}": v for t, v in self.per_threshold.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetricRow":
        return cls(
            d["score"],
            d["test_gt"],
            int(d["gt"]),
            int(d["detections"]),
            float(d["mAP"]),
            float(d["mAP50"]),
            float(d["mAP75"]),
            {float(k): float(v) for k, v in d.get("per_threshold", {}).items()},
        )


@dataclass(frozen=True)
class EvalReport:
    in_odd: MetricRow
    in_extended: MetricRow
    e_map: MetricRow
    extended_gt_count: int
    e_map_gt_by_threshold: dict[float, int] = field(default_factory=dict)
    e_map_exact: bool = True
    conventions: dict[str, Any] = field(default_factory=dict)

    @property
    def rows(self) -> tuple[MetricRow, MetricRow, MetricRow]:
        return (self.in_odd, self.in_extended, self.e_map)

    def to_dict(self) -> dict[str, Any]:
        return {
            "conventions": self.conventions,
            "rows": [r.to_dict() for r in self.rows],
            "extended_gt_count": self.extended_gt_count,
            "e_map_gt_by_threshold": {f"{t:.2f}": n for t, n in self.e_map_gt_by_threshold.items()},
            "e_map_exact": self.e_map_exact,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EvalReport":
        rows = [MetricRow.from_dict(r) for r in d["rows"]]
        return cls(
            *rows,
            extended_gt_count=int(d["extended_gt_count"]),
            e_map_gt_by_threshold={float(k): int(v) for k, v in d.get("e_map_gt_by_threshold", {}).items()},
            e_map_exact=bool(d.get("e_map_exact", True)),
            conventions=dict(d.get("conventions", {})),
        )


def _conventions(cfg: EvalConfig) -> dict[str, Any]:
    return {
        "mAP_thresholds": list(cfg.iou_thresholds),
        "named_thresholds": dict(cfg.named_thresholds),
        "ap_interpolation": "all-point precision envelope",
        "score_threshold": cfg.score_threshold,
        "e_map_subset": "chosen independently per IoU threshold",
        "e_map_gt_count_threshold": min(cfg.all_thresholds),
    }


def build_report(gt: GroundTruthSet, dets: Iterable[Detection], cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """The three row families: mAP on In-ODD, mAP on In+Extended, e-mAP.

    The e-mAP row's ``gt_count_used`` is |I| + |J*| at the loosest IoU
    threshold; counts at every threshold are in ``e_map_gt_by_threshold``.
    """
    kept = filter_detections(dets, cfg.score_threshold)
    n_in = gt.count(("in",))
    n_ext = gt.count(("extended",))
    plain = EvalConfig(None, cfg.iou_thresholds, cfg.named_thresholds, cfg.exhaustive_limit)

    rows = []
    for flags, label, n in ((("in",), "IN_ODD", n_in), (FLAGS, "IN_ODD+EXTENDED_ODD", n_in + n_ext)):
        r = map_suite(gt, kept, plain, flags)
        rows.append(MetricRow("mAP", label, n, len(kept), r.mAP, r.named["mAP50"], r.named["mAP75"], r.per_threshold))

    exact = len(gt.extended_pool()) <= cfg.exhaustive_limit
    per, used = {}, {}
    for t in cfg.all_thresholds:
        res = e_map(gt, kept, t, cfg.exhaustive_limit)
        per[t], used[t] = res.value, n_in + res.gt_added
    e_row = MetricRow(
        "e-mAP",
        "IN_ODD+EXTENDED_ODD",
        used[min(cfg.all_thresholds)],
        len(kept),
        float(np.mean([per[t] for t in cfg.iou_thresholds])),
        per[cfg.named_thresholds["mAP50"]],
        per[cfg.named_thresholds["mAP75"]],
        per,
    )
    return EvalReport(rows[0], rows[1], e_row, n_ext, used, exact, _conventions(cfg))


FAMILIES = {"mAP_in_odd": "in_odd", "mAP_in_extended": "in_extended", "e_mAP": "e_map"}


def crossbar(
    reports: Mapping[tuple[str, str], EvalReport],
    metric: str = "mAP",
    rows: Sequence[str] | None = None,
    cols: Sequence[str] | None = None,
) -> dict[str, str]:
    """CSV matrices (rows = model/config tag, columns = test source), one per
    metric family.  Missing cells are left empty."""
    rows = list(rows) if rows is not None else sorted({r for r, _ in reports})
    cols = list(cols) if cols is not None else sorted({c for _, c in reports})
    out = {}
    for family, attr in FAMILIES.items():
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", *cols])
        for r in rows:
            cells = []
            for c in cols:
                rep = reports.get((r, c))
                cells.append("" if rep is None else repr(float(getattr(getattr(rep, attr), metric))))
            w.writerow([r, *cells])
        out[family] = buf.getvalue()
    return out


# -- predictions files ----------------------------------------------------------------


def parse_predictions(text: str) -> list[Detection]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"predictions file is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ValidationError("predictions file must be a JSON list")
    try:
        return [
            Detection(str(d["image_id"]), PixelBox(*(float(x) for x in d["bbox"])), float(d["score"]))
            for d in data
        ]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed prediction entry: {exc}") from exc


def dumps_predictions(dets: Iterable[Detection]) -> str:
    return json.dumps(
        [{"image_id": d.image_id, "bbox": d.bbox.to_list(), "score": d.score} for d in dets], indent=1
    )
