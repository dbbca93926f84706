import json
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from helpers import random_instance
from runwaybench.camera import PixelBox
from runwaybench.errors import MetricError, ValidationError
from runwaybench.metrics import (
    COCO_THRESHOLDS,
    Detection,
    EvalConfig,
    EvalReport,
    GroundTruth,
    GroundTruthSet,
    ImageMatch,
    _SubsetEvaluator,
    ap_at,
    average_precision,
    build_report,
    crossbar,
    dumps_predictions,
    e_map,
    e_map_exact,
    e_map_greedy,
    filter_detections,
    iou,
    iou_matrix,
    map_suite,
    match,
    match_dataset,
    parse_predictions,
)

NO_FILTER = EvalConfig(score_threshold=None)


def box(x, y, w=10.0, h=10.0):
    return PixelBox(x, y, w, h)


def gts(*entries):
    """entries: (image_id, PixelBox, flag)."""
    out = GroundTruthSet()
    for img, b, flag in entries:
        out.add(img, GroundTruth(b, flag))
    return out


# -- IoU and matching -----------------------------------------------------------


def test_iou_examples():
    assert iou(box(5, 5), box(5, 5)) == 1.0
    assert iou(box(5, 5), box(50, 50)) == 0.0
    assert iou(box(5, 5), box(10, 5)) == pytest.approx(1 / 3)
    assert iou_matrix([], [box(0, 0)]).shape == (0, 1)


@given(
    st.tuples(st.floats(0, 100), st.floats(0, 100), st.floats(1, 50), st.floats(1, 50)),
    st.tuples(st.floats(0, 100), st.floats(0, 100), st.floats(1, 50), st.floats(1, 50)),
)
def test_iou_symmetric_bounded(a, b):
    a, b = PixelBox(*a), PixelBox(*b)
    v = iou(a, b)
    assert 0.0 <= v <= 1.0 + 1e-12
    assert v == pytest.approx(iou(b, a))


def test_match_single():
    m = match([box(5, 5)], [Detection("a", box(5, 5), 0.9)], 0.5)
    assert (m.n_tp, m.n_fp, m.n_fn) == (1, 0, 0)


def test_match_duplicate_detection():
    dets = [Detection("a", box(5, 6), 0.6), Detection("a", box(5, 5), 0.9)]
    m = match([box(5, 5)], dets, 0.5)
    assert m.tp.tolist() == [True, False]
    assert m.scores.tolist() == [0.9, 0.6]


def test_match_iou_tie_goes_to_first_gt():
    m = match([box(0, 5), box(10, 5)], [Detection("a", box(5, 5), 0.9)], 0.3)
    assert m.gt_index.tolist() == [0]


def _max_cardinality(ious, tau):
    """Optimal one-to-one matching size, by assignment on the 0/1 hit matrix."""
    hits = (ious >= tau).astype(float)
    rows, cols = linear_sum_assignment(hits, maximize=True)
    return int(hits[rows, cols].sum())


def test_greedy_vs_brute_force_assignment():
    rng = np.random.default_rng(3)
    for _ in range(300):
        gt, dets = random_instance(rng, max_ext=0, n_images=(1, 2))
        boxes = [g.bbox for g in gt.images["img0"]]
        for tau in (0.5, 0.75):
            m = match(boxes, dets, tau)
            ranked = sorted(dets, key=lambda d: -d.score)
            opt = _max_cardinality(iou_matrix([d.bbox for d in ranked], boxes), tau)
            # disjoint GT: each detection has at most one candidate at tau >= 0.5
            assert m.n_tp == opt


def test_greedy_gap_fixture():
    """Overlapping GT: the top detection grabs the box the second one needed."""
    a, b = box(0, 0, 20, 10), box(6, 0, 20, 10)
    top = Detection("x", box(4, 0, 20, 10), 0.9)  # IoU a 0.667, b 0.818
    low = Detection("x", box(8, 0, 20, 10), 0.8)  # IoU a 0.429, b 0.818
    m = match([a, b], [top, low], 0.5)
    assert m.gt_index.tolist() == [1, -1]
    ious = iou_matrix([top.bbox, low.bbox], [a, b])
    assert _max_cardinality(ious, 0.5) == 2


# -- AP --------------------------------------------------------------------------------


def im(tp, scores, n_gt, image_id="a"):
    tp = np.asarray(tp, dtype=bool)
    return ImageMatch(image_id, np.asarray(scores, dtype=float), tp, np.where(tp, 0, -1), n_gt)


def test_ap_perfect():
    assert average_precision([im([1, 1], [0.9, 0.8], 2)]) == 1.0


def test_ap_half_recall():
    assert average_precision([im([1], [0.9], 2)]) == 0.5


def test_ap_five_sixths():
    assert abs(average_precision([im([1, 0, 1], [0.9, 0.8, 0.7], 2)]) - 5 / 6) <= 1e-12


def test_ap_hand_fixtures_through_matching():
    g = gts(("a", box(5, 5), "in"), ("a", box(50, 50), "in"))
    dets = [
        Detection("a", box(5, 5), 0.9),
        Detection("a", box(200, 200), 0.8),
        Detection("a", box(50, 50), 0.7),
    ]
    assert abs(ap_at(g, dets, 0.5) - 5 / 6) <= 1e-12


def test_ap_without_gt_is_undefined():
    with pytest.raises(MetricError):
        average_precision([im([0], [0.9], 0)])
    assert average_precision([im([], [], 3)]) == 0.0


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_ap_rescaling_invariance(seed):
    rng = np.random.default_rng(seed)
    gt, dets = random_instance(rng)
    base = ap_at(gt, dets, 0.5)
    k = rng.uniform(0.1, 5)
    rescaled = [Detection(d.image_id, d.bbox, d.score**k * 0.5) for d in dets]
    assert ap_at(gt, rescaled, 0.5) == pytest.approx(base, abs=1e-12)


def test_ap_independent_of_image_order():
    rng = np.random.default_rng(9)
    for _ in range(50):
        gt, dets = random_instance(rng)
        matches = match_dataset(gt, dets, 0.5)
        shuffled = matches[:]
        random.Random(1).shuffle(shuffled)
        assert average_precision(shuffled) == average_precision(matches)


def test_prefix_stability():
    rng = np.random.default_rng(4)
    for _ in range(200):
        gt, dets = random_instance(rng, max_ext=0)
        base = ap_at(gt, dets, 0.5)
        img, g = next((k, v[0]) for k, v in gt.images.items() if v)
        low = min([d.score for d in dets], default=1.0) / 2
        assert ap_at(gt, dets + [Detection(img, g.bbox, low)], 0.5) >= base - 1e-12
        assert ap_at(gt, dets + [Detection(img, box(900, 900), low)], 0.5) <= base + 1e-12


def test_threshold_nesting():
    rng = np.random.default_rng(6)
    for _ in range(200):
        gt, dets = random_instance(rng)
        aps = [ap_at(gt, dets, t) for t in COCO_THRESHOLDS]
        assert all(b <= a + 1e-12 for a, b in zip(aps, aps[1:]))


def test_score_filter_is_strict():
    dets = [Detection("a", box(0, 0), s) for s in (0.4, 0.5, 0.51)]
    assert [d.score for d in filter_detections(dets, 0.5)] == [0.51]
    assert len(filter_detections(dets, None)) == 3
    with pytest.raises(ValidationError):
        Detection("a", box(0, 0), 1.2)


def test_map_suite_perfect_and_empty():
    g = gts(("a", box(5, 5), "in"), ("b", box(50, 50), "in"))
    perfect = [Detection("a", box(5, 5), 0.9), Detection("b", box(50, 50), 0.8)]
    assert map_suite(g, perfect).triple() == (1.0, 1.0, 1.0)
    assert map_suite(g, []).triple() == (0.0, 0.0, 0.0)


# -- e-mAP ---------------------------------------------------------------------------


def test_emap_without_extended_is_map():
    g = gts(("a", box(5, 5), "in"))
    dets = [Detection("a", box(5, 5), 0.9), Detection("a", box(80, 80), 0.8)]
    for fn in (e_map_exact, e_map_greedy):
        r = fn(g, dets, 0.5)
        assert r.value == ap_at(g, dets, 0.5) and r.subset == frozenset()


def test_emap_covered_extended_is_added():
    g = gts(("a", box(5, 5), "in"), ("a", box(80, 80), "extended"))
    dets = [Detection("a", box(5, 5), 0.9), Detection("a", box(80, 80), 0.8)]
    assert ap_at(g.filtered(["in"]), dets, 0.5) == 1.0  # FP after recall 1
    r = e_map_exact(g, dets, 0.5)
    assert r.value == 1.0 and r.subset == {("a", 1)}  # tie: the confirmed hit is kept
    g2 = gts(("a", box(5, 5), "in"), ("a", box(80, 80), "extended"))
    dets2 = [Detection("a", box(80, 80), 0.95), Detection("a", box(5, 5), 0.9)]
    assert ap_at(g2.filtered(["in"]), dets2, 0.5) < 1.0
    r2 = e_map_exact(g2, dets2, 0.5)
    assert r2.value == 1.0 and r2.subset == {("a", 1)}


def test_emap_uncovered_extended_excluded():
    g = gts(("a", box(5, 5), "in"), ("a", box(80, 80), "extended"))
    dets = [Detection("a", box(5, 5), 0.9)]
    for fn in (e_map_exact, e_map_greedy):
        r = fn(g, dets, 0.5)
        assert r.subset == frozenset() and r.value == 1.0


def test_literal_all_matched_rule_gap():
    """Taking every matched extended GT can fall below mAP on In-ODD alone."""
    g = gts(("a", box(5, 5), "in"), ("a", box(80, 80), "extended"))
    dets = [
        Detection("a", box(5, 5), 0.9),
        Detection("a", box(300, 300), 0.8),
        Detection("a", box(80, 80), 0.7),
    ]
    ev = _SubsetEvaluator(g, dets, 0.5)
    literal = ev.value(ev.matched_pool())
    assert literal == pytest.approx(5 / 6)
    assert ap_at(g.filtered(["in"]), dets, 0.5) == 1.0
    for fn in (e_map_exact, e_map_greedy):
        r = fn(g, dets, 0.5)
        assert r.value == 1.0 and r.subset == frozenset()


def test_emap_dominance_and_greedy_agreement():
    rng = np.random.default_rng(0)
    for _ in range(300):
        gt, dets = random_instance(rng)
        dets = filter_detections(dets, 0.5)
        for tau in (0.5, 0.75):
            exact = e_map_exact(gt, dets, tau)
            greedy = e_map_greedy(gt, dets, tau)
            base = ap_at(gt.filtered(["in"]), dets, tau)
            assert exact.value >= base - 1e-12
            assert exact.value >= greedy.value - 1e-12
            assert greedy.value == pytest.approx(exact.value, abs=1e-12)
            ev = _SubsetEvaluator(gt, dets, tau)
            if not ev.matched_pool():
                assert exact.subset == frozenset() == greedy.subset


def test_emap_subset_is_chosen_per_threshold():
    g = gts(("a", box(5, 5, 20, 20), "in"), ("a", box(80, 80, 20, 20), "extended"))
    # the extended box is hit at IoU 0.6: a TP at 0.5, an FP at 0.75
    dets = [Detection("a", box(5, 5, 20, 20), 0.6), Detection("a", box(80, 83.5, 20, 20), 0.9)]
    assert iou(dets[1].bbox, box(80, 80, 20, 20)) == pytest.approx(16.5 / 23.5)
    assert e_map(g, dets, 0.5).subset == {("a", 1)}
    assert e_map(g, dets, 0.75).subset == frozenset()


def test_exact_refuses_large_pool():
    entries = [("a", box(5, 5), "in")] + [("a", box(30 * k, 300), "extended") for k in range(1, 5)]
    g = gts(*entries)
    with pytest.raises(MetricError):
        e_map_exact(g, [], 0.5, limit=3)
    assert e_map(g, [], 0.5, limit=3).exact is False
    assert e_map(g, [], 0.5, limit=4).exact is True


def test_emap_without_any_gt():
    with pytest.raises(MetricError):
        e_map_exact(GroundTruthSet(), [], 0.5)


# -- reports ---------------------------------------------------------------------------


def _perfect(gt: GroundTruthSet):
    """Every box found; extended ones more timidly so the In-only row
    sees their detections as trailing false positives."""
    return [
        Detection(i, g.bbox, 0.9 if g.odd == "in" else 0.8) for i, v in gt.images.items() for g in v
    ]


def test_report_perfect_detector():
    g = gts(("a", box(5, 5), "in"), ("b", box(50, 50), "extended"), ("b", box(90, 90), "in"))
    rep = build_report(g, _perfect(g))
    for row in rep.rows:
        assert (row.mAP, row.mAP50, row.mAP75) == (1.0, 1.0, 1.0)
    assert [r.gt_count_used for r in rep.rows] == [2, 3, 3]
    assert [r.test_gt for r in rep.rows] == ["IN_ODD", "IN_ODD+EXTENDED_ODD", "IN_ODD+EXTENDED_ODD"]
    assert [r.score for r in rep.rows] == ["mAP", "mAP", "e-mAP"]
    assert rep.conventions["mAP_thresholds"] == list(COCO_THRESHOLDS)


def test_report_round_trip_and_order_invariance():
    rng = np.random.default_rng(2)
    gt, dets = random_instance(rng, n_images=(3, 5))
    rep = build_report(gt, dets)
    again = build_report(GroundTruthSet(dict(reversed(list(gt.images.items())))), dets[::-1])
    assert json.dumps(rep.to_dict()) == json.dumps(again.to_dict())
    assert EvalReport.from_dict(json.loads(json.dumps(rep.to_dict()))).to_dict() == rep.to_dict()


def test_report_gt_counts_between_bounds():
    rng = np.random.default_rng(8)
    for _ in range(30):
        gt, dets = random_instance(rng, n_images=(2, 5))
        rep = build_report(gt, dets, NO_FILTER)
        n_in, n_all = gt.count(["in"]), gt.count()
        assert n_in <= rep.e_map.gt_count_used <= n_all
        for a, b in zip((rep.in_odd.mAP50, rep.in_odd.mAP75, rep.in_odd.mAP), (rep.e_map.mAP50, rep.e_map.mAP75, rep.e_map.mAP)):
            assert b >= a - 1e-12


def test_crossbar():
    g = gts(("a", box(5, 5), "in"))
    good = build_report(g, _perfect(g))
    bad = build_report(g, [])
    one = crossbar({("m", "s"): good})
    assert one["mAP_in_odd"] == "model,s\nm,1.0\n"
    tables = crossbar({("m1", "s1"): good, ("m2", "s2"): bad})
    assert tables["e_mAP"] == "model,s1,s2\nm1,1.0,\nm2,,0.0\n"
    assert set(tables) == {"mAP_in_odd", "mAP_in_extended", "e_mAP"}
    assert crossbar({("m", "s"): good}, metric="mAP50")["mAP_in_extended"].endswith("m,1.0\n")


def test_predictions_round_trip():
    dets = [Detection("a", box(1.5, 2.5, 3, 4), 0.75), Detection("b", box(9, 9), 1.0)]
    assert parse_predictions(dumps_predictions(dets)) == dets


@pytest.mark.parametrize("text", ["{}", "[{}]", "nope", '[{"image_id": "a", "bbox": [1, 1, 0, 1], "score": 0.5}]'])
def test_predictions_errors(text):
    with pytest.raises(ValidationError):
        parse_predictions(text)
