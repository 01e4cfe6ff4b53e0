import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import ap_bruteforce, pixel_iou
from repsim.detection import (
    BDD_MAP,
    GTAV_MAP,
    BoundingBox,
    LabelMap,
    evaluate,
    filter_small,
    iou,
    map_at_50,
    map_labels,
    match_predictions,
    read_boxes,
    resolve_label_map,
    write_boxes,
)
from repsim.errors import InputError, MissingScores, UnknownLabel


def box(x, y, w=10, h=10, label="car", score=None, image="i0"):
    return BoundingBox(image, label, x, y, w, h, score)


TOY_GT = [box(0, 0), box(20, 0), box(40, 0)]
TOY_PRED = [box(0, 0, score=0.9), box(21, 0, score=0.8), box(60, 0, score=0.7), box(42, 0, score=0.6)]


# --- label maps


@pytest.mark.parametrize("m, src, dst", [
    (BDD_MAP, "rider", "person"), (BDD_MAP, "motor", "cycle"), (BDD_MAP, "bike", "cycle"),
    (GTAV_MAP, "van", "car"), (GTAV_MAP, "trailer", "truck"), (GTAV_MAP, "motorcycle", "cycle"),
])
def test_builtin_maps(m, src, dst):
    assert map_labels([box(0, 0, label=src)], m)[0].label == dst


def test_unknown_label_named():
    with pytest.raises(UnknownLabel, match="traffic light"):
        map_labels([box(0, 0, label="traffic light")], BDD_MAP)


def test_map_targets_must_be_common():
    with pytest.raises(InputError):
        LabelMap("bad", {"x": "dog"})


def test_identity_extension_is_idempotent():
    once = map_labels([box(0, 0, label="van")], GTAV_MAP)
    twice = map_labels(once, GTAV_MAP.with_identity())
    assert once == twice


def test_label_map_from_file(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"auto": "car"}))
    m = resolve_label_map(str(tmp_path / "m.json"))
    assert m["auto"] == "car"
    assert resolve_label_map("none") is None


# --- area filter


@pytest.mark.parametrize("w, h, kept", [(10, 10, True), (9.99, 10, False), (5, 10, False), (100, 1, True)])
def test_filter_boundary(w, h, kept):
    assert (len(filter_small([box(0, 0, w, h)])) == 1) is kept


def test_filter_zero_is_identity():
    boxes = [box(0, 0, 0.5, 0.5), box(1, 1, 20, 20)]
    assert filter_small(boxes, 0) == boxes


# --- IoU


def test_iou_examples():
    assert iou(box(0, 0, 2, 2), box(1, 0, 2, 2)) == pytest.approx(1 / 3)
    assert iou(box(0, 0), box(0, 0)) == 1.0
    assert iou(box(0, 0), box(10, 0)) == 0.0


@given(*[st.integers(0, 12)] * 4, *[st.integers(1, 8)] * 4)
def test_iou_pixel_oracle(x1, y1, x2, y2, w1, h1, w2, h2):
    a, b = box(x1, y1, w1, h1), box(x2, y2, w2, h2)
    assert iou(a, b) == pytest.approx(pixel_iou((x1, y1, w1, h1), (x2, y2, w2, h2)), abs=1e-12)
    assert iou(a, b) == iou(b, a)


# --- mAP


def test_perfect_predictions():
    gt = [box(0, 0), box(30, 0, label="bus"), box(0, 0, label="person", image="i1")]
    preds = [BoundingBox(b.image_id, b.label, b.x, b.y, b.w, b.h, 0.9) for b in gt]
    r = map_at_50(gt, preds)
    assert r.mAP == 1.0
    assert r.per_class["cycle"] is None and r.per_class["truck"] is None
    assert any("cycle" in n for n in r.notes)


def test_no_predictions():
    assert map_at_50(TOY_GT, []).mAP == 0.0


def test_toy_example():
    r = map_at_50(TOY_GT, TOY_PRED)
    assert r.per_class["car"] == pytest.approx(11 / 12, abs=1e-12)
    gt = [(b.image_id, b.x, b.y, b.w, b.h) for b in TOY_GT]
    pr = [(b.image_id, b.x, b.y, b.w, b.h, b.score) for b in TOY_PRED]
    assert ap_bruteforce(gt, pr) == pytest.approx(11 / 12, abs=1e-12)


boxes_st = st.lists(st.tuples(st.integers(0, 2), st.integers(0, 40), st.integers(0, 40),
                              st.integers(4, 14), st.integers(4, 14)), min_size=1, max_size=8)


@given(boxes_st, st.lists(st.tuples(st.integers(0, 2), st.integers(0, 40), st.integers(0, 40),
                                    st.integers(4, 14), st.integers(4, 14), st.integers(1, 20)),
                          max_size=10))
def test_ap_bruteforce_oracle(gts, preds):
    gt = [box(x, y, w, h, image=f"i{im}") for im, x, y, w, h in gts]
    pr = [box(x, y, w, h, score=s / 20, image=f"i{im}") for im, x, y, w, h, s in preds]
    got = map_at_50(gt, pr).per_class["car"]
    expected = ap_bruteforce([(f"i{im}", x, y, w, h) for im, x, y, w, h in gts],
                             [(f"i{im}", x, y, w, h, s / 20) for im, x, y, w, h, s in preds])
    assert got == pytest.approx(expected, abs=1e-12)


@given(boxes_st, st.floats(0.01, 1.0))
def test_adding_a_true_positive_never_hurts(gts, score):
    gt = [box(x, y, w, h, image=f"i{im}") for im, x, y, w, h in gts]
    base = [box(b.x, b.y, b.w, b.h, score=0.5, image=b.image_id) for b in gt[1:]]
    extra = box(gt[0].x, gt[0].y, gt[0].w, gt[0].h, score=score, image=gt[0].image_id)
    before = map_at_50(gt, base).mAP
    after = map_at_50(gt, base + [extra]).mAP
    assert after >= before - 1e-12


def test_score_ties_keep_input_order():
    gt = [box(0, 0)]
    a, b = box(0, 0, score=0.5), box(1, 0, score=0.5)
    assert match_predictions(gt, [a, b]) == [True, False]
    assert match_predictions(gt, [b, a]) == [True, False]
    assert map_at_50(gt, [a, b]).mAP == map_at_50(gt, [a, b]).mAP


def test_iou_ties_take_lowest_gt_index():
    gt = [box(0, 0, label="car"), box(2, 0, label="car")]
    p = box(1, 0, score=0.9)
    assert iou(p, gt[0]) == iou(p, gt[1])
    # the first gt is taken, so the second prediction can still match the second gt
    q = box(1.5, 0, score=0.1)
    assert match_predictions(gt, [p, q]) == [True, True]


def test_exact_threshold_counts():
    # IoU of (0,0,3,1) and (1,0,3,1) is 2/4 = 0.5
    assert match_predictions([box(0, 0, 3, 1)], [box(1, 0, 3, 1, score=1.0)]) == [True]


def test_missing_scores():
    with pytest.raises(MissingScores):
        map_at_50(TOY_GT, [box(0, 0)])


def test_evaluate_pipeline():
    gt = [box(0, 0, label="van"), box(50, 50, 5, 5, label="van")]
    preds = [box(0, 0, label="car", score=0.8)]
    r = evaluate(gt, preds, GTAV_MAP, min_area=100)
    assert r.n_gt["car"] == 1 and r.mAP == 1.0


def test_box_file_roundtrip(tmp_path):
    write_boxes(TOY_PRED, tmp_path / "p.jsonl")
    assert read_boxes(tmp_path / "p.jsonl") == TOY_PRED


def test_bad_box_record(tmp_path):
    (tmp_path / "b.jsonl").write_text('{"image_id": "a", "label": "car"}\n')
    with pytest.raises(InputError, match=":1:"):
        read_boxes(tmp_path / "b.jsonl")
