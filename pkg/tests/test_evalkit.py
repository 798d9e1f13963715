import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stripseg.evalkit import (
    ClassScore,
    MetricsReport,
    ObjectInstance,
    convex_hull,
    dataset_miou,
    decomposition_score,
    evaluate_pages,
    extract_instances,
    fill_hull,
    inside_hull,
    instance_iou,
    match_instances,
    pixel_hull,
    polygon_area,
    table_decompose_postprocess,
)
from stripseg.segnet import DOCUMENT_SCHEMA


def brute_hull(points):
    """O(n^3): a point pair is a hull edge if every other point lies on its left or on the segment."""
    pts = sorted(set(map(tuple, np.asarray(points, float).tolist())))
    if len(pts) <= 2:
        return set(pts)
    verts = set()
    for a, b in itertools.permutations(pts, 2):
        ok = True
        for p in pts:
            cr = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
            if cr < 0:
                ok = False
                break
            if cr == 0:
                dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])
                if dot < 0 or dot > (b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2:
                    ok = False
                    break
        if ok:
            verts.update([a, b])
    return verts


def box_inst(x0, y0, x1, y1, cls="a", shape=(40, 40)):
    m = np.zeros(shape, bool)
    m[y0:y1, x0:x1] = True
    return ObjectInstance.from_mask(m, cls, 0)


def max_matching(preds, gts, thr):
    """Exhaustive maximum one-to-one matching size over pairs with IoU >= thr."""
    ok = [[instance_iou(p, g) >= thr and p.cls == g.cls for g in gts] for p in preds]
    best = 0
    n, m = len(preds), len(gts)
    for perm in itertools.permutations(range(m), min(n, m)):
        for sub in itertools.permutations(range(n), min(n, m)):
            best = max(best, sum(ok[i][j] for i, j in zip(sub, perm)))
    return best


# ---------------------------------------------------------------- hull


def test_square_hull():
    sq = convex_hull([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert len(sq) == 4 and polygon_area(sq) == 1.0


def test_interior_point_excluded():
    sq = convex_hull([(0, 0), (2, 0), (2, 2), (0, 2), (1, 1), (1, 0)])
    assert {tuple(p) for p in sq} == {(0, 0), (2, 0), (2, 2), (0, 2)}


def test_degenerate_hulls():
    assert convex_hull([(3, 3), (3, 3)]).shape == (1, 2)
    assert convex_hull([(0, 0), (1, 1), (2, 2)]).tolist() == [[0, 0], [2, 2]]
    with pytest.raises(ValueError):
        convex_hull([])


def test_hull_is_counter_clockwise_without_collinear_vertices():
    rng = np.random.default_rng(0)
    pts = rng.integers(0, 10, (60, 2))
    h = convex_hull(pts)
    for i in range(len(h)):
        a, b, c = h[i], h[(i + 1) % len(h)], h[(i + 2) % len(h)]
        assert (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) > 0


@pytest.mark.parametrize("seed", range(20))
def test_hull_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 12, (int(rng.integers(1, 50)), 2))
    hull = convex_hull(pts)
    assert {tuple(p) for p in hull} == brute_hull(pts)
    assert inside_hull(hull, pts[:, 0].astype(float), pts[:, 1].astype(float)).all()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=1, max_size=30))
def test_hull_idempotent(pts):
    h = convex_hull(pts)
    assert np.array_equal(convex_hull(h), h)


def test_fill_box_hull_is_the_box():
    hull = convex_hull([(2, 3), (7, 3), (7, 5), (2, 5)])
    m = fill_hull(hull, (10, 10))
    ref = np.zeros((10, 10), bool)
    ref[3:5, 2:7] = True
    assert np.array_equal(m, ref)


def test_pixel_hull_recovers_digital_convex_set():
    hull = convex_hull([(1, 1), (15, 2), (9, 12)])
    m = fill_hull(hull, (16, 16))
    assert np.array_equal(fill_hull(pixel_hull(m), m.shape), m)


# ---------------------------------------------------------------- instances


def test_two_rectangles_two_instances():
    m = np.zeros((20, 20), np.uint8)
    m[1:4, 1:6] = 2
    m[10:15, 8:10] = 2
    m[0, :] = 1
    inst = extract_instances(m, 2, use_hull=False)
    assert sorted(i.area for i in inst) == [10, 15]


def test_plus_sign_hull_is_octagon():
    m = np.zeros((9, 9), np.uint8)
    m[3:6, 1:8] = 2
    m[1:8, 3:6] = 2
    (inst,) = extract_instances(m, 2, use_hull=True)
    # brute-force: pixel centres inside the hull of the component's centres
    rows, cols = np.nonzero(m == 2)
    pts = np.stack([cols + 0.5, rows + 0.5], 1)
    verts = np.array(sorted(brute_hull(pts)))
    hull = convex_hull(verts)
    yy, xx = np.mgrid[0:9, 0:9] + 0.5
    ref = inside_hull(hull, xx, yy)
    assert inst.area == ref.sum() == 33 + 4  # the plus plus one pixel in each notch
    assert len(inst.hull) == 8
    assert np.array_equal(inst.full_mask((9, 9)), ref)


def test_diagonal_pixels_are_separate_components():
    m = np.zeros((4, 4), np.uint8)
    m[0, 0] = m[1, 1] = 2
    assert len(extract_instances(m, 2)) == 2


def test_background_only_gives_nothing():
    m = np.zeros((8, 8), np.uint8)
    m[2:4] = 1
    assert extract_instances(m, 2) == []


def test_iou_examples():
    a = box_inst(0, 0, 10, 10)
    b = box_inst(5, 0, 15, 10)
    assert instance_iou(a, b) == pytest.approx(1 / 3, abs=0)
    assert instance_iou(a, a) == 1.0
    assert instance_iou(a, box_inst(20, 20, 30, 30)) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_iou_properties(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((2, 8, 8)) < rng.random()
    v = instance_iou(a, b)
    assert v == instance_iou(b, a)
    assert 0.0 <= v <= 1.0
    assert (v == 1.0) == bool(np.array_equal(a, b))


# ---------------------------------------------------------------- miou


def test_miou_skips_absent_classes():
    g = [np.zeros((4, 4), np.uint8) for _ in range(4)]
    p = [m.copy() for m in g]
    g[0][0, 0] = 2
    p[0][0, 0] = 2
    p[0][1, 1] = 2
    res = dataset_miou([p], [g], DOCUMENT_SCHEMA)
    assert res["L1"]["textrun"] == 0.5
    assert res["L1"]["widget"] is None
    assert res["L4"]["background"] == 1.0


# ---------------------------------------------------------------- matching


def test_match_example():
    g1, g2 = box_inst(0, 0, 10, 10), box_inst(20, 20, 30, 30)
    p = box_inst(0, 0, 10, 8)  # IoU 0.8 with g1
    r = match_instances([p], [g1, g2], 0.7)
    assert r.precision == 1.0 and r.recall == 0.5
    assert r.f1 == pytest.approx(2 / 3)
    assert r.pairs == [(0, 0, pytest.approx(0.8))]


def test_empty_predictions_flagged():
    r = match_instances([], [box_inst(0, 0, 4, 4)], 0.7)
    assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)
    assert "no_predictions" in r.flags


def test_classes_never_match_across():
    r = match_instances([box_inst(0, 0, 5, 5, "a")], [box_inst(0, 0, 5, 5, "b")], 0.5)
    assert r.tp == 0 and r.per_class["a"].fp == 1 and r.per_class["b"].fn == 1


def random_scene(rng, shape=(24, 24)):
    def rnd():
        x0, y0 = rng.integers(0, 18, 2)
        return box_inst(x0, y0, x0 + rng.integers(2, 7), y0 + rng.integers(2, 7), shape=shape)

    return [rnd() for _ in range(rng.integers(0, 4))], [rnd() for _ in range(rng.integers(0, 4))]


@pytest.mark.parametrize("seed", range(5))
def test_greedy_matches_exhaustive_on_small_scenes(seed):
    rng = np.random.default_rng(seed)
    agree = 0
    for _ in range(60):
        preds, gts = random_scene(rng)
        agree += match_instances(preds, gts, 0.5).tp == max_matching(preds, gts, 0.5)
    assert agree >= 57


def test_threshold_monotone():
    rng = np.random.default_rng(3)
    for _ in range(50):
        preds, gts = random_scene(rng)
        tps = [match_instances(preds, gts, t).tp for t in (0.5, 0.6, 0.7, 0.8, 0.9)]
        assert tps == sorted(tps, reverse=True)


def test_f1_definition():
    s = ClassScore(3, 1, 2)
    assert s.f1 == pytest.approx(2 * s.precision * s.recall / (s.precision + s.recall))
    assert ClassScore().f1 == 0.0


# ---------------------------------------------------------------- tables


def table_fixture():
    shape = (60, 100)
    region = box_inst(10, 10, 90, 50, "table", shape)
    rows = np.zeros(shape, np.uint8)
    cols = np.zeros(shape, np.uint8)
    for k in range(3):  # row blobs covering 60% of the width
        rows[12 + 13 * k : 21 + 13 * k, 20:68] = 2
    for k in range(2):
        cols[20:40, 15 + 40 * k : 45 + 40 * k] = 2
    gt_rows = [box_inst(10, 12 + 13 * k, 90, 21 + 13 * k, "r", shape) for k in range(3)]
    gt_cols = [box_inst(15 + 40 * k, 10, 45 + 40 * k, 50, "c", shape) for k in range(2)]
    return region, rows, cols, gt_rows, gt_cols


def test_rows_are_extended_to_full_width():
    region, rows, cols, gt_rows, gt_cols = table_fixture()
    pr, pc = table_decompose_postprocess(rows, cols, [region])
    assert len(pr) == 3 and all(r.bbox[0] == 10 and r.bbox[2] == 90 for r in pr)
    assert len(pc) == 2 and all(c.bbox[1] == 10 and c.bbox[3] == 50 for c in pc)
    score = decomposition_score(pr, pc, gt_rows, gt_cols)
    assert (score["precision"], score["recall"], score["f1"]) == (1.0, 1.0, 1.0)


def test_speck_removed():
    region, rows, cols, *_ = table_fixture()
    rows[45:47, 80:82] = 2  # 4 px << 2% of 3200
    pr, _ = table_decompose_postprocess(rows, cols, [region])
    assert len(pr) == 3


def test_no_regions_no_output():
    _, rows, cols, *_ = table_fixture()
    assert table_decompose_postprocess(rows, cols, []) == ([], [])


def test_decomposition_averages():
    _, _, _, gt_rows, gt_cols = table_fixture()
    score = decomposition_score(gt_rows, gt_cols[:1], gt_rows, gt_cols)
    assert score["rows"]["f1"] == 1.0
    assert score["columns"]["precision"] == 1.0 and score["columns"]["recall"] == 0.5
    score = decomposition_score(gt_rows, [gt_cols[0], box_inst(0, 55, 5, 58, shape=(60, 100))], gt_rows, gt_cols)
    assert (score["precision"], score["recall"], score["f1"]) == (0.75, 0.75, 0.75)
    empty = decomposition_score([], [], gt_rows, gt_cols)
    assert (empty["precision"], empty["recall"], empty["f1"]) == (0, 0, 0)
    assert "no_predictions" in empty["rows"]["flags"]


# ---------------------------------------------------------------- report


def test_report_round_trip_and_text():
    rng = np.random.default_rng(0)
    gts = [[rng.integers(0, n, (12, 12)).astype(np.uint8) for n in (4, 4, 4, 3)] for _ in range(2)]
    preds = [[np.where(rng.random(m.shape) < 0.8, m, 0).astype(np.uint8) for m in g] for g in gts]
    rep = evaluate_pages(preds, gts, DOCUMENT_SCHEMA, thresholds=(0.5, 0.7))
    back = MetricsReport.from_json(rep.to_json())
    assert back == rep
    assert json.loads(back.to_json()) == json.loads(rep.to_json())
    text = rep.to_text()
    assert "choicegroup" in text and "F1@0.7" in text
    for lvl in rep.miou.values():
        assert all(v is None or 0 <= v <= 1 for v in lvl.values())
