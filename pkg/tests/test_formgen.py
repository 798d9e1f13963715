import filecmp
import json
import os

import numpy as np
import pytest

from stripseg.evalkit import ObjectInstance, extract_instances, instance_iou
from stripseg.formgen import (
    DocumentScene,
    GenParams,
    SceneObject,
    crosses,
    emit_dataset,
    footprint,
    generate_scene,
    load_dataset,
    profile_params,
    rasterize,
    read_pgm,
    render_and_rasterize,
    split_assignment,
    validate_scene,
    write_pgm,
)
from stripseg.segnet import DOCUMENT_SCHEMA, TL_SCHEMA


def test_same_seed_same_scene():
    a, b = generate_scene(7), generate_scene(7)
    assert a.to_json() == b.to_json()
    assert generate_scene(8).to_json() != a.to_json()


def test_validator_sweep():
    bad = [s for s in range(1000) if validate_scene(generate_scene(s))]
    assert bad == []


def test_validator_catches_violations():
    scene = generate_scene(1)
    tb = scene.of_class("textblock")[0]
    run = scene.by_id()[tb.children[0]]
    run.bbox = (run.bbox[0], run.bbox[1], scene.width + 5, run.bbox[3])
    errs = validate_scene(scene)
    assert any("outside canvas" in e for e in errs)
    assert any("not inside parent" in e for e in errs)


def test_span_bias_paper_profile():
    params = profile_params("paper", span_bias=1.0)
    hits = 0
    for s in range(50):
        scene = generate_scene(s, params)
        hits += any(crosses(o.bbox, 400 * k) for o in scene.objects if o.level > 1 for k in (1, 2, 3))
    assert hits >= 45


def test_span_bias_zero_is_plain_layout():
    params = GenParams(span_bias=0.0)
    scene = generate_scene(3, params)
    assert scene.of_class("textrun")


def test_class_fractions_within_bounds():
    fractions = []
    for s in range(20):
        _, masks = render_and_rasterize(generate_scene(s))
        fractions.append([(masks[0] == 2).mean(), (masks[0] == 3).mean(), (masks[3] == 2).mean()])
    f = np.array(fractions).mean(axis=0)
    assert 0.03 < f[0] < 0.4
    assert 0.01 < f[1] < 0.3
    assert 0.01 < f[2] < 0.4


@pytest.mark.parametrize("bad", [dict(text_height=(7, 5)), dict(span_bias=1.5), dict(two_column_prob=-0.1), dict(schema="x")])
def test_bad_params_rejected(bad):
    with pytest.raises(ValueError):
        GenParams(**bad)


def test_scene_json_round_trip():
    scene = generate_scene(11)
    assert DocumentScene.from_json(scene.to_json()).to_json() == scene.to_json()


# ---------------------------------------------------------------- rasterisation


def tiny_scene(objs):
    return DocumentScene(80, 40, 0, GenParams(width=80, height=40), objs)


def test_empty_scene_is_blank():
    img, masks = render_and_rasterize(tiny_scene([]))
    assert np.all(img == 1.0)
    assert all(not m.any() for m in masks)


def test_single_textrun_pixel_counts():
    scene = tiny_scene([SceneObject(0, 1, "textrun", (10, 10, 60, 20))])
    _, masks = render_and_rasterize(scene, DOCUMENT_SCHEMA, 2)
    l1 = masks[0]
    assert (l1 == 2).sum() == 50 * 10
    assert np.all(l1[10:20, 10:60] == 2)
    assert (l1 == 1).sum() == 54 * 14 - 50 * 10
    assert np.all(l1[8:22, 8:62][l1[8:22, 8:62] != 2] == 1)
    assert (l1 == 0).sum() == 80 * 40 - 54 * 14
    assert not masks[1].any()


def test_border_never_covers_interiors():
    for s in range(10):
        scene = generate_scene(s)
        masks = rasterize(scene, DOCUMENT_SCHEMA, 2)
        for obj in scene.objects:
            li, cid = DOCUMENT_SCHEMA.locate(obj.cls)
            assert np.all(masks[li][footprint(scene, obj)] == cid)


def test_choicegroup_footprint_is_hull_of_parts():
    from stripseg.evalkit import convex_hull, fill_hull

    scene = generate_scene(4, GenParams(span_bias=1.0))
    group = scene.of_class("choicegroup")[0]
    index = scene.by_id()
    parts = [index[c] for c in group.children]
    assert sum(p.cls == "choicefield" for p in parts) >= 2
    pts = []
    for p in parts:
        hull = convex_hull(np.array([c for b in scene.leaf_boxes(p) for c in
                                     [(b[0], b[1]), (b[2], b[1]), (b[2], b[3]), (b[0], b[3])]]))
        pts.extend(hull.tolist())
    ref = fill_hull(convex_hull(pts), (scene.height, scene.width))
    assert np.array_equal(footprint(scene, group), ref)


def test_extraction_recovers_scene_objects():
    for s in range(10):
        scene = generate_scene(s, GenParams(span_bias=0.5))
        _, masks = render_and_rasterize(scene)
        for li, cls in DOCUMENT_SCHEMA.structure_classes():
            found = extract_instances(masks[li], DOCUMENT_SCHEMA.class_id(li, cls))
            objs = scene.of_class(cls)
            assert len(found) == len(objs)
            for o in objs:
                ref = ObjectInstance.from_mask(footprint(scene, o))
                assert max(instance_iou(ref, f) for f in found) >= 0.95


def test_tl_scene_masks():
    params = GenParams(schema="tl")
    scene = next(generate_scene(s, params) for s in range(50) if generate_scene(s, params).of_class("table"))
    assert validate_scene(scene) == []
    img, masks = render_and_rasterize(scene)
    assert len(masks) == 3
    table = scene.of_class("table")[0]
    rows = [scene.by_id()[c] for c in table.children if scene.by_id()[c].cls == "table_row"]
    assert len(extract_instances(masks[1], 2)) >= len(rows)
    assert (masks[0] == TL_SCHEMA.class_id(0, "table")).any()


# ---------------------------------------------------------------- corpus


def test_pgm_round_trip(tmp_path):
    arr = np.random.default_rng(0).integers(0, 256, (5, 7)).astype(np.uint8)
    write_pgm(tmp_path / "a.pgm", arr)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), arr)
    with open(tmp_path / "a.pgm", "rb") as fh:
        assert fh.read(11) == b"P5\n7 5\n255\n"
    with pytest.raises(OSError, match="missing"):
        write_pgm(tmp_path / "missing" / "b.pgm", arr)


def test_splits_80_10_10():
    tags = split_assignment(100, 3)
    assert [tags.count(s) for s in ("train", "val", "test")] == [80, 10, 10]


def test_emit_dataset_layout_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    man = emit_dataset(10, 7, a)
    emit_dataset(10, 7, b)
    files = sorted(os.path.relpath(os.path.join(r, f), a) for r, _, fs in os.walk(a) for f in fs)
    assert sum(f.endswith(".img.pgm") for f in files) == 10
    assert sum(f.endswith(".msk.pgm") for f in files) == 40
    assert "manifest.json" in files
    for f in files:
        assert filecmp.cmp(a / f, b / f, shallow=False)
    assert len(man["samples"]) == 10 and json.load(open(a / "manifest.json"))["seed"] == 7
    first = man["samples"][0]
    lines = open(a / first["split"] / "000000.scene.jsonl").read().splitlines()
    assert set(json.loads(lines[0])) >= {"id", "level", "class", "bbox", "children"}


def test_reloaded_masks_equal_rasterisation(tmp_path):
    emit_dataset(6, 2, tmp_path)
    for sample in load_dataset(tmp_path):
        img, masks = render_and_rasterize(generate_scene(sample.seed))
        assert all(np.array_equal(m, r) for m, r in zip(sample.masks, masks))
        assert np.abs(sample.image - img).max() <= 0.5 / 255 + 1e-6
        assert sample.scene.to_records() == generate_scene(sample.seed).to_records()
