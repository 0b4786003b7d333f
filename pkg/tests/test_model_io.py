"""Boxes, IoU, the two-stage matcher, and JSONL/dataset round-trips."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abfuse.model_io import (BoundingBox, Detection, GroundTruthObject,
                             InputError, Observation, ObservationSet,
                             compute_iou, coverage_report, ground_truth_labels,
                             load_dataset, load_ground_truth, load_predictions,
                             match_detections, observations_from_dataset,
                             write_ground_truth, write_manifest,
                             write_predictions)

from conftest import obs_of


def box(x0, y0, x1, y1):
    return BoundingBox(x0, y0, x1, y1)


# ---------------------------------------------------------------- geometry

def test_iou_identical_boxes():
    assert compute_iou(box(0, 0, 10, 10), box(0, 0, 10, 10)) == 1.0


def test_iou_half_overlap():
    # intersection 50, union 100
    assert compute_iou(box(0, 0, 10, 10), box(0, 0, 5, 10)) == 0.5


def test_iou_disjoint_and_touching():
    assert compute_iou(box(0, 0, 1, 1), box(5, 5, 6, 6)) == 0.0
    # shared edge has zero area
    assert compute_iou(box(0, 0, 1, 1), box(1, 0, 2, 1)) == 0.0


def test_iou_nested():
    assert compute_iou(box(0, 0, 10, 10), box(2, 2, 4, 4)) == pytest.approx(0.04)


def test_bbox_validation():
    with pytest.raises(InputError):
        box(5, 0, 5, 10)            # zero width
    with pytest.raises(InputError):
        box(0, 9, 10, 3)            # inverted
    with pytest.raises(InputError):
        box(0, 0, float("nan"), 1)
    assert box(0, 0, 4, 5).area == 20.0


def test_detection_confidence_validation():
    with pytest.raises(InputError):
        Detection("img", "f1", "car", 1.5, box(0, 0, 1, 1))
    with pytest.raises(InputError):
        Detection("img", "f1", "car", -0.1, box(0, 0, 1, 1))


finite = st.floats(min_value=-50, max_value=50, allow_nan=False, width=32)


@given(finite, finite, finite, finite,
       st.floats(min_value=0.5, max_value=20, width=32),
       st.floats(min_value=0.5, max_value=20, width=32))
def test_iou_symmetric_and_bounded(x0, y0, x1, y1, w, h):
    a = box(x0, y0, x0 + w, y0 + h)
    b = box(x1, y1, x1 + w, y1 + h)
    v = compute_iou(a, b)
    assert v == compute_iou(b, a)
    assert 0.0 <= v <= 1.0


# ----------------------------------------------------------- observations

def test_observation_set_una():
    with pytest.raises(InputError, match="two entries"):
        obs_of([("o1", "f1", "car", 0.9), ("o1", "f1", "tree", 0.8)])


def test_observation_set_universe_widens_to_cover_entries():
    # a declared universe is a lower bound: ids seen in entries are added
    obs = obs_of([("o1", "f1", "car", 0.9)],
                 objects=["o2"], models=["f9"], classes=["tree"])
    assert obs.objects == frozenset({"o1", "o2"})
    assert obs.models == frozenset({"f1", "f9"})
    assert obs.classes == frozenset({"car", "tree"})


def test_observation_set_universes_and_atoms():
    obs = obs_of([("o1", "f1", "car", 0.9), ("o1", "f2", "car", 0.4),
                  ("o2", "f1", "tree", 0.7)],
                 objects=["o1", "o2", "o3"])
    assert obs.objects == frozenset({"o1", "o2", "o3"})
    assert obs.models == frozenset({"f1", "f2"})
    assert obs.atoms() == frozenset({("car", "o1"), ("tree", "o2")})
    rep = coverage_report(obs)
    assert rep.uncovered == ("o3",)


def test_by_object_groups_entries():
    obs = obs_of([("o1", "f1", "car", 0.9), ("o1", "f2", "tree", 0.4),
                  ("o2", "f1", "tree", 0.7)])
    grouped = obs.by_object()
    assert {e.model_id for e in grouped["o1"]} == {"f1", "f2"}
    assert len(grouped["o2"]) == 1


# ----------------------------------------------------------------- matcher

GT_BOX = box(0, 0, 10, 10)


def gt(obj, cls="car", image="img1", b=GT_BOX):
    return GroundTruthObject(image, obj, cls, b)


def det(model, cls, conf, b, image="img1"):
    return Detection(image, model, cls, conf, b)


def test_matcher_iou_threshold_validation():
    with pytest.raises(InputError):
        match_detections([gt("o1")], [], primary_iou=0.0)
    with pytest.raises(InputError):
        match_detections([gt("o1")], [], primary_iou=1.5)
    # 1.0 is allowed even though nothing can exceed it
    obs = match_detections([gt("o1")], [det("f1", "car", 0.9, GT_BOX)],
                           primary_iou=1.0)
    assert obs.objects == frozenset({"o1"})


def test_matcher_duplicate_gt_rejected():
    with pytest.raises(InputError, match="duplicate ground-truth"):
        match_detections([gt("o1"), gt("o1")], [])


def test_matcher_primary_match_and_fields():
    obs = match_detections([gt("o1", cls="car")],
                           [det("f1", "tree", 0.8, box(0, 0, 10, 9.5))],
                           primary_iou=0.9)
    assert obs.entries == frozenset({Observation("o1", "f1", "tree", 0.8)})
    assert obs.classes == frozenset({"car", "tree"})


def test_matcher_primary_iou_is_strict():
    # f2's detection sits at IoU exactly 0.9: stage one must skip it, and
    # because f1 already matched the object, stage two never fires for f2.
    dets = [det("f1", "car", 0.5, GT_BOX),
            det("f2", "car", 0.99, box(0, 0, 10, 9))]
    obs = match_detections([gt("o1")], dets, primary_iou=0.9)
    assert {e.model_id for e in obs.entries} == {"f1"}


def test_matcher_prefers_confident_detection():
    dets = [det("f1", "car", 0.6, GT_BOX),
            det("f1", "tree", 0.9, box(0, 0, 10, 9.5))]
    obs = match_detections([gt("o1")], dets, primary_iou=0.9)
    (entry,) = obs.entries
    assert entry.confidence == 0.9 and entry.class_id == "tree"


def test_matcher_confidence_tie_keeps_first_listed():
    dets = [det("f1", "car", 0.7, GT_BOX),
            det("f1", "tree", 0.7, box(0, 0, 10, 9.5))]
    (entry,) = match_detections([gt("o1")], dets, primary_iou=0.9).entries
    assert entry.class_id == "car"


def test_matcher_detection_used_once():
    # Both objects overlap the single detection above threshold; the first
    # ground-truth object in input order consumes it.
    gts = [gt("o1", b=GT_BOX), gt("o2", b=box(0, 0, 10, 9.5))]
    obs = match_detections(gts, [det("f1", "car", 0.9, GT_BOX)],
                           primary_iou=0.9)
    assert {e.object_id for e in obs.entries} == {"o1"}


def test_matcher_models_independent():
    dets = [det("f1", "car", 0.9, GT_BOX), det("f2", "tree", 0.3, GT_BOX)]
    obs = match_detections([gt("o1")], dets, primary_iou=0.9)
    assert {(e.model_id, e.class_id) for e in obs.entries} == {
        ("f1", "car"), ("f2", "tree")}


def test_matcher_fallback_picks_highest_iou():
    # No detection clears the primary threshold, so the fallback assigns the
    # single best-overlap detection: f2 at IoU 0.5 beats f1 at 0.4 even
    # though f1 is more confident.
    dets = [det("f1", "car", 0.99, box(0, 0, 10, 4)),
            det("f2", "tree", 0.10, box(0, 0, 10, 5))]
    obs = match_detections([gt("o1")], dets, primary_iou=0.9)
    assert {(e.model_id, e.class_id) for e in obs.entries} == {("f2", "tree")}


def test_matcher_fallback_needs_positive_overlap():
    obs = match_detections([gt("o1")],
                           [det("f1", "car", 0.9, box(50, 50, 60, 60))],
                           primary_iou=0.9)
    assert obs.entries == frozenset()
    assert coverage_report(obs).uncovered == ("o1",)


def test_matcher_respects_image_boundaries():
    obs = match_detections([gt("o1", image="img1")],
                           [det("f1", "car", 0.9, GT_BOX, image="img2")],
                           primary_iou=0.9)
    assert obs.entries == frozenset()


def test_matcher_declared_models_widen_universe():
    obs = match_detections([gt("o1")], [det("f1", "car", 0.9, GT_BOX)],
                           primary_iou=0.9, models=("f1", "f2"))
    assert obs.models == frozenset({"f1", "f2"})


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_matcher_primary_matches_shrink_with_threshold(data):
    """On well-separated scenes (each detection overlaps exactly one object)
    the number of matched entries never grows as the threshold rises."""
    n_obj = data.draw(st.integers(1, 4))
    gts = [gt(f"o{i}", b=box(100 * i, 0, 100 * i + 50, 50)) for i in range(n_obj)]
    dets = []
    for i in range(n_obj):
        for m in ("f1", "f2"):
            if not data.draw(st.booleans()):
                continue
            dx = data.draw(st.integers(0, 10))
            dy = data.draw(st.integers(0, 10))
            conf = data.draw(st.floats(0.1, 1.0))
            dets.append(det(m, "car", float(conf),
                            box(100 * i + dx, dy, 100 * i + 50 + dx, 50 + dy)))
    lo, hi = sorted(data.draw(st.tuples(
        st.sampled_from((0.3, 0.5, 0.7, 0.9)),
        st.sampled_from((0.3, 0.5, 0.7, 0.9)))))
    n_lo = len(match_detections(gts, dets, primary_iou=lo).entries)
    n_hi = len(match_detections(gts, dets, primary_iou=hi).entries)
    assert n_hi <= n_lo


# ----------------------------------------------------------------- file io

def test_predictions_round_trip(tmp_path):
    path = str(tmp_path / "preds.jsonl")
    dets = [det("f1", "car", 0.123456789, GT_BOX),
            det("f1", "tree", 0.5, box(1, 2, 3, 4), image="img2")]
    write_predictions(path, dets)
    back = load_predictions(path, model_id="f1")
    assert len(back) == 2
    # confidences are stored at six decimal places
    assert back[0].confidence == pytest.approx(0.123457, abs=5e-7)
    assert back[1].bbox.as_list() == [1.0, 2.0, 3.0, 4.0]


def test_load_predictions_reports_bad_line(tmp_path):
    path = tmp_path / "preds.jsonl"
    good = json.dumps({"image_id": "i", "model_id": "f1", "class_id": "car",
                       "confidence": 0.5, "bbox": [0, 0, 1, 1]})
    path.write_text(good + "\nnot json\n")
    with pytest.raises(InputError, match=rf"{path}:2"):
        load_predictions(str(path))


def test_load_predictions_missing_field_and_bad_bbox(tmp_path):
    path = tmp_path / "preds.jsonl"
    rec = {"image_id": "i", "model_id": "f1", "class_id": "car",
           "confidence": 0.5}
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(InputError, match="missing field 'bbox'"):
        load_predictions(str(path))
    rec["bbox"] = [0, 0, 1]
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(InputError, match="bbox must be"):
        load_predictions(str(path))


def test_load_predictions_model_mismatch(tmp_path):
    path = tmp_path / "preds.jsonl"
    rec = {"image_id": "i", "model_id": "f2", "class_id": "car",
           "confidence": 0.5, "bbox": [0, 0, 1, 1]}
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(InputError, match="f2"):
        load_predictions(str(path), model_id="f1")


def test_ground_truth_round_trip_and_duplicates(tmp_path):
    path = str(tmp_path / "gt.jsonl")
    write_ground_truth(path, [gt("o1"), gt("o2", cls="tree")])
    back = load_ground_truth(path)
    assert [g.object_id for g in back] == ["o1", "o2"]
    assert ground_truth_labels(back) == {"o1": "car", "o2": "tree"}
    write_ground_truth(path, [gt("o1"), gt("o1")])
    with pytest.raises(InputError, match="duplicate object_id"):
        load_ground_truth(path)


def _write_tiny_dataset(tmp_path):
    gt_path = str(tmp_path / "gt.jsonl")
    write_ground_truth(gt_path, [gt("o1", cls="car"), gt("o2", cls="tree",
                                                         b=box(100, 0, 110, 10))])
    for m in ("f1", "f2"):
        write_predictions(str(tmp_path / f"{m}.jsonl"),
                          [det(m, "car", 0.8, GT_BOX),
                           det(m, "tree", 0.6, box(100, 0, 110, 10))])
    manifest = str(tmp_path / "manifest.json")
    write_manifest(manifest, ["f1", "f2"], ["car", "tree"],
                   {"f1": "f1.jsonl", "f2": "f2.jsonl"}, "gt.jsonl")
    return manifest


def test_dataset_round_trip(tmp_path):
    manifest = _write_tiny_dataset(tmp_path)
    ds = load_dataset(manifest)
    assert ds.models == ("f1", "f2")
    assert ds.classes == ("car", "tree")
    assert ds.labels() == {"o1": "car", "o2": "tree"}
    obs = observations_from_dataset(ds, primary_iou=0.9)
    assert obs.entries == frozenset({
        Observation("o1", "f1", "car", 0.8), Observation("o2", "f1", "tree", 0.6),
        Observation("o1", "f2", "car", 0.8), Observation("o2", "f2", "tree", 0.6)})


def test_manifest_validation(tmp_path):
    manifest = _write_tiny_dataset(tmp_path)
    raw = json.loads(open(manifest).read())

    bad = dict(raw)
    del bad["classes"]
    p = tmp_path / "m1.json"
    p.write_text(json.dumps(bad))
    with pytest.raises(InputError, match="missing field 'classes'"):
        load_dataset(str(p))

    bad = dict(raw)
    bad["predictions"] = {"f1": "f1.jsonl"}
    p = tmp_path / "m2.json"
    p.write_text(json.dumps(bad))
    with pytest.raises(InputError, match="cover exactly"):
        load_dataset(str(p))

    bad = dict(raw)
    bad["classes"] = ["car"]
    p = tmp_path / "m3.json"
    p.write_text(json.dumps(bad))
    with pytest.raises(InputError, match="unknown class"):
        load_dataset(str(p))


def test_manifest_paths_resolve_relative_to_manifest(tmp_path, monkeypatch):
    sub = tmp_path / "data"
    sub.mkdir()
    manifest = _write_tiny_dataset(sub)
    monkeypatch.chdir(tmp_path)
    ds = load_dataset("data/manifest.json")
    assert len(ds.ground_truth) == 2
