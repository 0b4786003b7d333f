"""Input data model: detections, ground truth, and observation sets.

File formats
------------
Prediction files are JSONL, one detection per line::

    {"image_id": "img0", "model_id": "m1", "class_id": "vehicles",
     "confidence": 0.93, "bbox": [x_min, y_min, x_max, y_max]}

Ground-truth files are JSONL, one object per line::

    {"image_id": "img0", "object_id": "o17", "class_id": "vehicles",
     "bbox": [x_min, y_min, x_max, y_max]}

A dataset manifest is a JSON document tying them together::

    {"models": ["m1", "m2"], "classes": ["vehicles", "nature"],
     "predictions": {"m1": "m1.jsonl", "m2": "m2.jsonl"},
     "ground_truth": "gt.jsonl"}

Relative paths are resolved against the manifest's directory.
"""

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence


class InputError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box; corners must satisfy min < max on both axes."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
            raise InputError(f"non-finite bbox coordinates: {vals}")
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise InputError(f"degenerate bbox (zero or negative area): {vals}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_list(self) -> list:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


def compute_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; always in [0, 1]."""
    if a.area <= 0.0 or b.area <= 0.0:
        raise InputError("IoU undefined for zero-area boxes")
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Detection:
    image_id: str
    model_id: str
    class_id: str
    confidence: float
    bbox: BoundingBox

    def __post_init__(self):
        if not (isinstance(self.confidence, (int, float))
                and math.isfinite(self.confidence)
                and 0.0 <= self.confidence <= 1.0):
            raise InputError(f"confidence out of [0, 1]: {self.confidence!r}")


@dataclass(frozen=True)
class GroundTruthObject:
    image_id: str
    object_id: str
    class_id: str
    bbox: BoundingBox


class Observation(NamedTuple):
    """One model's surviving prediction for one resolved object."""

    object_id: str
    model_id: str
    class_id: str
    confidence: float


@dataclass(frozen=True)
class ObservationSet:
    """Predictions keyed to shared object identities.

    ``objects`` is the full object universe, including objects no model
    predicted anything for; those stay relevant as the normalization base
    for inconsistency scores.
    """

    entries: frozenset
    objects: frozenset
    models: frozenset
    classes: frozenset

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.object_id not in self.objects:
                raise InputError(f"entry references unknown object {e.object_id!r}")
            if e.model_id not in self.models:
                raise InputError(f"entry references unknown model {e.model_id!r}")
            if e.class_id not in self.classes:
                raise InputError(f"entry references unknown class {e.class_id!r}")
            key = (e.object_id, e.model_id)
            if key in seen:
                raise InputError(f"model {e.model_id!r} has two entries for object {e.object_id!r}")
            seen.add(key)

    @classmethod
    def from_entries(cls, entries: Iterable[Observation],
                     objects: Optional[Iterable[str]] = None,
                     models: Optional[Iterable[str]] = None,
                     classes: Optional[Iterable[str]] = None) -> "ObservationSet":
        entries = frozenset(entries)
        objs = set(objects) if objects is not None else set()
        mods = set(models) if models is not None else set()
        clss = set(classes) if classes is not None else set()
        objs.update(e.object_id for e in entries)
        mods.update(e.model_id for e in entries)
        clss.update(e.class_id for e in entries)
        return cls(entries, frozenset(objs), frozenset(mods), frozenset(clss))

    def sorted_entries(self) -> list:
        return sorted(self.entries)

    def by_object(self) -> dict:
        out: dict = {}
        for e in self.entries:
            out.setdefault(e.object_id, []).append(e)
        for group in out.values():
            group.sort()
        return out

    def atoms(self) -> frozenset:
        """Distinct (class_id, object_id) assignment atoms."""
        return frozenset((e.class_id, e.object_id) for e in self.entries)


@dataclass(frozen=True)
class CoverageReport:
    """Objects left without any matched prediction."""

    uncovered: tuple

    @property
    def n_uncovered(self) -> int:
        return len(self.uncovered)


def coverage_report(obs: ObservationSet) -> CoverageReport:
    covered = {e.object_id for e in obs.entries}
    return CoverageReport(tuple(sorted(obs.objects - covered)))


def match_detections(gt: Sequence[GroundTruthObject],
                     detections: Sequence[Detection],
                     primary_iou: float = 0.90,
                     models: Optional[Iterable[str]] = None,
                     classes: Optional[Iterable[str]] = None) -> ObservationSet:
    """Resolve detections onto ground-truth object identities.

    Stage 1 runs independently per model: objects are visited in input
    order and each takes that model's highest-confidence unused detection
    overlapping it with IoU strictly above ``primary_iou``.  Objects still
    untouched by every model afterwards get a second chance: the unused
    detection (any model) with the highest positive IoU.  Each detection is
    consumed by at most one object, and each object keeps at most one entry
    per model.
    """
    if not (0.0 < primary_iou <= 1.0):
        raise InputError(f"primary_iou must be in (0, 1]: {primary_iou!r}")
    for i, g in enumerate(gt):
        for h in gt[i + 1:]:
            if g.object_id == h.object_id:
                raise InputError(f"duplicate ground-truth object_id {g.object_id!r}")

    gt_by_image: dict = {}
    for g in gt:
        gt_by_image.setdefault(g.image_id, []).append(g)

    # detections keyed by (image, model), sorted high confidence first;
    # ties keep input order
    det_index: dict = {}
    for pos, d in enumerate(detections):
        det_index.setdefault((d.image_id, d.model_id), []).append((pos, d))
    for group in det_index.values():
        group.sort(key=lambda pd: (-pd[1].confidence, pd[0]))

    used = set()
    entries = []
    matched_objects = set()

    model_ids = sorted({d.model_id for d in detections})
    for image_id, objs in gt_by_image.items():
        for model_id in model_ids:
            for g in objs:
                for pos, d in det_index.get((image_id, model_id), ()):
                    if pos in used:
                        continue
                    if compute_iou(d.bbox, g.bbox) > primary_iou:
                        used.add(pos)
                        entries.append(Observation(g.object_id, d.model_id,
                                                   d.class_id, d.confidence))
                        matched_objects.add(g.object_id)
                        break

    for image_id, objs in gt_by_image.items():
        for g in objs:
            if g.object_id in matched_objects:
                continue
            best = None
            for pos, d in enumerate(detections):
                if pos in used or d.image_id != image_id:
                    continue
                iou = compute_iou(d.bbox, g.bbox)
                if iou <= 0.0:
                    continue
                key = (-iou, -d.confidence, d.model_id, pos)
                if best is None or key < best[0]:
                    best = (key, pos, d)
            if best is not None:
                _, pos, d = best
                used.add(pos)
                entries.append(Observation(g.object_id, d.model_id,
                                           d.class_id, d.confidence))
                matched_objects.add(g.object_id)

    all_models = set(models) if models is not None else set(model_ids)
    all_classes = set(classes) if classes is not None else set()
    all_classes.update(d.class_id for d in detections)
    all_classes.update(g.class_id for g in gt)
    return ObservationSet.from_entries(
        entries,
        objects=[g.object_id for g in gt],
        models=all_models,
        classes=all_classes,
    )


def ground_truth_labels(gt: Sequence[GroundTruthObject]) -> dict:
    return {g.object_id: g.class_id for g in gt}


# ---------------------------------------------------------------------------
# file I/O


def _read_jsonl(path: str) -> Iterable[tuple]:
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: invalid JSON: {exc}") from exc


def _require(rec: Mapping, key: str, path: str, lineno: int):
    if key not in rec:
        raise InputError(f"{path}:{lineno}: missing field {key!r}")
    return rec[key]


def _parse_bbox(raw, path: str, lineno: int) -> BoundingBox:
    if not (isinstance(raw, (list, tuple)) and len(raw) == 4):
        raise InputError(f"{path}:{lineno}: bbox must be [x_min, y_min, x_max, y_max]")
    try:
        return BoundingBox(*(float(v) for v in raw))
    except (TypeError, ValueError, InputError) as exc:
        raise InputError(f"{path}:{lineno}: {exc}") from exc


def load_predictions(path: str, model_id: Optional[str] = None) -> list:
    out = []
    for lineno, rec in _read_jsonl(path):
        det = Detection(
            image_id=str(_require(rec, "image_id", path, lineno)),
            model_id=str(_require(rec, "model_id", path, lineno)),
            class_id=str(_require(rec, "class_id", path, lineno)),
            confidence=float(_require(rec, "confidence", path, lineno)),
            bbox=_parse_bbox(_require(rec, "bbox", path, lineno), path, lineno),
        )
        if model_id is not None and det.model_id != model_id:
            raise InputError(
                f"{path}:{lineno}: model_id {det.model_id!r} does not match manifest entry {model_id!r}")
        out.append(det)
    return out


def load_ground_truth(path: str) -> list:
    out = []
    seen = set()
    for lineno, rec in _read_jsonl(path):
        g = GroundTruthObject(
            image_id=str(_require(rec, "image_id", path, lineno)),
            object_id=str(_require(rec, "object_id", path, lineno)),
            class_id=str(_require(rec, "class_id", path, lineno)),
            bbox=_parse_bbox(_require(rec, "bbox", path, lineno), path, lineno),
        )
        if g.object_id in seen:
            raise InputError(f"{path}:{lineno}: duplicate object_id {g.object_id!r}")
        seen.add(g.object_id)
        out.append(g)
    return out


@dataclass(frozen=True)
class Dataset:
    models: tuple
    classes: tuple
    ground_truth: tuple
    detections: tuple
    manifest_path: str = ""

    def labels(self) -> dict:
        return ground_truth_labels(self.ground_truth)


def load_dataset(manifest_path: str) -> Dataset:
    """Load a manifest plus all files it references, validating as it goes."""
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot open {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{manifest_path}: invalid JSON: {exc}") from exc

    for key in ("models", "classes", "predictions", "ground_truth"):
        if key not in manifest:
            raise InputError(f"{manifest_path}: missing field {key!r}")
    models = [str(m) for m in manifest["models"]]
    classes = [str(c) for c in manifest["classes"]]
    if len(set(models)) != len(models):
        raise InputError(f"{manifest_path}: duplicate model ids")
    if len(set(classes)) != len(classes):
        raise InputError(f"{manifest_path}: duplicate class ids")

    base = os.path.dirname(os.path.abspath(manifest_path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    preds_map = manifest["predictions"]
    if set(preds_map) != set(models):
        raise InputError(f"{manifest_path}: prediction files must cover exactly the declared models")

    detections = []
    for m in models:
        detections.extend(load_predictions(resolve(preds_map[m]), model_id=m))
    gt = load_ground_truth(resolve(manifest["ground_truth"]))

    class_set = set(classes)
    for d in detections:
        if d.class_id not in class_set:
            raise InputError(f"prediction for unknown class {d.class_id!r} (model {d.model_id!r})")
    for g in gt:
        if g.class_id not in class_set:
            raise InputError(f"ground-truth object {g.object_id!r} has unknown class {g.class_id!r}")

    return Dataset(tuple(models), tuple(classes), tuple(gt), tuple(detections),
                   manifest_path=os.path.abspath(manifest_path))


def observations_from_dataset(ds: Dataset, primary_iou: float = 0.90) -> ObservationSet:
    return match_detections(list(ds.ground_truth), list(ds.detections),
                            primary_iou=primary_iou,
                            models=ds.models, classes=ds.classes)


def write_predictions(path: str, detections: Iterable[Detection]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in detections:
            fh.write(json.dumps({
                "image_id": d.image_id,
                "model_id": d.model_id,
                "class_id": d.class_id,
                "confidence": round(float(d.confidence), 6),
                "bbox": d.bbox.as_list(),
            }) + "\n")


def write_ground_truth(path: str, gt: Iterable[GroundTruthObject]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in gt:
            fh.write(json.dumps({
                "image_id": g.image_id,
                "object_id": g.object_id,
                "class_id": g.class_id,
                "bbox": g.bbox.as_list(),
            }) + "\n")


def write_manifest(path: str, models: Sequence[str], classes: Sequence[str],
                   predictions: Mapping[str, str], ground_truth: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({
            "models": list(models),
            "classes": list(classes),
            "predictions": dict(predictions),
            "ground_truth": ground_truth,
        }, fh, indent=2)
        fh.write("\n")
