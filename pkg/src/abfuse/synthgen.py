"""Synthetic multi-model prediction scenarios.

A scenario draws ground-truth labels from a class prior and corrupts them
per model through a mixing confusion matrix ``(1 - t) * I + t * T_f`` whose
intensity ``t`` varies over *segments* of the test stream, so different
models are reliable in different regimes.  Each model's error target ``T_f``
shifts labels by a model-specific offset, giving models distinctive error
fingerprints.  Confidence is drawn from a high-mean Beta for correct
predictions and a low-mean Beta for wrong ones.

Training data uses one mild intensity per model so the error-detection
learner sees representative mistakes.  ``write_dataset`` lays every object
out on a disjoint unit grid of boxes so the bounding-box matcher
reconstructs the generated observation set exactly.
"""

import json
import math
import os
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .deduction import DEFAULT_CLASSES
from .model_io import (BoundingBox, Detection, GroundTruthObject, InputError,
                       Observation, ObservationSet, write_ground_truth,
                       write_manifest, write_predictions)


@dataclass(frozen=True)
class Segment:
    weight: float
    intensities: Tuple[float, ...]  # per model, in model order


@dataclass(frozen=True)
class ShiftScenario:
    name: str
    models: Tuple[str, ...]
    classes: Tuple[str, ...]
    class_prior: Tuple[float, ...]
    segments: Tuple[Segment, ...]
    train_intensities: Tuple[float, ...]
    n_train: int
    n_test: int
    seed: int
    conf_correct: Tuple[float, float] = (9.0, 2.0)
    conf_wrong: Tuple[float, float] = (2.5, 4.0)

    def __post_init__(self):
        F, C = len(self.models), len(self.classes)
        if F < 2 or C < 2:
            raise InputError("need at least two models and two classes")
        if len(self.class_prior) != C or abs(sum(self.class_prior) - 1.0) > 1e-9:
            raise InputError("class_prior must be a distribution over the classes")
        if len(self.train_intensities) != F:
            raise InputError("one training intensity per model required")
        if abs(sum(s.weight for s in self.segments) - 1.0) > 1e-9:
            raise InputError("segment weights must sum to 1")
        for s in self.segments:
            if len(s.intensities) != F:
                raise InputError("each segment needs one intensity per model")
            for t in s.intensities + (s.weight,):
                if not (0.0 <= t <= 1.0):
                    raise InputError(f"intensity/weight out of [0, 1]: {t}")
        for t in self.train_intensities:
            if not (0.0 <= t <= 1.0):
                raise InputError(f"train intensity out of [0, 1]: {t}")
        if self.n_train < 0 or self.n_test < 0:
            raise InputError("sample counts must be non-negative")


def error_shift(model_index: int, n_classes: int) -> int:
    """Model-specific label offset in 1..n_classes-1 (never the identity)."""
    return 1 + model_index % (n_classes - 1)


def confusion_matrix(n_classes: int, model_index: int, intensity: float) -> np.ndarray:
    """Row-stochastic ``(1 - t) * I + t * T`` with T a one-hot shift."""
    eye = np.eye(n_classes)
    target = np.zeros((n_classes, n_classes))
    s = error_shift(model_index, n_classes)
    for i in range(n_classes):
        target[i, (i + s) % n_classes] = 1.0
    return (1.0 - intensity) * eye + intensity * target


@dataclass(frozen=True)
class SynthData:
    scenario: ShiftScenario
    train: ObservationSet
    train_labels: Mapping[str, str]
    test: ObservationSet
    test_labels: Mapping[str, str]
    meta: Mapping


def _segment_of_index(scenario: ShiftScenario, n: int) -> np.ndarray:
    """Deterministic block assignment of object index -> segment index."""
    bounds = np.cumsum([s.weight for s in scenario.segments])
    edges = np.floor(bounds * n + 1e-9).astype(np.int64)
    seg = np.zeros(n, dtype=np.int64)
    start = 0
    for k, end in enumerate(edges):
        seg[start:end] = k
        start = end
    seg[start:] = len(scenario.segments) - 1
    return seg


def _sample_block(rng: np.random.Generator, scenario: ShiftScenario,
                  prefix: str, n: int, intensity_of) -> Tuple[ObservationSet, dict]:
    C = len(scenario.classes)
    labels_idx = rng.choice(C, size=n, p=np.asarray(scenario.class_prior))
    object_ids = [f"{prefix}{i:06d}" for i in range(n)]
    entries = []
    for f, model in enumerate(scenario.models):
        t_vec = intensity_of(f)
        shift = error_shift(f, C)
        u = rng.random(n)
        wrong = u < t_vec
        pred_idx = np.where(wrong, (labels_idx + shift) % C, labels_idx)
        conf_hi = rng.beta(*scenario.conf_correct, size=n)
        conf_lo = rng.beta(*scenario.conf_wrong, size=n)
        conf = np.round(np.where(wrong, conf_lo, conf_hi), 6)
        conf = np.clip(conf, 0.0, 1.0)
        for i in range(n):
            entries.append(Observation(object_ids[i], model,
                                       scenario.classes[pred_idx[i]],
                                       float(conf[i])))
    labels = {object_ids[i]: scenario.classes[labels_idx[i]] for i in range(n)}
    obs = ObservationSet.from_entries(entries, objects=object_ids,
                                      models=scenario.models,
                                      classes=scenario.classes)
    return obs, labels


def generate(scenario: ShiftScenario) -> SynthData:
    """Sample the scenario; a fixed seed gives identical output every time."""
    rng = np.random.default_rng(scenario.seed)

    train, train_labels = _sample_block(
        rng, scenario, "trn", scenario.n_train,
        lambda f: np.full(scenario.n_train, scenario.train_intensities[f]))

    seg = _segment_of_index(scenario, scenario.n_test)
    seg_intens = np.array([s.intensities for s in scenario.segments])  # (S, F)
    test, test_labels = _sample_block(
        rng, scenario, "tst", scenario.n_test,
        lambda f: seg_intens[seg, f])

    acc = {}
    for m in scenario.models:
        hits = sum(1 for e in test.entries
                   if e.model_id == m and test_labels[e.object_id] == e.class_id)
        acc[m] = hits / scenario.n_test if scenario.n_test else 0.0
    meta = {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "segment_sizes": np.bincount(seg, minlength=len(scenario.segments)).tolist()
        if scenario.n_test else [],
        "test_model_accuracy": acc,
    }
    return SynthData(scenario, train, train_labels, test, test_labels, meta)


# ---------------------------------------------------------------------------
# presets

# family -> (n_segments, reliable-regime intensity, shifted-regime intensity)
_FAMILIES = {
    "UM": (1, 0.15, 0.75),
    "BM": (2, 0.15, 0.75),
    "MM": (4, 0.20, 0.80),
    "AM": (6, 0.25, 0.85),
    "HUM": (1, 0.05, 0.95),
    "EG": (0, 0.05, 0.85),  # one segment per model, rotating reliability
}


def preset(name: str,
           n_models: int = 6,
           classes: Sequence[str] = DEFAULT_CLASSES,
           n_train: int = 1000,
           n_test: int = 2000,
           seed: int = 0,
           train_intensity: float = 0.15) -> ShiftScenario:
    """Named scenario template, e.g. ``UM_1`` or ``EG_1``.

    The family picks how many reliability regimes the test stream has; the
    variant index rotates which models own which regime.
    """
    try:
        family, variant_s = name.split("_", 1)
        variant = int(variant_s)
    except ValueError as exc:
        raise InputError(f"preset name must look like 'UM_1': {name!r}") from exc
    if family not in _FAMILIES or variant < 1:
        raise InputError(f"unknown preset {name!r}; families: {sorted(_FAMILIES)}")
    n_seg, low, high = _FAMILIES[family]
    if n_seg == 0:
        n_seg = n_models
    if n_seg > n_models:
        raise InputError(f"preset {name!r} needs at least {n_seg} models")

    models = tuple(f"m{k}" for k in range(n_models))
    segments = []
    for j in range(n_seg):
        home = (variant - 1 + j) % n_models
        intens = tuple(low if f == home else high for f in range(n_models))
        segments.append(Segment(1.0 / n_seg, intens))
    # make the weights sum to exactly 1.0
    segments[-1] = Segment(1.0 - (n_seg - 1) / n_seg, segments[-1].intensities)

    C = len(classes)
    return ShiftScenario(
        name=name,
        models=models,
        classes=tuple(classes),
        class_prior=tuple(1.0 / C for _ in range(C)),
        segments=tuple(segments),
        train_intensities=tuple(train_intensity for _ in range(n_models)),
        n_train=n_train,
        n_test=n_test,
        seed=seed,
    )


PRESET_FAMILIES = tuple(sorted(_FAMILIES))


# ---------------------------------------------------------------------------
# scenario config files


def save_scenario(path: str, scenario: ShiftScenario) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({
            "name": scenario.name,
            "models": list(scenario.models),
            "classes": list(scenario.classes),
            "class_prior": list(scenario.class_prior),
            "segments": [{"weight": s.weight, "intensities": list(s.intensities)}
                         for s in scenario.segments],
            "train_intensities": list(scenario.train_intensities),
            "n_train": scenario.n_train,
            "n_test": scenario.n_test,
            "seed": scenario.seed,
            "conf_correct": list(scenario.conf_correct),
            "conf_wrong": list(scenario.conf_wrong),
        }, fh, indent=2)
        fh.write("\n")


def load_scenario(path: str) -> ShiftScenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return ShiftScenario(
            name=str(raw.get("name", os.path.basename(path))),
            models=tuple(str(m) for m in raw["models"]),
            classes=tuple(str(c) for c in raw["classes"]),
            class_prior=tuple(float(p) for p in raw["class_prior"]),
            segments=tuple(Segment(float(s["weight"]),
                                   tuple(float(t) for t in s["intensities"]))
                           for s in raw["segments"]),
            train_intensities=tuple(float(t) for t in raw["train_intensities"]),
            n_train=int(raw["n_train"]),
            n_test=int(raw["n_test"]),
            seed=int(raw["seed"]),
            conf_correct=tuple(float(v) for v in raw.get("conf_correct", (9.0, 2.0))),
            conf_wrong=tuple(float(v) for v in raw.get("conf_wrong", (2.5, 4.0))),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: bad scenario config: {exc}") from exc


# ---------------------------------------------------------------------------
# file export

_GRID_COLS = 1000
_CELL = 20.0
_BOX = 10.0
_PER_IMAGE = 500


def _grid_box(index: int) -> BoundingBox:
    x = (index % _GRID_COLS) * _CELL
    y = (index // _GRID_COLS) * _CELL
    return BoundingBox(x, y, x + _BOX, y + _BOX)


def _image_of(index: int) -> str:
    return f"img{index // _PER_IMAGE:05d}"


def write_split(out_dir: str, obs: ObservationSet,
                labels: Mapping[str, str], classes: Sequence[str]) -> str:
    """Emit prediction/ground-truth files plus a manifest; returns its path.

    Objects are placed on a disjoint grid of unit boxes, every model's
    detection sharing its object's box, so matching at the default overlap
    threshold reproduces ``obs`` exactly.
    """
    os.makedirs(out_dir, exist_ok=True)
    objects = sorted(obs.objects)
    slot = {o: i for i, o in enumerate(objects)}

    gt = [GroundTruthObject(_image_of(slot[o]), o, labels[o], _grid_box(slot[o]))
          for o in objects]
    write_ground_truth(os.path.join(out_dir, "gt.jsonl"), gt)

    preds_map = {}
    for m in sorted(obs.models):
        dets = [Detection(_image_of(slot[e.object_id]), m, e.class_id,
                          e.confidence, _grid_box(slot[e.object_id]))
                for e in sorted(obs.entries) if e.model_id == m]
        fname = f"preds_{m}.jsonl"
        write_predictions(os.path.join(out_dir, fname), dets)
        preds_map[m] = fname

    manifest_path = os.path.join(out_dir, "manifest.json")
    write_manifest(manifest_path, sorted(obs.models), list(classes),
                   preds_map, "gt.jsonl")
    return manifest_path


def write_dataset(data: SynthData, out_dir: str) -> Tuple[str, str]:
    """Write train/ and test/ splits; returns both manifest paths."""
    train_manifest = write_split(os.path.join(out_dir, "train"),
                                 data.train, data.train_labels,
                                 data.scenario.classes)
    test_manifest = write_split(os.path.join(out_dir, "test"),
                                data.test, data.test_labels,
                                data.scenario.classes)
    save_scenario(os.path.join(out_dir, "scenario.json"), data.scenario)
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(dict(data.meta), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return train_manifest, test_manifest
