"""Error-detection rules.

A rule is attached to one (model, class) pair and is a disjunction of
conditions; any firing condition flags that model's prediction of that class
as an error.  Rules are learned per target false-rate budget ``epsilon``:
greedy selection keeps adding the condition with the highest standalone
precision (share of the entries it flags that are actually wrong) as long as
the cumulative share of *correct* predictions flagged stays within
``epsilon`` and at least one new wrong prediction gets caught.

Learning over an ascending epsilon grid is warm-started: the rule for a
larger budget extends the rule for the smaller one, so the set of flagged
predictions only grows with epsilon.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .model_io import InputError, Observation, ObservationSet

CONDITION_KINDS = ("disagree_with", "confidence_below", "class_is", "conjunction")

DEFAULT_EPSILON_GRID = (0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

_QUANTILES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

_EPS = 1e-12


@dataclass(frozen=True)
class Condition:
    kind: str
    model: Optional[str] = None
    threshold: Optional[float] = None
    class_id: Optional[str] = None
    parts: Tuple["Condition", ...] = ()

    def __post_init__(self):
        if self.kind == "disagree_with":
            if not self.model:
                raise InputError("disagree_with needs a model id")
        elif self.kind == "confidence_below":
            if self.threshold is None or not (0.0 <= self.threshold <= 1.0):
                raise InputError(f"confidence_below needs a threshold in [0, 1]: {self.threshold!r}")
        elif self.kind == "class_is":
            if not self.class_id:
                raise InputError("class_is needs a class id")
        elif self.kind == "conjunction":
            if len(self.parts) < 2:
                raise InputError("conjunction needs at least two parts")
        else:
            raise InputError(f"unknown condition kind {self.kind!r}")

    def fires(self, entry: Observation, siblings: Mapping[str, Observation]) -> bool:
        """Evaluate against one entry; ``siblings`` maps model -> entry for the same object."""
        if self.kind == "disagree_with":
            other = siblings.get(self.model)
            return other is not None and other.class_id != entry.class_id
        if self.kind == "confidence_below":
            return entry.confidence < self.threshold
        if self.kind == "class_is":
            return any(s.class_id == self.class_id for m, s in siblings.items()
                       if m != entry.model_id)
        return all(p.fires(entry, siblings) for p in self.parts)

    def to_json(self) -> dict:
        if self.kind == "disagree_with":
            return {"kind": self.kind, "model": self.model}
        if self.kind == "confidence_below":
            return {"kind": self.kind, "threshold": self.threshold}
        if self.kind == "class_is":
            return {"kind": self.kind, "class": self.class_id}
        return {"kind": self.kind, "parts": [p.to_json() for p in self.parts]}

    @classmethod
    def from_json(cls, raw: Mapping) -> "Condition":
        kind = raw.get("kind")
        if kind == "disagree_with":
            return cls(kind, model=str(raw["model"]))
        if kind == "confidence_below":
            return cls(kind, threshold=float(raw["threshold"]))
        if kind == "class_is":
            return cls(kind, class_id=str(raw["class"]))
        if kind == "conjunction":
            return cls(kind, parts=tuple(cls.from_json(p) for p in raw["parts"]))
        raise InputError(f"unknown condition kind {kind!r}")


@dataclass(frozen=True)
class ErrorRule:
    model_id: str
    class_id: str
    conditions: Tuple[Condition, ...] = ()

    def flags(self, entry: Observation, siblings: Mapping[str, Observation]) -> bool:
        return any(c.fires(entry, siblings) for c in self.conditions)


@dataclass
class RuleSet:
    """Learned rules for every (model, class, epsilon) on a fixed grid."""

    epsilon_grid: Tuple[float, ...]
    rules: Dict[Tuple[str, str, float], ErrorRule] = field(default_factory=dict)

    def __post_init__(self):
        grid = tuple(sorted(set(float(e) for e in self.epsilon_grid)))
        if not grid:
            raise InputError("epsilon grid must be non-empty")
        for e in grid:
            if not (0.0 <= e <= 1.0):
                raise InputError(f"epsilon out of [0, 1]: {e!r}")
        self.epsilon_grid = grid

    def _grid_value(self, epsilon: float) -> float:
        for e in self.epsilon_grid:
            if abs(e - epsilon) <= _EPS:
                return e
        raise InputError(f"epsilon {epsilon!r} not on the learned grid {self.epsilon_grid}")

    def rule_for(self, model_id: str, class_id: str, epsilon: float) -> ErrorRule:
        e = self._grid_value(epsilon)
        return self.rules.get((model_id, class_id, e),
                              ErrorRule(model_id, class_id, ()))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for (m, c, e) in sorted(self.rules):
                rule = self.rules[(m, c, e)]
                fh.write(json.dumps({
                    "model_id": m,
                    "class_id": c,
                    "epsilon": e,
                    "conditions": [cond.to_json() for cond in rule.conditions],
                }) + "\n")

    @classmethod
    def load(cls, path: str) -> "RuleSet":
        rules: dict = {}
        grid = set()
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
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise InputError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                try:
                    m = str(rec["model_id"])
                    c = str(rec["class_id"])
                    e = float(rec["epsilon"])
                    conds = tuple(Condition.from_json(p) for p in rec["conditions"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise InputError(f"{path}:{lineno}: bad rule record: {exc}") from exc
                key = (m, c, e)
                if key in rules:
                    raise InputError(f"{path}:{lineno}: duplicate rule for {key}")
                rules[key] = ErrorRule(m, c, conds)
                grid.add(e)
        if not grid:
            raise InputError(f"{path}: no rules found")
        return cls(tuple(sorted(grid)), rules)


def sibling_index(obs: ObservationSet) -> Dict[str, Dict[str, Observation]]:
    """object_id -> {model_id -> entry} for fast condition evaluation."""
    out: Dict[str, Dict[str, Observation]] = {}
    for e in obs.entries:
        out.setdefault(e.object_id, {})[e.model_id] = e
    return out


def generate_candidates(train: ObservationSet,
                        quantiles: Sequence[float] = _QUANTILES
                        ) -> Dict[Tuple[str, str], Tuple[Condition, ...]]:
    """Deterministic candidate pool per (model, class).

    Disagreement conditions against every other model (model-id order), then
    confidence thresholds at the given quantiles of the model's training
    confidences (ascending, deduplicated).
    """
    models = sorted(train.models)
    classes = sorted(train.classes)
    conf_by_model: Dict[str, list] = {m: [] for m in models}
    for e in train.entries:
        conf_by_model[e.model_id].append(e.confidence)

    thresholds: Dict[str, Tuple[float, ...]] = {}
    for m in models:
        confs = conf_by_model[m]
        if confs:
            qs = np.quantile(np.asarray(confs, dtype=np.float64), quantiles)
            vals = sorted(set(round(float(q), 9) for q in qs))
        else:
            vals = []
        thresholds[m] = tuple(vals)

    out: Dict[Tuple[str, str], Tuple[Condition, ...]] = {}
    for f in models:
        pool = [Condition("disagree_with", model=g) for g in models if g != f]
        pool.extend(Condition("confidence_below", threshold=t) for t in thresholds[f])
        for c in classes:
            out[(f, c)] = tuple(pool)
    return out


def _learn_pair(entries: Sequence[Observation],
                correct: np.ndarray,
                fired: np.ndarray,
                epsilon: float,
                base: Sequence[int]) -> list:
    """Greedy condition selection for one (model, class) pair.

    ``fired[i, j]`` says whether candidate ``i`` fires on entry ``j``.
    ``base`` holds candidate indices already committed by a smaller budget.
    Candidates are ranked by standalone precision -- the share of the
    entries a candidate flags that are actually wrong -- which is a fixed
    per-candidate quantity; only the budget headroom and the requirement to
    catch something new change as conditions accumulate.  Ties go to the
    earlier candidate in pool order.  Returns the selected candidate
    indices, ``base`` first.
    """
    n_correct = int(correct.sum())
    chosen = list(base)
    flagged = np.zeros(len(entries), dtype=bool)
    for i in chosen:
        flagged |= fired[i]
    limit = epsilon * n_correct + _EPS

    totals = fired.sum(axis=1)
    wrongs = (fired & ~correct).sum(axis=1)

    while True:
        best = None
        flagged_correct = int((flagged & correct).sum())
        for i in range(fired.shape[0]):
            if i in chosen or totals[i] == 0:
                continue
            new = fired[i] & ~flagged
            if not (new & ~correct).any():
                continue
            dr = int((new & correct).sum())
            if n_correct > 0 and flagged_correct + dr > limit:
                continue
            prec = wrongs[i] / totals[i]
            if best is None or prec > best[0]:
                best = (prec, i)
        if best is None:
            return chosen
        chosen.append(best[1])
        flagged |= fired[best[1]]


def learn_ruleset(train: ObservationSet,
                  gt_labels: Mapping[str, str],
                  epsilon_grid: Sequence[float] = DEFAULT_EPSILON_GRID,
                  candidates: Optional[Mapping[Tuple[str, str], Tuple[Condition, ...]]] = None
                  ) -> RuleSet:
    """Learn rules for every (model, class) pair across the epsilon grid."""
    for e in train.entries:
        if e.object_id not in gt_labels:
            raise InputError(f"training object {e.object_id!r} has no ground-truth label")
    if candidates is None:
        candidates = generate_candidates(train)
    grid = tuple(sorted(set(float(e) for e in epsilon_grid)))
    if not grid:
        raise InputError("epsilon grid must be non-empty")

    siblings = sibling_index(train)
    by_pair: Dict[Tuple[str, str], list] = {}
    for e in sorted(train.entries):
        by_pair.setdefault((e.model_id, e.class_id), []).append(e)

    ruleset = RuleSet(grid)
    for f in sorted(train.models):
        for c in sorted(train.classes):
            pool = tuple(candidates.get((f, c), ()))
            entries = by_pair.get((f, c), [])
            if entries and pool:
                correct = np.array([gt_labels[e.object_id] == c for e in entries],
                                   dtype=bool)
                fired = np.zeros((len(pool), len(entries)), dtype=bool)
                for i, cond in enumerate(pool):
                    for j, entry in enumerate(entries):
                        fired[i, j] = cond.fires(entry, siblings[entry.object_id])
                chosen: list = []
                for eps in grid:
                    chosen = _learn_pair(entries, correct, fired, eps, chosen)
                    ruleset.rules[(f, c, eps)] = ErrorRule(
                        f, c, tuple(pool[i] for i in chosen))
            else:
                for eps in grid:
                    ruleset.rules[(f, c, eps)] = ErrorRule(f, c, ())
    return ruleset


def apply_rules(obs: ObservationSet,
                ruleset: RuleSet,
                epsilon: float) -> Tuple[ObservationSet, frozenset]:
    """Filter an observation set with the rules learned for ``epsilon``.

    Returns the surviving observations (same object/model/class universe)
    and the flagged error atoms ``(model_id, class_id, object_id)``.
    """
    siblings = sibling_index(obs)
    keep = []
    errors = set()
    for e in obs.entries:
        rule = ruleset.rule_for(e.model_id, e.class_id, epsilon)
        if rule.flags(e, siblings[e.object_id]):
            errors.add((e.model_id, e.class_id, e.object_id))
        else:
            keep.append(e)
    filtered = ObservationSet(frozenset(keep), obs.objects, obs.models, obs.classes)
    return filtered, frozenset(errors)


def flag_rate_on_correct(train: ObservationSet,
                         gt_labels: Mapping[str, str],
                         ruleset: RuleSet,
                         epsilon: float,
                         model_id: str,
                         class_id: str) -> float:
    """Share of correct training predictions of (model, class) flagged at epsilon."""
    siblings = sibling_index(train)
    rule = ruleset.rule_for(model_id, class_id, epsilon)
    n_correct = 0
    n_flagged = 0
    for e in train.entries:
        if e.model_id != model_id or e.class_id != class_id:
            continue
        if gt_labels.get(e.object_id) == class_id:
            n_correct += 1
            if rule.flags(e, siblings[e.object_id]):
                n_flagged += 1
    return n_flagged / n_correct if n_correct else 0.0
