"""Deductive closure over accepted predictions.

Given an observation set, a hypothesis saying which (model, class) pairs are
accepted, and a set of mutually-exclusive class pairs, the closure derives:

* assignment atoms ``(class_id, object_id)`` — an object is assigned every
  class some accepted, non-error prediction gives it;
* error atoms for predictions whose (model, class) pair was rejected;
* violated ground rules ``(object_id, (class_a, class_b))`` where both
  classes of an exclusion pair got assigned to the same object.

The inconsistency score Inc normalizes the violation count; two modes are
supported and both solvers share :func:`violation_budget` so they agree on
what a given budget ``delta`` permits.
"""

import json
import math
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Optional, Tuple

from .model_io import InputError, ObservationSet

NORMALIZER_MODES = ("per_object", "per_ground_rule")

# guards against float dust in delta * n products (e.g. 0.3 * 10)
_FLOOR_EPS = 1e-9


def _canon_pair(a: str, b: str) -> Tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class IntegrityConstraintSet:
    """Unordered mutually-exclusive class pairs."""

    pairs: Tuple[Tuple[str, str], ...]

    def __post_init__(self):
        canon = []
        seen = set()
        for a, b in self.pairs:
            if a == b:
                raise InputError(f"exclusion pair with identical classes: {a!r}")
            p = _canon_pair(a, b)
            if p not in seen:
                seen.add(p)
                canon.append(p)
        object.__setattr__(self, "pairs", tuple(sorted(canon)))

    @classmethod
    def all_pairs(cls, classes: Iterable[str]) -> "IntegrityConstraintSet":
        cs = sorted(set(classes))
        return cls(tuple((a, b) for i, a in enumerate(cs) for b in cs[i + 1:]))

    @classmethod
    def empty(cls) -> "IntegrityConstraintSet":
        return cls(())

    def __len__(self):
        return len(self.pairs)

    def __contains__(self, pair) -> bool:
        a, b = pair
        return _canon_pair(a, b) in self.pairs

    def neighbors(self, class_id: str) -> frozenset:
        out = set()
        for a, b in self.pairs:
            if a == class_id:
                out.add(b)
            elif b == class_id:
                out.add(a)
        return frozenset(out)

    def max_degree(self) -> int:
        deg: dict = {}
        for a, b in self.pairs:
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        return max(deg.values()) if deg else 0


@dataclass(frozen=True)
class Hypothesis:
    """Accepted (model_id, class_id) pairs."""

    accepted: FrozenSet[Tuple[str, str]]

    @classmethod
    def full(cls, models: Iterable[str], classes: Iterable[str]) -> "Hypothesis":
        return cls(frozenset((f, c) for f in models for c in classes))

    @classmethod
    def of(cls, pairs: Iterable[Tuple[str, str]]) -> "Hypothesis":
        return cls(frozenset(pairs))

    def accepts(self, model_id: str, class_id: str) -> bool:
        return (model_id, class_id) in self.accepted

    def without(self, pairs: Iterable[Tuple[str, str]]) -> "Hypothesis":
        return Hypothesis(self.accepted - frozenset(pairs))


@dataclass(frozen=True)
class FixpointResult:
    assigned: FrozenSet[Tuple[str, str]]          # (class_id, object_id)
    errors: FrozenSet[Tuple[str, str, str]]       # (model_id, class_id, object_id)
    violations: FrozenSet[Tuple[str, Tuple[str, str]]]
    pred: int
    inc: float


def find_violations(assigned: Iterable[Tuple[str, str]],
                    ic: IntegrityConstraintSet) -> frozenset:
    """Ground rules violated by a set of (class_id, object_id) atoms."""
    by_object: dict = {}
    for c, w in assigned:
        by_object.setdefault(w, set()).add(c)
    out = set()
    for w, classes in by_object.items():
        for a, b in ic.pairs:
            if a in classes and b in classes:
                out.add((w, (a, b)))
    return frozenset(out)


def count_inc(assigned: Iterable[Tuple[str, str]],
              ic: IntegrityConstraintSet,
              normalizer_mode: str = "per_object",
              *,
              n_objects: int,
              directed_ground_rules: bool = False) -> float:
    """Normalized inconsistency of a set of assignment atoms.

    ``per_object`` divides violated ground rules by the number of observed
    objects and clamps to [0, 1]; ``per_ground_rule`` divides by the total
    number of ground rules (objects x exclusion pairs).  With
    ``directed_ground_rules`` each unordered violation counts twice, as do
    the ``per_ground_rule`` denominator's rules, so only ``per_object``
    scores actually change.
    """
    if normalizer_mode not in NORMALIZER_MODES:
        raise InputError(f"unknown normalizer_mode {normalizer_mode!r}")
    if n_objects < 0:
        raise InputError("n_objects must be >= 0")
    raw = len(find_violations(assigned, ic))
    if directed_ground_rules:
        raw *= 2
    if normalizer_mode == "per_object":
        if n_objects == 0:
            return 0.0
        return min(1.0, raw / n_objects)
    denom = n_objects * len(ic) * (2 if directed_ground_rules else 1)
    if denom == 0:
        return 0.0
    return raw / denom


def violation_budget(delta: float,
                     n_objects: int,
                     ic: IntegrityConstraintSet,
                     normalizer_mode: str = "per_object",
                     directed_ground_rules: bool = False) -> int:
    """Largest number of (undirected) violated ground rules with Inc <= delta.

    This is the single source of truth for turning the real-valued budget
    into an integer count, shared by the exact solver and the greedy search.
    """
    if normalizer_mode not in NORMALIZER_MODES:
        raise InputError(f"unknown normalizer_mode {normalizer_mode!r}")
    if not (0.0 <= delta <= 1.0):
        raise InputError(f"delta must be in [0, 1]: {delta!r}")
    weight = 2 if directed_ground_rules else 1
    if normalizer_mode == "per_object":
        normalizer = n_objects
    else:
        normalizer = n_objects * len(ic) * weight
    scaled = math.floor(delta * normalizer + _FLOOR_EPS)
    return scaled // weight


def fixpoint(obs: ObservationSet,
             hypothesis: Hypothesis,
             ic: IntegrityConstraintSet,
             errors: Iterable[Tuple[str, str, str]] = (),
             normalizer_mode: str = "per_object",
             directed_ground_rules: bool = False) -> FixpointResult:
    """Close an observation set under a hypothesis.

    ``errors`` are externally supplied error atoms (model, class, object)
    whose predictions never contribute assignments even when their
    (model, class) pair is accepted.
    """
    known_errors = frozenset(errors)
    derived_errors = set(known_errors)
    assigned = set()
    for e in obs.entries:
        if not hypothesis.accepts(e.model_id, e.class_id):
            derived_errors.add((e.model_id, e.class_id, e.object_id))
            continue
        if (e.model_id, e.class_id, e.object_id) in known_errors:
            continue
        assigned.add((e.class_id, e.object_id))
    violations = find_violations(assigned, ic)
    inc = count_inc(assigned, ic, normalizer_mode,
                    n_objects=len(obs.objects),
                    directed_ground_rules=directed_ground_rules)
    return FixpointResult(frozenset(assigned), frozenset(derived_errors),
                          violations, len(assigned), inc)


# ---------------------------------------------------------------------------
# domain configuration

DEFAULT_CLASSES = ("construction", "nature", "pedestrians", "vehicles")


@dataclass(frozen=True)
class DomainConfig:
    classes: Tuple[str, ...]
    ic: IntegrityConstraintSet
    normalizer_mode: str = "per_object"
    directed_ground_rules: bool = False

    def __post_init__(self):
        if self.normalizer_mode not in NORMALIZER_MODES:
            raise InputError(f"unknown normalizer_mode {self.normalizer_mode!r}")
        cs = set(self.classes)
        for a, b in self.ic.pairs:
            if a not in cs or b not in cs:
                raise InputError(f"exclusion pair ({a!r}, {b!r}) uses undeclared classes")


def default_domain(classes: Optional[Iterable[str]] = None) -> DomainConfig:
    cs = tuple(sorted(set(classes))) if classes is not None else DEFAULT_CLASSES
    return DomainConfig(cs, IntegrityConstraintSet.all_pairs(cs))


def load_domain_config(path: str) -> DomainConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc
    if "classes" not in raw:
        raise InputError(f"{path}: missing field 'classes'")
    classes = tuple(str(c) for c in raw["classes"])
    if raw.get("all_pairs", False) or "ic_pairs" not in raw:
        ic = IntegrityConstraintSet.all_pairs(classes)
    else:
        ic = IntegrityConstraintSet(tuple((str(a), str(b)) for a, b in raw["ic_pairs"]))
    return DomainConfig(
        classes=classes,
        ic=ic,
        normalizer_mode=raw.get("normalizer_mode", "per_object"),
        directed_ground_rules=bool(raw.get("directed_ground_rules", False)),
    )


def save_domain_config(path: str, cfg: DomainConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({
            "classes": list(cfg.classes),
            "ic_pairs": [list(p) for p in cfg.ic.pairs],
            "normalizer_mode": cfg.normalizer_mode,
            "directed_ground_rules": cfg.directed_ground_rules,
        }, fh, indent=2)
        fh.write("\n")
