"""Greedy acceptance-set search.

Visits (model, class) pairs in a fixed order.  For each pair it tries every
filter strength ``epsilon`` in the configured set, asking: if this model's
surviving predictions of this class were added to the running selection,
would the inconsistency stay within ``delta`` and would the number of
distinct assignment atoms strictly grow?  The strongest-growing feasible
epsilon wins, smallest epsilon on ties; pairs that cannot grow the selection
are skipped.  Accepted predictions are never removed, so every intermediate
selection already satisfies the budget.
"""

import json
import random
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np

from . import kernels
from .deduction import IntegrityConstraintSet, count_inc
from .edr import RuleSet, sibling_index
from .model_io import InputError, Observation, ObservationSet

_EPS = 1e-12


@dataclass(frozen=True)
class HsConfig:
    delta: float
    epsilon_set: Tuple[float, ...]
    pair_order: Optional[Tuple[Tuple[str, str], ...]] = None
    shuffle_seed: Optional[int] = None

    def __post_init__(self):
        if not (0.0 <= self.delta <= 1.0):
            raise InputError(f"delta must be in [0, 1]: {self.delta!r}")
        eps = tuple(sorted(set(float(e) for e in self.epsilon_set)))
        if not eps:
            raise InputError("epsilon_set must be non-empty")
        object.__setattr__(self, "epsilon_set", eps)


@dataclass(frozen=True)
class SelectionStep:
    model_id: str
    class_id: str
    chosen_epsilon: Optional[float]
    s_size_after: int
    incon_after: float


@dataclass(frozen=True)
class SelectionTrace:
    steps: Tuple[SelectionStep, ...]

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for s in self.steps:
                fh.write(json.dumps({
                    "model_id": s.model_id,
                    "class_id": s.class_id,
                    "chosen_epsilon": s.chosen_epsilon,
                    "s_size_after": s.s_size_after,
                }) + "\n")


@dataclass(frozen=True)
class HsResult:
    selected: frozenset            # Observation entries
    trace: SelectionTrace
    n_atoms: int
    inconsistency: float

    def atoms(self) -> frozenset:
        return frozenset((e.class_id, e.object_id) for e in self.selected)


def _filtered(model_id: str, class_id: str, epsilon: float,
              by_pair: dict, siblings: dict, ruleset: RuleSet) -> frozenset:
    rule = ruleset.rule_for(model_id, class_id, epsilon)
    return frozenset(e for e in by_pair.get((model_id, class_id), ())
                     if not rule.flags(e, siblings[e.object_id]))


def get_filtered_preds(model_id: str, class_id: str, epsilon: float,
                       p_raw: ObservationSet, ruleset: RuleSet) -> frozenset:
    """Model's predictions of one class surviving the epsilon-budget rule."""
    siblings = sibling_index(p_raw)
    by_pair: dict = {}
    for e in p_raw.entries:
        by_pair.setdefault((e.model_id, e.class_id), []).append(e)
    return _filtered(model_id, class_id, epsilon, by_pair, siblings, ruleset)


def calc_incon(entries: Iterable[Observation],
               ic: IntegrityConstraintSet,
               normalizer_mode: str = "per_object",
               *,
               n_objects: int,
               directed_ground_rules: bool = False) -> float:
    """Inconsistency of a selection, measured on its distinct atoms."""
    atoms = {(e.class_id, e.object_id) for e in entries}
    return count_inc(atoms, ic, normalizer_mode,
                     n_objects=n_objects,
                     directed_ground_rules=directed_ground_rules)


def _pair_order(p_raw: ObservationSet, config: HsConfig) -> list:
    if config.pair_order is not None:
        order = [tuple(p) for p in config.pair_order]
        universe = {(f, c) for f in p_raw.models for c in p_raw.classes}
        for p in order:
            if p not in universe:
                raise InputError(f"pair {p!r} outside the model/class universe")
        if len(set(order)) != len(order):
            raise InputError("pair_order contains duplicates")
        return order
    order = [(f, c) for f in sorted(p_raw.models) for c in sorted(p_raw.classes)]
    if config.shuffle_seed is not None:
        random.Random(config.shuffle_seed).shuffle(order)
    return order


def heuristic_search(p_raw: ObservationSet,
                     config: HsConfig,
                     ruleset: RuleSet,
                     ic: IntegrityConstraintSet,
                     normalizer_mode: str = "per_object",
                     directed_ground_rules: bool = False) -> HsResult:
    for a, b in ic.pairs:
        if a not in p_raw.classes or b not in p_raw.classes:
            raise InputError(f"exclusion pair ({a!r}, {b!r}) outside the class universe")

    objects = sorted(p_raw.objects)
    classes = sorted(p_raw.classes)
    oi = {o: i for i, o in enumerate(objects)}
    ci = {c: i for i, c in enumerate(classes)}
    n_objects = len(objects)

    adj_off, adj_idx = kernels.pair_adjacency(
        len(classes), [(ci[a], ci[b]) for a, b in ic.pairs])
    pres = np.zeros((len(classes), n_objects), dtype=np.uint8)
    atoms = 0
    conflicts = 0

    siblings = sibling_index(p_raw)
    by_pair: dict = {}
    for e in p_raw.entries:
        by_pair.setdefault((e.model_id, e.class_id), []).append(e)

    def normalize(n_conf: int) -> float:
        raw = n_conf * (2 if directed_ground_rules else 1)
        if normalizer_mode == "per_object":
            return min(1.0, raw / n_objects) if n_objects else 0.0
        denom = n_objects * len(ic) * (2 if directed_ground_rules else 1)
        return raw / denom if denom else 0.0

    selected: set = set()
    steps = []
    for f, c in _pair_order(p_raw, config):
        best = None  # (atoms, eps, preds, conflicts)
        for eps in config.epsilon_set:
            preds = _filtered(f, c, eps, by_pair, siblings, ruleset)
            if not preds:
                continue
            add = [e for e in preds if e not in selected]
            add_c = np.array([ci[e.class_id] for e in add], dtype=np.int64)
            add_w = np.array([oi[e.object_id] for e in add], dtype=np.int64)
            cand_atoms, cand_conf = kernels.union_stats(
                pres, atoms, conflicts, add_c, add_w, adj_off, adj_idx)
            if cand_atoms <= atoms:
                continue
            if normalize(cand_conf) > config.delta + _EPS:
                continue
            if best is None or cand_atoms > best[0]:
                best = (cand_atoms, eps, preds, cand_conf)
        if best is not None:
            cand_atoms, eps, preds, cand_conf = best[0], best[1], best[2], best[3]
            add = [e for e in preds if e not in selected]
            add_c = np.array([ci[e.class_id] for e in add], dtype=np.int64)
            add_w = np.array([oi[e.object_id] for e in add], dtype=np.int64)
            kernels.commit_atoms(pres, add_c, add_w)
            selected.update(preds)
            atoms = cand_atoms
            conflicts = cand_conf
            chosen: Optional[float] = eps
        else:
            chosen = None
        steps.append(SelectionStep(f, c, chosen, atoms, normalize(conflicts)))

    return HsResult(frozenset(selected), SelectionTrace(tuple(steps)),
                    atoms, normalize(conflicts))
