"""Exact acceptance-set optimization.

The decision variables are elimination bits, one per (model, class) pair.
Keeping a pair accepts all of that model's surviving predictions for that
class.  An object gets an assignment atom for class ``c`` exactly when some
kept pair predicts ``c`` for it.  The solver maximizes the number of
assignment atoms subject to (a) every object that any kept-or-undecided pair
could cover must end up covered, and (b) at most ``delta_budget`` ground
rules of the mutual-exclusion constraints may be violated.  Among optimal
solutions the one with fewer eliminations is preferred, then the one whose
eliminated pairs come lexicographically first in (model, class) order.

``solve`` runs an in-house branch & bound (see :mod:`abfuse.kernels`);
``brute_force_optimal`` is an independently coded exhaustive check for tiny
instances, and ``audit_solution`` re-verifies any solution against the
constraint system built from first principles.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from . import kernels
from .deduction import IntegrityConstraintSet, violation_budget
from .model_io import InputError, ObservationSet

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"


@dataclass(frozen=True, eq=False)
class IpInstance:
    objects: Tuple[str, ...]
    models: Tuple[str, ...]
    classes: Tuple[str, ...]
    pred: np.ndarray            # uint8 (F, C, N)
    coverable: np.ndarray       # uint8 (N,)
    ic: IntegrityConstraintSet
    delta: float
    delta_budget: int
    normalizer_mode: str
    directed_ground_rules: bool

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.pred.shape


@dataclass
class IpSolution:
    status: str
    objective: int
    elim: Dict[Tuple[str, str], int] = field(default_factory=dict)
    assign: Dict[Tuple[str, str], int] = field(default_factory=dict)
    con: Dict[Tuple[str, Tuple[str, str]], int] = field(default_factory=dict)
    nodes: int = 0

    def accepted_pairs(self) -> frozenset:
        return frozenset(k for k, v in self.elim.items() if v == 0)

    def assigned_atoms(self) -> frozenset:
        return frozenset(k for k, v in self.assign.items() if v == 1)

    def n_violations(self) -> int:
        return sum(self.con.values())


def build_instance(obs: ObservationSet,
                   ic: IntegrityConstraintSet,
                   delta: float,
                   normalizer_mode: str = "per_object",
                   directed_ground_rules: bool = False) -> IpInstance:
    """Pack an observation set into dense arrays plus the integer budget."""
    if not (0.0 <= delta <= 1.0):
        raise InputError(f"delta must be in [0, 1]: {delta!r}")
    for a, b in ic.pairs:
        if a not in obs.classes or b not in obs.classes:
            raise InputError(f"exclusion pair ({a!r}, {b!r}) outside the class universe")

    objects = tuple(sorted(obs.objects))
    models = tuple(sorted(obs.models))
    classes = tuple(sorted(obs.classes))
    oi = {o: i for i, o in enumerate(objects)}
    mi = {m: i for i, m in enumerate(models)}
    ci = {c: i for i, c in enumerate(classes)}

    pred = np.zeros((len(models), len(classes), len(objects)), dtype=np.uint8)
    for e in obs.entries:
        pred[mi[e.model_id], ci[e.class_id], oi[e.object_id]] = 1
    coverable = (pred.any(axis=0).any(axis=0)).astype(np.uint8) if pred.size \
        else np.zeros(len(objects), dtype=np.uint8)

    budget = violation_budget(delta, len(objects), ic,
                              normalizer_mode, directed_ground_rules)
    return IpInstance(objects, models, classes, pred, coverable, ic,
                      delta, budget, normalizer_mode, directed_ground_rules)


def _ic_index_pairs(inst: IpInstance) -> list:
    ci = {c: i for i, c in enumerate(inst.classes)}
    return [(ci[a], ci[b]) for a, b in inst.ic.pairs]


def _solution_from_elim(inst: IpInstance, elim_fc: np.ndarray,
                        status: str, nodes: int) -> IpSolution:
    """Materialize the full variable assignment implied by elimination bits."""
    F, C, N = inst.shape
    accepted = (elim_fc == 0)[:, :, None]
    covered = np.logical_and(inst.pred.astype(bool), accepted).any(axis=0)  # (C, N)

    elim = {}
    for f in range(F):
        for c in range(C):
            elim[(inst.models[f], inst.classes[c])] = int(elim_fc[f, c])
    assign = {}
    for c in range(C):
        for w in range(N):
            assign[(inst.classes[c], inst.objects[w])] = int(covered[c, w])
    con = {}
    for a, b in inst.ic.pairs:
        ca = inst.classes.index(a)
        cb = inst.classes.index(b)
        both = np.logical_and(covered[ca], covered[cb])
        for w in range(N):
            con[(inst.objects[w], (a, b))] = int(both[w])
    objective = int(covered.sum())
    return IpSolution(status, objective, elim, assign, con, nodes)


def solve(instance: IpInstance) -> IpSolution:
    """Optimal solution, or a solution with infeasible status when the
    coverage and budget constraints cannot be met simultaneously."""
    F, C, N = instance.shape

    # branch only on pairs with support; empty pairs stay kept, which is
    # optimal for the fewer-eliminations preference
    sup_fc = instance.pred.sum(axis=2)
    branch_vars = [(f, c) for f in range(F) for c in range(C) if sup_fc[f, c] > 0]
    n_vars = len(branch_vars)

    var_cls = np.array([c for _, c in branch_vars], dtype=np.int64) \
        if n_vars else np.zeros(0, dtype=np.int64)
    obj_lists = [np.flatnonzero(instance.pred[f, c]) for f, c in branch_vars]
    var_obj_off = np.zeros(n_vars + 1, dtype=np.int64)
    for i, lst in enumerate(obj_lists):
        var_obj_off[i + 1] = var_obj_off[i] + len(lst)
    var_obj_idx = np.concatenate(obj_lists).astype(np.int64) if obj_lists \
        else np.zeros(0, dtype=np.int64)

    order = np.array(
        sorted(range(n_vars), key=lambda v: (-len(obj_lists[v]), v)),
        dtype=np.int64) if n_vars else np.zeros(0, dtype=np.int64)

    sup = instance.pred.sum(axis=0, dtype=np.int64)  # (C, N) supporter counts
    adj_off, adj_idx = kernels.pair_adjacency(C, _ic_index_pairs(instance))

    found, best_obj, _, best_mask, nodes = kernels.bnb_search(
        var_cls, var_obj_off, var_obj_idx, order, sup,
        adj_off, adj_idx, instance.coverable.astype(np.int64),
        instance.delta_budget, instance.ic.max_degree())

    if not found:
        return IpSolution(STATUS_INFEASIBLE, -1, nodes=nodes)

    elim_fc = np.zeros((F, C), dtype=np.int8)
    for i, (f, c) in enumerate(branch_vars):
        elim_fc[f, c] = best_mask[i]
    sol = _solution_from_elim(instance, elim_fc, STATUS_OPTIMAL, nodes)
    if sol.objective != best_obj:
        raise AssertionError(
            f"search bookkeeping out of sync: {sol.objective} != {best_obj}")
    return sol


def brute_force_optimal(instance: IpInstance,
                        max_pairs: int = 12) -> IpSolution:
    """Exhaustive reference solver for tiny instances.

    Enumerates every elimination pattern over all (model, class) pairs and
    evaluates it with plain numpy, independent of the search kernels.  Ties
    prefer fewer eliminations, then the lexicographically smallest set of
    eliminated pairs in (model, class) order.
    """
    F, C, N = instance.shape
    n = F * C
    if n > max_pairs:
        raise InputError(f"brute force limited to {max_pairs} pairs, got {n}")

    pred = instance.pred.astype(bool)
    coverable = instance.coverable.astype(bool)
    pairs_idx = _ic_index_pairs(instance)

    best = None  # (objective, n_elim, bits_tuple)
    for mask in range(1 << n):
        bits = [(mask >> k) & 1 for k in range(n)]
        elim_fc = np.array(bits, dtype=bool).reshape(F, C)
        covered = np.logical_and(pred, ~elim_fc[:, :, None]).any(axis=0)
        if not covered.any(axis=0)[coverable].all():
            continue
        viol = sum(int(np.logical_and(covered[a], covered[b]).sum())
                   for a, b in pairs_idx)
        if viol > instance.delta_budget:
            continue
        elim_idx = tuple(k for k in range(n) if bits[k])
        key = (-int(covered.sum()), len(elim_idx), elim_idx)
        if best is None or key < best:
            best = key
    if best is None:
        return IpSolution(STATUS_INFEASIBLE, -1)
    elim_fc = np.zeros(n, dtype=np.int8)
    elim_fc[list(best[2])] = 1
    return _solution_from_elim(instance, elim_fc.reshape(F, C), STATUS_OPTIMAL, 0)


def audit_solution(instance: IpInstance, sol: IpSolution) -> list:
    """Re-check a solution against the constraint system.

    Uses only the solution's variable dictionaries plus the instance data;
    returns a list of violation descriptions (empty means clean).  The
    consideration variables are reconstructed canonically: a prediction is
    considered exactly when its (model, class) pair is kept.
    """
    problems = []
    if sol.status != STATUS_OPTIMAL:
        return ["solution is not optimal-status; nothing to audit"]

    for dic, name in ((sol.elim, "elim"), (sol.assign, "assign"), (sol.con, "con")):
        for k, v in dic.items():
            if v not in (0, 1):
                problems.append(f"{name}[{k}] = {v} is not binary")

    oi = {o: i for i, o in enumerate(instance.objects)}
    mi = {m: i for i, m in enumerate(instance.models)}
    ci = {c: i for i, c in enumerate(instance.classes)}
    pred = instance.pred

    for f in instance.models:
        for c in instance.classes:
            if (f, c) not in sol.elim:
                problems.append(f"missing elim[({f!r}, {c!r})]")
    for c in instance.classes:
        for w in instance.objects:
            if (c, w) not in sol.assign:
                problems.append(f"missing assign[({c!r}, {w!r})]")
    if problems:
        return problems

    # consideration: x[w, f, c] = pred * (1 - elim); bounded by acceptance
    x = {}
    for f in instance.models:
        for c in instance.classes:
            e = sol.elim[(f, c)]
            for w in instance.objects:
                p = int(pred[mi[f], ci[c], oi[w]])
                xv = p * (1 - e)
                x[(w, f, c)] = xv
                if xv > 1 - e:
                    problems.append(f"x[{w},{f},{c}]={xv} exceeds kept bound 1-elim={1 - e}")

    for c in instance.classes:
        for w in instance.objects:
            a = sol.assign[(c, w)]
            support = [x[(w, f, c)] for f in instance.models
                       if pred[mi[f], ci[c], oi[w]]]
            if support and a < max(support):
                problems.append(f"assign[({c!r},{w!r})]={a} below a considered prediction")
            if a > sum(support):
                problems.append(f"assign[({c!r},{w!r})]={a} exceeds its support {sum(support)}")

    total_con = 0
    for a_cls, b_cls in instance.ic.pairs:
        for w in instance.objects:
            key = (w, (a_cls, b_cls))
            if key not in sol.con:
                problems.append(f"missing con[{key}]")
                continue
            cv = sol.con[key]
            lhs = sol.assign[(a_cls, w)] + sol.assign[(b_cls, w)] - 1
            if cv < lhs:
                problems.append(f"con[{key}]={cv} below assign overlap {lhs}")
            total_con += cv

    for w in instance.objects:
        if instance.coverable[oi[w]]:
            if sum(sol.assign[(c, w)] for c in instance.classes) < 1:
                problems.append(f"coverable object {w!r} has no assignment")

    if total_con > instance.delta_budget:
        problems.append(f"violation count {total_con} exceeds budget {instance.delta_budget}")

    if sol.objective != sum(sol.assign.values()):
        problems.append(f"objective {sol.objective} != assigned atom count {sum(sol.assign.values())}")
    return problems


def dump_instance(instance: IpInstance) -> str:
    """Human-readable instance dump for debugging and audits."""
    return json.dumps({
        "objects": list(instance.objects),
        "models": list(instance.models),
        "classes": list(instance.classes),
        "predictions": sorted(
            [instance.models[f], instance.classes[c], instance.objects[w]]
            for f, c, w in zip(*np.nonzero(instance.pred))),
        "exclusion_pairs": [list(p) for p in instance.ic.pairs],
        "delta": instance.delta,
        "delta_budget": instance.delta_budget,
        "normalizer_mode": instance.normalizer_mode,
        "directed_ground_rules": instance.directed_ground_rules,
    }, indent=2)


def dump_solution(sol: IpSolution) -> str:
    return json.dumps({
        "status": sol.status,
        "objective": sol.objective,
        "eliminated": sorted(list(k) for k, v in sol.elim.items() if v),
        "assigned": sorted(list(k) for k, v in sol.assign.items() if v),
        "violated": sorted([w, list(p)] for (w, p), v in sol.con.items() if v),
        "nodes": sol.nodes,
    }, indent=2)
