"""Shared fixtures and the frozen random-instance generator.

The acceptance tests exercise a fixed family of small fusion instances
(seeds 1000-1219).  Any change to `random_instance` silently changes that
family, so treat its draw order as frozen.
"""

import itertools
import random

import numpy as np
import pytest

from abfuse import solver_ip
from abfuse.deduction import IntegrityConstraintSet
from abfuse.edr import RuleSet
from abfuse.model_io import Observation, ObservationSet

DELTA_GRID = (0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
SHARED_SEEDS = tuple(range(1000, 1220))


def obs_of(rows, **universes):
    """Build an ObservationSet from (object, model, class, confidence) rows."""
    return ObservationSet.from_entries([Observation(*r) for r in rows], **universes)


def empty_rules(grid=(0.5,)):
    """A RuleSet whose every rule is empty: filtering is the identity."""
    return RuleSet(tuple(grid))


def random_instance(seed):
    """One small random fusion problem; the draw order is frozen (see module
    docstring).

    Returns (obs, ic, delta, normalizer_mode, directed).
    """
    rng = random.Random(seed)
    n_models, n_classes, n_objects = (rng.randint(1, 3), rng.randint(2, 3),
                                      rng.randint(2, 8))
    models = [f"f{i}" for i in range(n_models)]
    classes = list(("A", "B", "C")[:n_classes])
    objs = [f"o{i}" for i in range(n_objects)]
    entries = [Observation(w, f, rng.choice(classes), round(rng.random(), 3))
               for f in models for w in objs if rng.random() < 0.75]
    obs = ObservationSet.from_entries(entries, objects=objs, models=models,
                                      classes=classes)
    all_pairs = list(itertools.combinations(classes, 2))
    ic = IntegrityConstraintSet(
        tuple(rng.sample(all_pairs, rng.randint(0, len(all_pairs)))))
    delta = rng.choice(DELTA_GRID)
    mode = rng.choice(("per_object", "per_ground_rule"))
    directed = rng.random() < 0.3
    return obs, ic, delta, mode, directed


@pytest.fixture(scope="session")
def shared_instances():
    """The frozen instance family used by the exactness/audit/feasibility
    acceptance checks."""
    return [random_instance(seed) for seed in SHARED_SEEDS]


@pytest.fixture(scope="session")
def warm_kernels():
    """Trigger JIT compilation once so timed tests measure steady state."""
    obs = obs_of([("o0", "f0", "A", 0.9), ("o0", "f1", "B", 0.8),
                  ("o1", "f0", "B", 0.7)])
    ic = IntegrityConstraintSet((("A", "B"),))
    inst = solver_ip.build_instance(obs, ic, 0.5)
    solver_ip.solve(inst)
    return True


@pytest.fixture
def rng():
    return np.random.default_rng(0)
