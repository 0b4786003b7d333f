"""Compare the compiled and plain numeric backends.

Both solvers route their hot loops through ``abfuse.kernels``, which picks a
numba-compiled or plain implementation per call from the ``ABFUSE_NO_NUMBA``
environment variable.  This script times the exact solver and the greedy
search on synthetic datasets of growing size under both backends and prints
the speedups.

    python3 benchmarks/compare_backends.py --sizes 500,2000,8000 --repeats 5
"""

import argparse
import os
import statistics
import time

import numpy as np

from abfuse import solver_ip, synthgen
from abfuse.backend import HAVE_NUMBA, backend_name
from abfuse.deduction import default_domain
from abfuse.edr import apply_rules, learn_ruleset
from abfuse.kernels import count_conflicts
from abfuse.solver_hs import HsConfig, heuristic_search

BACKENDS = (("numba", ""), ("numpy", "1"))


def _timeit(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.mean(times)


def bench_solvers(sizes, repeats, seed, delta, epsilon):
    train = synthgen.generate(
        synthgen.preset("MM_1", n_train=1000, n_test=2, seed=seed))
    ruleset = learn_ruleset(train.train, train.train_labels, (epsilon,))

    print(f"{'n_objects':>9}  {'solver':>6}  {'numba best':>11}  "
          f"{'numpy best':>11}  {'speedup':>7}")
    for size in sizes:
        data = synthgen.generate(
            synthgen.preset("MM_1", n_train=2, n_test=size, seed=seed + 1))
        domain = default_domain(data.test.classes)
        filtered, _ = apply_rules(data.test, ruleset, epsilon)
        instance = solver_ip.build_instance(filtered, domain.ic, delta,
                                            domain.normalizer_mode,
                                            domain.directed_ground_rules)
        runs = {
            "ip": lambda: solver_ip.solve(instance),
            "hs": lambda: heuristic_search(data.test, HsConfig(delta, (epsilon,)),
                                           ruleset, domain.ic,
                                           domain.normalizer_mode,
                                           domain.directed_ground_rules),
        }
        for name, fn in runs.items():
            best = {}
            for label, flag in BACKENDS:
                os.environ["ABFUSE_NO_NUMBA"] = flag
                fn()  # warm the JIT / caches outside the timed region
                best[label], _ = _timeit(fn, repeats)
            print(f"{size:>9}  {name:>6}  {best['numba'] * 1e3:>9.2f}ms  "
                  f"{best['numpy'] * 1e3:>9.2f}ms  "
                  f"{best['numpy'] / best['numba']:>6.2f}x")


def bench_conflict_kernel(repeats, seed):
    rng = np.random.default_rng(seed)
    pres = (rng.random((40, 200_000)) < 0.05).astype(np.uint8)
    pairs = np.array([(a, b) for a in range(40) for b in range(a + 1, 40)],
                     np.int64)
    ic_a, ic_b = pairs[:, 0].copy(), pairs[:, 1].copy()
    print(f"\nconflict count over {pres.shape} x {len(pairs)} pairs")
    best = {}
    for label, flag in BACKENDS:
        os.environ["ABFUSE_NO_NUMBA"] = flag
        count_conflicts(pres, ic_a, ic_b)
        best[label], _ = _timeit(lambda: count_conflicts(pres, ic_a, ic_b),
                                 repeats)
        print(f"  {label:>5}: {best[label] * 1e3:8.2f}ms")
    print(f"  speedup: {best['numpy'] / best['numba']:.2f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="500,2000,8000",
                    help="comma-separated test-set sizes")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--delta", type=float, default=0.5)
    ap.add_argument("--epsilon", type=float, default=0.1)
    args = ap.parse_args()

    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy backend is available")
        return
    os.environ.pop("ABFUSE_NO_NUMBA", None)
    print(f"default backend: {backend_name()}")
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    bench_solvers(sizes, args.repeats, args.seed, args.delta, args.epsilon)
    bench_conflict_kernel(args.repeats, args.seed)


if __name__ == "__main__":
    main()
