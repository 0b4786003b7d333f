"""Command-line interface.

Subcommands cover the full workflow: ``gen`` (synthetic scenarios),
``learn`` (error-detection rules), ``abduce`` (fuse one dataset with either
solver), ``sweep`` (grid evaluation to CSV), ``eval`` (score a label file),
and ``baseline`` (reference methods).

Exit codes: 0 success, 1 invalid input or usage, 2 the exact solver proved
the instance infeasible.
"""

import argparse
import json
import os
import sys

from . import baselines, evaluation, solver_hs, solver_ip, synthgen, tiebreak
from .deduction import default_domain, load_domain_config
from .edr import DEFAULT_EPSILON_GRID, RuleSet, apply_rules, learn_ruleset
from .model_io import (InputError, coverage_report, load_dataset,
                       observations_from_dataset)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2

DEFAULT_GRID = "0.01,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"


class _Parser(argparse.ArgumentParser):
    """argparse normally exits with code 2 on usage errors; keep 2 reserved
    for proven infeasibility and report usage problems as input errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def _parse_grid(text: str, name: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise InputError(f"bad {name} grid {text!r}: {exc}") from exc
    if not vals:
        raise InputError(f"{name} grid is empty")
    for v in vals:
        if not (0.0 <= v <= 1.0):
            raise InputError(f"{name} value out of [0, 1]: {v}")
    return vals


def _domain_for(args, classes):
    path = getattr(args, "domain_config", None) or os.environ.get("ABFUSE_DOMAIN_CONFIG")
    if path:
        return load_domain_config(path)
    return default_domain(classes)


def _load_obs(args):
    ds = load_dataset(args.manifest)
    obs = observations_from_dataset(ds, primary_iou=args.iou)
    report = coverage_report(obs)
    if report.uncovered:
        print(f"note: {report.n_uncovered} ground-truth objects have no "
              f"matched prediction", file=sys.stderr)
    return ds, obs


def _write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _metrics_dict(m: evaluation.Metrics, status: str = "ok") -> dict:
    return {
        "precision": m.precision, "recall": m.recall, "f1": m.f1,
        "accuracy": m.accuracy, "inconsistency": m.inconsistency,
        "runtime_per_object": m.runtime_per_object,
        "n_objects": m.n_objects, "status": status,
    }


def _write_labels(path: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    if bool(args.preset) == bool(args.scenario):
        raise InputError("exactly one of --preset / --scenario is required")
    if args.preset:
        scenario = synthgen.preset(args.preset, n_models=args.models,
                                   n_train=args.n_train, n_test=args.n_test,
                                   seed=args.seed if args.seed is not None else 0)
    else:
        scenario = synthgen.load_scenario(args.scenario)
        if args.seed is not None:
            from dataclasses import replace
            scenario = replace(scenario, seed=args.seed)
    data = synthgen.generate(scenario)
    train_manifest, test_manifest = synthgen.write_dataset(data, args.out)
    print(train_manifest)
    print(test_manifest)
    return EXIT_OK


def cmd_learn(args) -> int:
    ds, obs = _load_obs(args)
    grid = _parse_grid(args.epsilon_grid, "epsilon")
    ruleset = learn_ruleset(obs, ds.labels(), epsilon_grid=grid)
    ruleset.save(args.out)
    print(f"wrote {len(ruleset.rules)} rules over {len(grid)} epsilon values to {args.out}")
    return EXIT_OK


def cmd_abduce(args) -> int:
    ds, obs = _load_obs(args)
    domain = _domain_for(args, ds.classes)
    ruleset = RuleSet.load(args.rules)
    os.makedirs(args.out, exist_ok=True)
    tb = args.tie_break == "on"

    if args.solver == "ip":
        if args.epsilon is None:
            raise InputError("--epsilon is required with --solver ip")
        filtered, _ = apply_rules(obs, ruleset, args.epsilon)
        instance = solver_ip.build_instance(
            filtered, domain.ic, args.delta,
            domain.normalizer_mode, domain.directed_ground_rules)
        sol = solver_ip.solve(instance)
        if sol.status != solver_ip.STATUS_OPTIMAL:
            print("infeasible: no acceptance set satisfies coverage within "
                  f"the delta budget ({instance.delta_budget})", file=sys.stderr)
            return EXIT_INFEASIBLE
        atoms = sol.assigned_atoms()
        source = filtered
    else:
        eps_set = _parse_grid(args.epsilon_set, "epsilon") if args.epsilon_set \
            else ruleset.epsilon_grid
        config = solver_hs.HsConfig(args.delta, eps_set)
        res = solver_hs.heuristic_search(obs, config, ruleset, domain.ic,
                                         domain.normalizer_mode,
                                         domain.directed_ground_rules)
        res.trace.write(os.path.join(args.out, "trace.jsonl"))
        atoms = res.atoms()
        source = obs

    if tb:
        if args.solver == "ip":
            cands = tiebreak.candidates_from_atoms(atoms, source)
        else:
            cands = tiebreak.candidates_from_entries(res.selected)
        resolved = tiebreak.apply_tiebreaker(cands)
        rows = [{"object_id": o, "class_id": cls, "model_id": model,
                 "confidence": conf}
                for o, (cls, model, conf) in sorted(resolved.items())]
        atoms = evaluation.labels_to_atoms(tiebreak.labels_only(resolved))
    else:
        rows = [{"object_id": w, "class_id": c} for c, w in sorted(
            atoms, key=lambda a: (a[1], a[0]))]
    _write_labels(os.path.join(args.out, "labels.jsonl"), rows)

    metrics = evaluation.score(atoms, ds.labels(), domain=domain,
                               n_objects=len(obs.objects))
    _write_json(os.path.join(args.out, "metrics.json"), _metrics_dict(metrics))
    print(f"{args.solver}{'+tb' if tb else ''}: f1={metrics.f1:.4f} "
          f"precision={metrics.precision:.4f} recall={metrics.recall:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    ds, obs = _load_obs(args)
    domain = _domain_for(args, ds.classes)
    ruleset = RuleSet.load(args.rules)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    dataset = evaluation.SweepDataset(obs, ds.labels(), ruleset, domain,
                                      name=os.path.basename(args.manifest))
    result = evaluation.run_sweep(
        dataset, methods,
        delta_grid=_parse_grid(args.delta_grid, "delta"),
        epsilon_grid=_parse_grid(args.epsilon_grid, "epsilon"),
        repeats=args.repeats, seed=args.seed, jobs=args.jobs,
        timing=not args.no_timing)
    result.to_csv(args.out)
    result.write_manifest(args.out + ".manifest.json")
    print(f"wrote {len(result.cells)} rows to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ds, obs = _load_obs(args)
    domain = _domain_for(args, ds.classes)
    atoms = set()
    try:
        with open(args.labels, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                atoms.add((str(rec["class_id"]), str(rec["object_id"])))
    except OSError as exc:
        raise InputError(f"cannot open {args.labels}: {exc}") from exc
    except (KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"{args.labels}:{lineno}: bad label record: {exc}") from exc
    metrics = evaluation.score(atoms, ds.labels(), domain=domain,
                               n_objects=len(obs.objects))
    _write_json(args.out, _metrics_dict(metrics))
    print(f"f1={metrics.f1:.4f} precision={metrics.precision:.4f} "
          f"recall={metrics.recall:.4f} accuracy={metrics.accuracy:.4f}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    ds, obs = _load_obs(args)
    domain = _domain_for(args, ds.classes)
    os.makedirs(args.out, exist_ok=True)
    gt = ds.labels()
    if args.method == "mv":
        labels = baselines.majority_vote(obs)
        metrics = evaluation.score(evaluation.labels_to_atoms(labels), gt,
                                   domain=domain, n_objects=len(obs.objects))
        _write_labels(os.path.join(args.out, "labels.jsonl"),
                      [{"object_id": o, "class_id": c}
                       for o, c in sorted(labels.items())])
        extra = {}
    else:
        per_model = evaluation.per_model_metrics(obs, gt, domain)
        if args.method == "best":
            winner = baselines.best_individual(per_model)
            metrics = per_model[winner]
            extra = {"model_id": winner}
        else:
            metrics = baselines.average_models(per_model)
            extra = {}
    payload = _metrics_dict(metrics)
    payload.update(extra)
    _write_json(os.path.join(args.out, "metrics.json"), payload)
    print(f"{args.method}: f1={metrics.f1:.4f} accuracy={metrics.accuracy:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    p = _Parser(prog="abfuse",
                description="Fuse predictions from multiple perception models.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--preset", help=f"scenario template, families: "
                                    f"{', '.join(synthgen.PRESET_FAMILIES)} (e.g. UM_1)")
    g.add_argument("--scenario", help="scenario config JSON file")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--models", type=int, default=6)
    g.add_argument("--n-train", type=int, default=1000)
    g.add_argument("--n-test", type=int, default=2000)
    g.set_defaults(fn=cmd_gen)

    def dataset_args(sp, rules=False):
        sp.add_argument("--manifest", required=True, help="dataset manifest JSON")
        sp.add_argument("--iou", type=float, default=0.90,
                        help="primary matching overlap threshold")
        sp.add_argument("--domain-config", default=None,
                        help="class/exclusion config JSON (default: "
                             "$ABFUSE_DOMAIN_CONFIG if set, else all-pairs)")
        if rules:
            sp.add_argument("--rules", required=True, help="learned rules JSONL")

    l = sub.add_parser("learn", help="learn error-detection rules")
    dataset_args(l)
    l.add_argument("--epsilon-grid", default=DEFAULT_GRID)
    l.add_argument("--out", required=True, help="output rules JSONL")
    l.set_defaults(fn=cmd_learn)

    a = sub.add_parser("abduce", help="fuse one dataset")
    dataset_args(a, rules=True)
    a.add_argument("--solver", choices=("ip", "hs"), required=True)
    a.add_argument("--delta", type=float, required=True,
                   help="inconsistency budget in [0, 1]")
    a.add_argument("--epsilon", type=float, default=None,
                   help="filter strength for --solver ip")
    a.add_argument("--epsilon-set", default=None,
                   help="comma-separated strengths for --solver hs "
                        "(default: the rules' grid)")
    a.add_argument("--tie-break", choices=("on", "off"), default="on")
    a.add_argument("--out", required=True, help="output directory")
    a.set_defaults(fn=cmd_abduce)

    s = sub.add_parser("sweep", help="evaluate methods over a (delta, epsilon) grid")
    dataset_args(s, rules=True)
    s.add_argument("--methods", default=",".join(evaluation.METHODS))
    s.add_argument("--delta-grid", default=DEFAULT_GRID)
    s.add_argument("--epsilon-grid", default=DEFAULT_GRID)
    s.add_argument("--repeats", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--no-timing", action="store_true",
                   help="zero the runtime column for reproducible bytes")
    s.add_argument("--out", required=True, help="output CSV path")
    s.set_defaults(fn=cmd_sweep)

    e = sub.add_parser("eval", help="score a labels.jsonl file")
    dataset_args(e)
    e.add_argument("--labels", required=True)
    e.add_argument("--out", required=True, help="output metrics JSON")
    e.set_defaults(fn=cmd_eval)

    b = sub.add_parser("baseline", help="run a reference method")
    dataset_args(b)
    b.add_argument("--method", choices=("mv", "best", "avg"), required=True)
    b.add_argument("--out", required=True, help="output directory")
    b.set_defaults(fn=cmd_baseline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
