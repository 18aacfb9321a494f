"""Command line interface: ``activebilevel {gen-db,train,solve-baseline,solve,evaluate}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .bilevel import DualMaxima, compute_big_m, solve_baseline
from .dataset import METHODS, DatasetParams, generate_database, load_database, save_database
from .dtree import load_model, save_model, train_model
from .network import load_case, scale_loads
from .pipeline import big_m_for, evaluate, run_method

log = logging.getLogger("activebilevel")


def _solution_doc(sol) -> dict:
    doc = {"status": sol.status.value, "wall_time": sol.wall_time, "lp_count": sol.lp_count}
    if sol.feasible:
        doc.update(c_s_star=sol.c_s_star, profit=sol.profit,
                   p_g=sol.dispatch.p_g.tolist(), alpha=sol.dispatch.alpha.tolist())
    return doc


def _with_load(case, path):
    if path is None:
        return case
    with open(path) as fh:
        return scale_loads(case, np.asarray(json.load(fh), dtype=float))


def cmd_gen_db(args) -> int:
    case = load_case(args.case)
    params = DatasetParams(x_m=args.xm, x_p=args.xp, grid=args.grid, delta=args.delta,
                           batch=args.batch, max_batches=args.max_batches)

    def progress(db):
        log.info("batch %d: %d samples, %d labels, unseen mass %.4f", db.batches, len(db),
                 len(db.census), db.unseen_mass)

    db = generate_database(args.method, case, params, seed=args.seed, progress=progress)
    save_database(db, args.out)
    print(f"{len(db)} samples, {len(db.census)} distinct labels, "
          f"{'complete' if db.complete else 'INCOMPLETE (batch cap reached)'} -> {args.out}")
    return 0


def cmd_train(args) -> int:
    db = load_database(args.db)
    model = train_model(db, budget=args.budget, total_load=not args.no_total_load, seed=args.seed)
    save_model(model, args.out)
    print(f"{model.method}: depth<={model.hyperparams.max_depth} "
          f"leaf>={model.hyperparams.min_samples_leaf} intervals={model.n_intervals} "
          f"train={model.train_accuracy:.4f} test={model.test_accuracy:.4f} -> {args.out}")
    return 0


def cmd_solve_baseline(args) -> int:
    case = _with_load(load_case(args.case), args.load)
    maxima = DualMaxima()
    for path in args.db:
        maxima = maxima.merge(load_database(path).dual_maxima)
    sol = solve_baseline(case, compute_big_m(maxima, case), args.time_limit)
    doc = _solution_doc(sol)
    doc["big_m_flags"] = sol.info.get("big_m_flags", [])
    print(json.dumps(doc, indent=1))
    return 0 if sol.feasible else 1


def cmd_solve(args) -> int:
    case = _with_load(load_case(args.case), args.load)
    sol = run_method(case, load_model(args.model), args.time_limit, parent=args.parent)
    print(json.dumps(_solution_doc(sol), indent=1))
    return 0 if sol.feasible else 1


def cmd_evaluate(args) -> int:
    case = load_case(args.case)
    models = {}
    for path in args.models:
        m = load_model(path)
        models[m.method] = m
    modes = (False, True) if args.parent == "both" else ((args.parent == "on"),)
    report = evaluate(case, models, args.scenarios, big_m_for(case, models), args.time_limit,
                      seed=args.seed, x_m=args.xm, x_p=args.xp, parent_modes=modes,
                      log_path=args.log)
    with open(args.out, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1)
    print(report.table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="activebilevel", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-db", help="sample loads and record active-set labels")
    g.add_argument("--case", required=True, help="case JSON file or bundled name")
    g.add_argument("--method", required=True, choices=METHODS)
    g.add_argument("--xm", type=float, default=0.5)
    g.add_argument("--xp", type=float, default=0.5)
    g.add_argument("--grid", type=int, default=10)
    g.add_argument("--delta", type=float, default=0.05)
    g.add_argument("--batch", type=int, default=200)
    g.add_argument("--max-batches", type=int, default=500)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_db)

    t = sub.add_parser("train", help="train the decision tree(s) for a database")
    t.add_argument("--db", required=True)
    t.add_argument("--budget", type=int, default=20)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--no-total-load", action="store_true")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("solve-baseline", help="solve the big-M MILP")
    b.add_argument("--case", required=True)
    b.add_argument("--db", required=True, action="append", help="database(s) holding dual maxima")
    b.add_argument("--load", help="JSON array of per-bus loads (default: case loads)")
    b.add_argument("--time-limit", type=float, default=300.0)
    b.set_defaults(func=cmd_solve_baseline)

    s = sub.add_parser("solve", help="solve through a trained model")
    s.add_argument("--case", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--load", help="JSON array of per-bus loads (default: case loads)")
    s.add_argument("--parent", action="store_true")
    s.add_argument("--time-limit", type=float, default=300.0)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("evaluate", help="compare methods with the baseline on random loads")
    e.add_argument("--case", required=True)
    e.add_argument("--models", required=True, nargs="+")
    e.add_argument("--scenarios", type=int, default=1000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--time-limit", type=float, default=300.0)
    e.add_argument("--xm", type=float, default=0.5)
    e.add_argument("--xp", type=float, default=0.5)
    e.add_argument("--parent", choices=("off", "on", "both"), default="off")
    e.add_argument("--log", help="per-scenario JSON-lines log")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
