"""Evaluation of the learned methods against the big-M baseline.

Every scenario draws a feasible load, solves the baseline MILP once and then
each method on the same load.  Per-scenario records stream to a JSON-lines
log; the report is computed from those records only, so rebuilding it from
the log gives the same numbers.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .bilevel import BigM, BilevelSolution, DualMaxima, build_baseline, compute_big_m, solve_baseline
from .dataset import sample_load
from .dcopf import InfeasibleDispatch, solve_dcopf
from .dtree import TrainedModel, predict_sets, predict_with_parent
from .lp_core import Status
from .network import NetworkCase, scale_loads
from .reduced import solve_with_sets

OPT_RTOL = 1e-6


def dedupe(sets: Sequence) -> list:
    seen, out = set(), []
    for s in sets:
        if s.mask not in seen:
            seen.add(s.mask)
            out.append(s)
    return out


def run_method(case: NetworkCase, model: TrainedModel, time_limit: Optional[float] = None,
               parent: bool = False) -> BilevelSolution:
    """Predict candidate sets for ``case.loads`` and solve their reduced LPs.

    Repeated sets are solved once.  ``wall_time`` covers prediction and solves.
    """
    start = time.perf_counter()
    if (model.n_gen, model.n_line, model.n_bus) != (case.n_gen, case.n_line, case.n_bus):
        raise ValueError("model was trained on a case with different dimensions")
    sets = predict_with_parent(model, case.loads) if parent else predict_sets(model, case.loads)
    sets = dedupe(sets)
    left = None if time_limit is None else max(0.0, time_limit - (time.perf_counter() - start))
    sol = solve_with_sets(case, sets, left)
    sol.wall_time = time.perf_counter() - start
    return sol


def feasible_scenario(case: NetworkCase, x_m: float, x_p: float, rng: np.random.Generator,
                      max_tries: int = 1000) -> NetworkCase:
    """Redraw until the market clears at honest bidding."""
    for _ in range(max_tries):
        scen = scale_loads(case, sample_load(case, x_m, x_p, rng))
        try:
            solve_dcopf(scen, case.strategic.cost)
        except InfeasibleDispatch:
            continue
        return scen
    raise InfeasibleDispatch(f"no feasible load in {max_tries} draws")


def classify(method: dict, baseline: dict) -> str:
    if baseline["status"] != Status.OPTIMAL.value:
        return "excluded"
    if method["status"] == Status.INFEASIBLE.value:
        return "inf"
    if method["status"] != Status.OPTIMAL.value:
        return "subopt"
    b = baseline["profit"]
    if method["profit"] >= b - OPT_RTOL * max(1.0, abs(b)):
        return "opt"
    return "subopt"


def _record(sol: BilevelSolution) -> dict:
    return {"status": sol.status.value,
            "profit": float(sol.profit) if sol.feasible else None,
            "c_s": float(sol.c_s_star) if sol.feasible else None,
            "time": sol.wall_time, "lp_count": int(sol.lp_count), "n_rows": int(sol.n_rows)}


def evaluate_scenario(case: NetworkCase, index: int, models: Mapping[str, TrainedModel],
                      big_m: BigM, time_limit: Optional[float], seed: int, x_m: float,
                      x_p: float, parent_modes: Sequence[bool] = (False,)) -> dict:
    rng = np.random.default_rng([seed, index])
    scen = feasible_scenario(case, x_m, x_p, rng)
    base = solve_baseline(scen, big_m, time_limit)
    rec = {"index": index, "load": [float(v) for v in scen.loads], "baseline": _record(base),
           "methods": {}}
    rec["baseline"]["nodes"] = int(base.info.get("nodes", 0))
    for name, model in models.items():
        for parent in parent_modes:
            key = name + ("+parent" if parent else "")
            m = _record(run_method(scen, model, time_limit, parent))
            m["outcome"] = classify(m, rec["baseline"])
            rec["methods"][key] = m
    return rec


@dataclass
class EvaluationReport:
    case: str
    seed: int
    n_scenarios: int
    baseline: dict
    methods: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"case": self.case, "seed": self.seed, "n_scenarios": self.n_scenarios,
                "baseline": self.baseline, "methods": self.methods}

    def table(self) -> str:
        head = ["Method", "Duration (s)", "#Bin", "#Cstr", "#LPs", "%Opt", "%Inf", "%Subopt",
                "Ratio mean", "Ratio median"]
        b = self.baseline
        rows = [["Baseline", f"{b['mean_time']:.4f}", str(b["n_binaries"]), str(b["n_rows"]), "-",
                 "-", "-", "-", "1.000", "1.000"]]
        for name, m in self.methods.items():
            rows.append([name, f"{m['mean_time']:.4f}", "0", str(m["n_rows"]),
                         f"{m['mean_lp_count']:.2f}", f"{m['pct_opt']:.1f}", f"{m['pct_inf']:.1f}",
                         f"{m['pct_subopt']:.1f}", f"{m['ratio_mean']:.3f}",
                         f"{m['ratio_median']:.3f}"])
        widths = [max(len(r[j]) for r in [head] + rows) for j in range(len(head))]
        fmt = lambda r: "  ".join(c.ljust(w) if j == 0 else c.rjust(w)
                                  for j, (c, w) in enumerate(zip(r, widths)))
        lines = [fmt(head), "  ".join("-" * w for w in widths)] + [fmt(r) for r in rows]
        lines.append(f"scenarios: {self.n_scenarios}  baseline timeouts: {b['timeouts']}  seed: {self.seed}")
        return "\n".join(lines)


def _pct(part: int, whole: int) -> float:
    return 100.0 * part / whole if whole else float("nan")


def aggregate(records: Sequence[dict], header: dict) -> EvaluationReport:
    records = sorted(records, key=lambda r: r["index"])
    n = len(records)
    b_times = np.array([r["baseline"]["time"] for r in records], dtype=float)
    timeouts = sum(r["baseline"]["status"] == Status.TIME_LIMIT.value for r in records)
    tractable = n - timeouts
    b_mean = float(b_times.mean()) if n else float("nan")
    b_median = float(np.median(b_times)) if n else float("nan")
    baseline = {"mean_time": b_mean, "median_time": b_median, "n_binaries": header["n_binaries"],
                "n_rows": header["n_rows"], "timeouts": int(timeouts),
                "mean_nodes": float(np.mean([r["baseline"]["nodes"] for r in records])) if n else 0.0}
    methods = {}
    names = list(records[0]["methods"]) if records else []
    for name in names:
        ms = [r["methods"][name] for r in records]
        times = np.array([m["time"] for m in ms], dtype=float)
        counts = {k: sum(m["outcome"] == k for m in ms) for k in ("opt", "inf", "subopt", "excluded")}
        mean_t = float(times.mean())
        median_t = float(np.median(times))
        methods[name] = {
            "mean_time": mean_t, "median_time": median_t,
            "mean_lp_count": float(np.mean([m["lp_count"] for m in ms])),
            "n_rows": int(ms[0]["n_rows"]),
            "pct_opt": _pct(counts["opt"], tractable), "pct_inf": _pct(counts["inf"], tractable),
            "pct_subopt": _pct(counts["subopt"], tractable),
            "share_opt": _pct(counts["opt"], n), "share_inf": _pct(counts["inf"], n),
            "share_subopt": _pct(counts["subopt"], n), "share_timeout": _pct(counts["excluded"], n),
            "ratio_mean": mean_t / b_mean if b_mean > 0 else float("nan"),
            "ratio_median": median_t / b_median if b_median > 0 else float("nan"),
        }
    return EvaluationReport(case=header["case"], seed=header["seed"], n_scenarios=n,
                            baseline=baseline, methods=methods)


def evaluate(case: NetworkCase, models: Mapping[str, TrainedModel], n_scenarios: int,
             big_m: BigM, time_limit: Optional[float] = 300.0, seed: int = 0, x_m: float = 0.5,
             x_p: float = 0.5, parent_modes: Sequence[bool] = (False,),
             log_path=None, progress=None) -> EvaluationReport:
    """Baseline plus every model on ``n_scenarios`` feasible loads.

    Scenario ``i`` uses the generator seeded with ``(seed, i)``, so records
    do not depend on evaluation order.
    """
    milp = build_baseline(case, big_m)
    header = {"kind": "header", "case": case.name, "seed": seed, "n_scenarios": n_scenarios,
              "time_limit": time_limit, "x_m": x_m, "x_p": x_p,
              "big_m": {"m_primal": big_m.m_primal, "m_dual": big_m.m_dual},
              "n_binaries": int(milp.binary_vars.size), "n_rows": int(milp.base.n_rows)}
    records = []
    fh = open(log_path, "w") if log_path is not None else None
    try:
        if fh:
            fh.write(json.dumps(header) + "\n")
        for i in range(n_scenarios):
            rec = evaluate_scenario(case, i, models, big_m, time_limit, seed, x_m, x_p, parent_modes)
            records.append(rec)
            if fh:
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
            if progress is not None:
                progress(i, rec)
    finally:
        if fh:
            fh.close()
    # aggregate the JSON form so a rebuild from the log is bit-identical
    return aggregate(json.loads(json.dumps(records)), header)


def read_log(path) -> tuple:
    with open(path) as fh:
        lines = [json.loads(ln) for ln in fh if ln.strip()]
    if not lines or lines[0].get("kind") != "header":
        raise ValueError(f"{path}: missing header record")
    return lines[0], lines[1:]


def report_from_log(path) -> EvaluationReport:
    header, records = read_log(path)
    return aggregate(records, header)


def big_m_for(case: NetworkCase, models: Mapping[str, TrainedModel]) -> BigM:
    """Big-M from the dual maxima stored with the models (largest over all)."""
    merged = DualMaxima()
    for m in models.values():
        merged = merged.merge(DualMaxima.from_dict(m.dual_maxima))
    return compute_big_m(merged, case)
