"""Acceptance checks, one test per criterion.

Each test prints ``criterion N: PASS/FAIL  detail`` and the lines are
repeated in the terminal summary.  Run just these with ``pytest -m acceptance -s``.
"""
import re
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from activebilevel.bilevel import build_baseline, solve_baseline
from activebilevel.dataset import DatasetParams, generate_databases
from activebilevel.dtree import Hyperparams, predict_sets, predict_with_parent, train_model
from activebilevel.lp_core import LinearProgram, Status, dual_objective, solve_lp, solve_milp
from activebilevel.network import scale_loads
from activebilevel.pipeline import big_m_for, evaluate
from activebilevel.reduced import build_reduced, enumerate_best, find_big_m, valid_active_sets
from conftest import feasible_loads, observed_big_m
from test_lp_core import milp_oracle, oracle, random_lp, random_milp

pytestmark = pytest.mark.acceptance

METHODS = ("varlower", "allsets", "bestset")
DB9 = DatasetParams(batch=2000, max_batches=50)
DB39 = DatasetParams(x_m=0.25, x_p=0.25, batch=200, max_batches=10)
N_EVAL9 = 1000
N_EVAL39 = 20


@pytest.fixture(scope="module")
def dbs9(case9):
    return generate_databases(METHODS, case9, DB9, seed=0)


@pytest.fixture(scope="module")
def dbs39(case39):
    return generate_databases(METHODS, case39, DB39, seed=5)


@pytest.fixture(scope="module")
def models9(dbs9):
    return {m: train_model(db, budget=20, seed=0) for m, db in dbs9.items()}


@pytest.fixture(scope="module")
def models39(dbs39):
    return {m: train_model(db, budget=10, seed=0) for m, db in dbs39.items()}


@pytest.fixture(scope="module")
def shallow39(dbs39):
    return {m + "@depth2": train_model(db, hp=Hyperparams(max_depth=2), seed=0)
            for m, db in dbs39.items()}


@pytest.fixture(scope="module")
def report39(case39, models39, shallow39):
    models = {**models39, **shallow39}
    return evaluate(case39, models, N_EVAL39, big_m_for(case39, models39), time_limit=600.0,
                    seed=1, x_m=DB39.x_m, x_p=DB39.x_p, parent_modes=(False, True))


def test_criterion_1_binary_count(case9, big_m9, criterion):
    start = time.perf_counter()
    n_bin = build_baseline(case9, big_m9).binary_vars.size
    took = time.perf_counter() - start
    ok = n_bin == 24 and took < 1.0
    criterion(1, ok, f"9-bus baseline binaries = {n_bin} (want 24), built in {took:.3f}s")
    assert ok


def test_criterion_2_enumeration_oracle(case3, criterion):
    start = time.perf_counter()
    big_m = observed_big_m(case3)
    loads = feasible_loads(case3, np.random.default_rng(2024))
    worst, n = 0.0, 25
    for _ in range(n):
        scen = next(loads)
        base = solve_baseline(scen, big_m)
        best = enumerate_best(scen)
        assert base.status == Status.OPTIMAL and best.status == Status.OPTIMAL
        worst = max(worst, abs(base.profit - best.profit) / max(1.0, abs(best.profit)))
    took = time.perf_counter() - start
    ok = worst <= 1e-6 and took < 60.0
    criterion(2, ok, f"{n} loads on case3, max relative gap {worst:.2e}, {took:.1f}s")
    assert ok


def test_criterion_3_engine(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    lp_bad = 0
    for _ in range(200):
        lp = random_lp(rng)
        sol = solve_lp(lp)
        ref = oracle(lp)
        gap = abs(sol.objective - dual_objective(lp, sol))
        scale = max(1.0, abs(ref[0]))
        if sol.status != Status.OPTIMAL or gap > 1e-6 * scale or abs(sol.objective - ref[0]) > 1e-6 * scale:
            lp_bad += 1
    milp_bad = 0
    for _ in range(50):
        milp = random_milp(rng, int(rng.integers(1, 11)))
        sol = solve_milp(milp)
        ref = milp_oracle(milp)
        if ref is None:
            milp_bad += sol.status != Status.INFEASIBLE
        elif sol.status != Status.OPTIMAL or abs(sol.objective - ref[0]) > 1e-6 * max(1.0, abs(ref[0])):
            milp_bad += 1
    took = time.perf_counter() - start
    ok = lp_bad == 0 and milp_bad == 0 and took < 120.0
    criterion(3, ok, f"LP mismatches {lp_bad}/200, MILP mismatches {milp_bad}/50, {took:.1f}s")
    assert ok


def test_criterion_4_nine_bus_accuracy(case9, dbs9, models9, criterion):
    start = time.perf_counter()
    rep = evaluate(case9, models9, N_EVAL9, big_m_for(case9, models9), time_limit=300.0, seed=5)
    took = time.perf_counter() - start
    print(rep.table())
    parts, ok = [], True
    for m in METHODS:
        r = rep.methods[m]
        ok &= r["pct_opt"] >= 90.0 and r["pct_inf"] == 0.0
        parts.append(f"{m} opt {r['pct_opt']:.1f}% inf {r['pct_inf']:.1f}%")
    ok &= took < 900.0
    criterion(4, ok, f"{N_EVAL9} scenarios: " + ", ".join(parts) + f", eval {took:.0f}s")
    assert ok


def test_criterion_5_speedup(report39, criterion):
    print(report39.table())
    ratios = {m: report39.methods[m]["ratio_mean"] for m in METHODS}
    ok = all(r <= 0.5 for r in ratios.values())
    detail = ", ".join(f"{m} {r:.4f}" for m, r in ratios.items())
    criterion(5, ok, f"39-bus mean time ratio ({N_EVAL39} scenarios): {detail}")
    assert ok


def test_criterion_6_total_load_feature(dbs9, dbs39, criterion):
    parts, ok = [], True
    for name, dbs in (("9-bus", dbs9), ("39-bus", dbs39)):
        for m, db in dbs.items():
            with_tl = train_model(db, budget=10, total_load=True, seed=0).test_accuracy
            without = train_model(db, budget=10, total_load=False, seed=0).test_accuracy
            ok &= with_tl >= without
            parts.append(f"{name} {m} {with_tl:.4f}>={without:.4f}")
    criterion(6, ok, "; ".join(parts))
    assert ok


def test_criterion_7_parent_extraction(report39, criterion):
    parts, ok = [], True
    for m in METHODS:
        plain = report39.methods[m + "@depth2"]["pct_opt"]
        parent = report39.methods[m + "@depth2+parent"]["pct_opt"]
        ok &= parent >= plain
        parts.append(f"{m} {parent:.1f}%>={plain:.1f}%")
    criterion(7, ok, "depth-2 trees on 39-bus, parent vs plain %Opt: " + ", ".join(parts))
    assert ok


def test_criterion_8_reduced_lp_purity(case9, models9, dbs9, case3, big_m3, criterion):
    big_m = big_m_for(case9, models9)
    scanned, flagged = 0, 0
    seen = set()
    for m, model in models9.items():
        for s in dbs9[m].samples[:300]:
            for a in predict_with_parent(model, s.load) + predict_sets(model, s.load):
                if a.mask in seen:
                    continue
                seen.add(a.mask)
                lp = build_reduced(scale_loads(case9, s.load), a)
                scanned += 1
                flagged += (not isinstance(lp, LinearProgram)) or bool(find_big_m(lp, big_m))
    for a in valid_active_sets(case3):
        lp = build_reduced(case3, a)
        scanned += 1
        flagged += (not isinstance(lp, LinearProgram)) or bool(find_big_m(lp, big_m3))
    ok = flagged == 0 and scanned > 0
    criterion(8, ok, f"{scanned} reduced LPs scanned, {flagged} with binaries or big-M")
    assert ok


def test_criterion_9_invariant_suites(criterion):
    root = Path(__file__).resolve().parents[1]
    proc = subprocess.run([sys.executable, "-m", "pytest", "-m", "invariant", "-q", "-p",
                           "no:cacheprovider", "--hypothesis-show-statistics", str(root / "tests")],
                          cwd=root, capture_output=True, text=True)
    out = proc.stdout
    passed = re.search(r"(\d+) passed", out)
    n_tests = int(passed.group(1)) if passed else 0
    counts = [int(v) for v in re.findall(r"(\d+) passing examples", out)]
    ok = proc.returncode == 0 and n_tests > 0 and len(counts) >= n_tests and min(counts) >= 100
    criterion(9, ok, f"{n_tests} invariant tests passed, fewest examples in a test: "
                     f"{min(counts) if counts else 0}")
    if not ok:
        print(out[-3000:])
    assert ok
