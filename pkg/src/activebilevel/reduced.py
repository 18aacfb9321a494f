"""Binary-free reduced problems: one LP per guessed lower-level active set.

An active inequality keeps its primal row as an equality and a free
nonnegative multiplier.  An inactive one loses its primal row and has its
multiplier fixed at zero.  Nothing else changes, so no binaries and no big-M
constant appear.
"""
from __future__ import annotations

import itertools
import time
from concurrent.futures import Executor
from typing import Iterator, Optional, Sequence

import numpy as np

from .bilevel import BigM, BilevelSolution, c_s_max, kkt_blocks, layout_for, solution_from_vector
from .dcopf import ActiveSet, dcopf_matrices
from .lp_core import LinearProgram, MilpProblem, Status, solve_lp
from .network import NetworkCase

FEAS_TOL = 1e-5


def build_reduced(case: NetworkCase, active: ActiveSet) -> LinearProgram:
    active.check(case)
    lay = layout_for(case, binaries=False)
    kb = kkt_blocks(case, lay)
    bits = active.to_array()
    rows = np.zeros((int(bits.sum()), lay.n_vars))
    rows[:, lay.x] = kb.A_ub[bits]
    upper = kb.upper.copy()
    upper[lay.mu][~bits] = 0.0   # basic slice, so this writes through
    return LinearProgram(kb.objective, np.vstack([kb.eq_matrix, rows]),
                         np.concatenate([kb.eq_rhs, kb.b_ub[bits]]),
                         lower=kb.lower, upper=upper)


def check_feasibility(candidate: BilevelSolution, case: NetworkCase, tol: float = FEAS_TOL,
                      check_complementarity: bool = True) -> bool:
    """Does the candidate satisfy every constraint of the original single-level problem?

    Primal market rows, bid bounds, multiplier signs and stationarity are
    checked with absolute tolerance ``tol``; complementarity is checked as
    ``min(multiplier, slack) <= tol`` unless disabled.
    """
    if candidate.dispatch is None or not np.isfinite(candidate.c_s_star):
        return False
    d = candidate.dispatch
    c_s = candidate.c_s_star
    mats = dcopf_matrices(case)
    lay = layout_for(case, binaries=False)
    if c_s < case.strategic.cost - tol or c_s > c_s_max(case) + tol:
        return False
    x = np.concatenate([d.p_g, d.theta * case.base_mva])
    y = np.concatenate([d.alpha, [d.gamma]])
    mu = d.duals
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(mu))):
        return False
    b_eq = np.concatenate([case.loads, [0.0]])
    if np.abs(mats.A_eq @ x - b_eq).max() > tol:
        return False
    slack = mats.b_ub - mats.A_ub @ x
    if slack.min(initial=0.0) < -tol:
        return False
    if mu.min(initial=0.0) < -tol:
        return False
    cost = np.concatenate([case.costs, np.zeros(case.n_bus)])
    cost[lay.strategic] = c_s
    stat = cost - mats.A_eq.T @ y + mats.A_ub.T @ mu
    if np.abs(stat).max() > tol * max(1.0, float(np.abs(cost).max())):
        return False
    if check_complementarity and np.minimum(mu, slack).max(initial=0.0) > tol:
        return False
    return True


def solve_reduced(case: NetworkCase, active: ActiveSet,
                  time_limit: Optional[float] = None) -> BilevelSolution:
    start = time.perf_counter()
    lp = build_reduced(case, active)
    sol = solve_lp(lp, time_limit)
    wall = time.perf_counter() - start
    if sol.status != Status.OPTIMAL:
        return BilevelSolution(status=sol.status, wall_time=wall, lp_count=1, n_rows=lp.n_rows)
    out = solution_from_vector(case, layout_for(case, binaries=False), sol.primal, sol.objective)
    out.wall_time = wall
    out.lp_count = 1
    out.n_rows = lp.n_rows
    return out


def _better(a: BilevelSolution, b: Optional[BilevelSolution]) -> bool:
    if b is None:
        return True
    tol = 1e-9 * max(1.0, abs(b.profit))
    if a.profit > b.profit + tol:
        return True
    return a.profit >= b.profit - tol and a.c_s_star < b.c_s_star


def solve_with_sets(case: NetworkCase, sets: Sequence[ActiveSet], time_limit: Optional[float] = None,
                    executor: Optional[Executor] = None, tol: float = FEAS_TOL,
                    check_complementarity: bool = True) -> BilevelSolution:
    """Solve one reduced LP per set and keep the best candidate that passes the check.

    Ties in profit go to the lower bid.  With an ``executor`` the LPs run
    concurrently; the result is the same as the sequential one.
    """
    if not sets:
        raise ValueError("no active sets given")
    start = time.perf_counter()
    deadline = None if time_limit is None else start + time_limit

    def run(s):
        left = None if deadline is None else max(0.0, deadline - time.perf_counter())
        return solve_reduced(case, s, left)

    results = list(executor.map(run, sets)) if executor is not None else [run(s) for s in sets]
    best = None
    best_idx = -1
    timed_out = False
    for i, res in enumerate(results):
        if res.status == Status.TIME_LIMIT:
            timed_out = True
        if not res.feasible or not check_feasibility(res, case, tol, check_complementarity):
            continue
        if _better(res, best):
            best, best_idx = res, i
    wall = time.perf_counter() - start
    n_rows = max((r.n_rows for r in results), default=0)
    if best is None:
        status = Status.TIME_LIMIT if timed_out else Status.INFEASIBLE
        return BilevelSolution(status=status, wall_time=wall, lp_count=len(sets), n_rows=n_rows)
    best.wall_time = wall
    best.lp_count = len(sets)
    best.info["set_index"] = best_idx
    best.info["active_set"] = sets[best_idx].to_hex()
    return best


def valid_active_sets(case: NetworkCase) -> Iterator[ActiveSet]:
    """Every invariant-respecting active set: three states per generator and per line."""
    g, nl = case.n_gen, case.n_line
    pairs = [(i, g + i) for i in range(g)] + [(2 * g + k, 2 * g + nl + k) for k in range(nl)]
    degenerate = [case.generators[i].p_min == case.generators[i].p_max for i in range(g)]
    degenerate += [case.lines[k].flow_limit == 0.0 for k in range(nl)]
    for choice in itertools.product(*[range(4 if deg else 3) for deg in degenerate]):
        mask = 0
        for (lo, hi), c in zip(pairs, choice):
            if c == 1:
                mask |= 1 << lo
            elif c == 2:
                mask |= 1 << hi
            elif c == 3:
                mask |= (1 << lo) | (1 << hi)
        yield ActiveSet(g, nl, mask)


def enumerate_best(case: NetworkCase, tol: float = FEAS_TOL) -> BilevelSolution:
    """Exhaustive oracle: best feasible reduced LP over all valid active sets."""
    return solve_with_sets(case, list(valid_active_sets(case)), tol=tol)


def find_big_m(problem, big_m: BigM) -> list:
    """Structural scan: binaries, or any coefficient, rhs or bound equal to an M value.

    An empty list means the problem carries neither integrality nor the
    big-M constants.
    """
    found = []
    if isinstance(problem, MilpProblem):
        found.extend(f"binary[{int(j)}]" for j in problem.binary_vars)
        problem = problem.base
    targets = np.array([big_m.m_primal, big_m.m_dual])
    parts = (("eq", problem.eq_matrix), ("ub", problem.ub_matrix), ("eq_rhs", problem.eq_rhs),
             ("ub_rhs", problem.ub_rhs), ("lower", problem.lower), ("upper", problem.upper))
    for tag, arr in parts:
        vals = np.abs(np.asarray(arr, dtype=float).ravel())
        vals = vals[np.isfinite(vals)]
        hits = np.isclose(vals[:, None], targets[None, :], rtol=1e-12, atol=0.0).any(axis=1)
        if hits.any():
            found.append(f"{tag}:{int(hits.sum())}")
    return found
