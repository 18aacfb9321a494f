"""Dense LP and MILP solvers with dual reporting.

``solve_lp`` is a two-phase bounded-variable primal simplex.  Every
inequality row gets a slack, every row gets an artificial column, so the
basis inverse can be read off the tableau and duals come out exactly.  The
pivoting itself lives in :mod:`activebilevel.kernels.simplex`.

``solve_milp`` is best-bound branch and bound over binary variables on top of
``solve_lp``.

Sign conventions: for ``min c.z  s.t.  A_eq z = b_eq,  A_ub z <= b_ub`` the
returned ``dual_eq`` is d(objective)/d(b_eq) and ``dual_ub`` is the
nonnegative multiplier of the inequality rows, so that at an optimum
``c - A_eq^T dual_eq + A_ub^T dual_ub - reduced_costs = 0``.
"""
from __future__ import annotations

import enum
import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .kernels import simplex as _sx

TOL_FEAS = 1e-7
TOL_CS = 1e-6
TOL_GAP = 1e-6
TOL_INT = 1e-6


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    TIME_LIMIT = "TimeLimit"


class SolverError(RuntimeError):
    """Raised when pivoting cannot continue within tolerance."""


def _as_matrix(a, ncols):
    if a is None:
        return np.zeros((0, ncols))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1 and a.size == 0:
        return np.zeros((0, ncols))
    return np.atleast_2d(a)


def _as_vector(v, n):
    if v is None:
        return np.zeros(n)
    return np.asarray(v, dtype=float).reshape(-1)


@dataclass
class LinearProgram:
    """``min objective.z`` subject to equality rows, ``<=`` rows and variable bounds."""

    objective: np.ndarray
    eq_matrix: np.ndarray = None
    eq_rhs: np.ndarray = None
    ub_matrix: np.ndarray = None
    ub_rhs: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        n = self.objective.size
        self.eq_matrix = _as_matrix(self.eq_matrix, n)
        self.ub_matrix = _as_matrix(self.ub_matrix, n)
        self.eq_rhs = _as_vector(self.eq_rhs, self.eq_matrix.shape[0])
        self.ub_rhs = _as_vector(self.ub_rhs, self.ub_matrix.shape[0])
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).copy()
        self.validate()

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return self.eq_matrix.shape[0] + self.ub_matrix.shape[0]

    @property
    def var_bounds(self):
        return np.column_stack([self.lower, self.upper])

    def validate(self):
        n = self.n_vars
        if self.eq_matrix.shape[1] != n or self.ub_matrix.shape[1] != n:
            raise ValueError("constraint matrices do not match the objective length")
        if self.eq_rhs.size != self.eq_matrix.shape[0] or self.ub_rhs.size != self.ub_matrix.shape[0]:
            raise ValueError("right-hand sides do not match the row counts")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds do not match the objective length")
        for name in ("objective", "eq_matrix", "eq_rhs", "ub_matrix", "ub_rhs"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds contain NaN")
        if np.any(self.lower > self.upper):
            j = int(np.flatnonzero(self.lower > self.upper)[0])
            raise ValueError(f"variable {j} has lower bound above upper bound")

    def with_bounds(self, lower, upper) -> "LinearProgram":
        return LinearProgram(self.objective, self.eq_matrix, self.eq_rhs, self.ub_matrix,
                             self.ub_rhs, lower, upper)


@dataclass
class MilpProblem:
    base: LinearProgram
    binary_vars: np.ndarray

    def __post_init__(self):
        self.binary_vars = np.asarray(self.binary_vars, dtype=np.int64).reshape(-1)
        b = self.binary_vars
        if b.size and (b.min() < 0 or b.max() >= self.base.n_vars):
            raise ValueError("binary index out of range")
        if np.unique(b).size != b.size:
            raise ValueError("binary indices are not unique")
        if np.any(self.base.lower[b] != 0.0) or np.any(self.base.upper[b] != 1.0):
            raise ValueError("binary variables must have bounds [0, 1]")


@dataclass
class LpSolution:
    status: Status
    primal: Optional[np.ndarray] = None
    dual_eq: Optional[np.ndarray] = None
    dual_ub: Optional[np.ndarray] = None
    objective: float = np.nan
    wall_time: float = 0.0
    reduced_costs: Optional[np.ndarray] = None
    iterations: int = 0
    lp_count: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL


def dual_objective(problem: LinearProgram, solution: LpSolution) -> float:
    """Dual value ``b_eq.y - b_ub.mu`` plus the bound terms of the reduced costs."""
    if solution.status != Status.OPTIMAL:
        raise ValueError("dual objective needs an optimal solution")
    value = problem.eq_rhs @ solution.dual_eq - problem.ub_rhs @ solution.dual_ub
    rc = solution.reduced_costs
    z = solution.primal
    at_bound = np.abs(rc) > 0.0
    # nonbasic variables sit on a finite bound, so rc*z is rc*bound there
    value += float(rc[at_bound] @ z[at_bound])
    return float(value)


# ---------------------------------------------------------------------------
# simplex driver


@dataclass
class _Tableau:
    A: np.ndarray          # full constraint matrix [struct | slack | artificial]
    b: np.ndarray
    T: np.ndarray
    d: np.ndarray
    x: np.ndarray
    basis: np.ndarray
    state: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    cost: np.ndarray
    n_core: int = 0        # columns before the (diagonal) artificial block


def _refactor(tab: _Tableau):
    m = tab.A.shape[0]
    if m == 0:
        tab.d[:] = tab.cost
        return np.zeros((0, 0))
    B = tab.A[:, tab.basis]
    try:
        Binv = np.linalg.inv(B)
    except np.linalg.LinAlgError as exc:
        raise SolverError("singular basis") from exc
    if not np.all(np.isfinite(Binv)):
        raise SolverError("singular basis")
    k = tab.n_core
    tab.T[:, :k] = Binv @ tab.A[:, :k]
    tab.T[:, k:] = Binv * np.diagonal(tab.A[:, k:])
    nonbasic = tab.state != _sx.BASIC
    rhs = tab.b - tab.A[:, nonbasic] @ tab.x[nonbasic]
    tab.x[tab.basis] = Binv @ rhs
    y = tab.cost[tab.basis] @ Binv
    tab.d[:] = tab.cost - y @ tab.A
    tab.d[tab.basis] = 0.0
    return Binv


def _price(tab: _Tableau) -> None:
    """Reduced costs from the current tableau rows."""
    if tab.T.shape[0]:
        tab.d[:] = tab.cost - tab.cost[tab.basis] @ tab.T
    else:
        tab.d[:] = tab.cost
    tab.d[tab.basis] = 0.0


def _run_phase(tab: _Tableau, deadline, opts):
    """Iterate to optimality with periodic refactorisation; returns (code, Binv, iterations)."""
    total = 0
    refactors = 0
    code = _sx.BUDGET
    while True:
        if deadline is not None and time.perf_counter() > deadline:
            return None, None, total
        code, it = _sx.iterate(tab.T, tab.d, tab.x, tab.basis, tab.state, tab.lb, tab.ub,
                               opts["chunk"], opts["tol_d"], opts["tol_piv"])
        total += it
        if total > opts["max_iter"]:
            raise SolverError("iteration limit reached")
        Binv = _refactor(tab)
        refactors += 1
        if code == _sx.UNBOUNDED:
            return code, Binv, total
        # confirm optimality on the fresh factorisation
        if code == _sx.OPTIMAL and _reduced_costs_optimal(tab, opts["tol_d"]):
            return _sx.OPTIMAL, Binv, total
        if refactors > opts["max_refactor"]:
            raise SolverError("no convergence after repeated refactorisation")


def _reduced_costs_optimal(tab, tol):
    nb = (tab.state != _sx.BASIC) & (tab.lb != tab.ub)
    d = tab.d
    bad_up = nb & (d < -tol) & ((tab.state == _sx.AT_LB) | (tab.state == _sx.FREE))
    bad_down = nb & (d > tol) & ((tab.state == _sx.AT_UB) | (tab.state == _sx.FREE))
    return not (bad_up.any() or bad_down.any())


def solve_lp(problem: LinearProgram, time_limit: Optional[float] = None, *,
             tol_feas: float = TOL_FEAS) -> LpSolution:
    """Solve ``problem`` to optimality; deterministic for fixed input."""
    start = time.perf_counter()
    deadline = None if time_limit is None else start + float(time_limit)
    n = problem.n_vars
    Aeq, Aub = problem.eq_matrix, problem.ub_matrix
    me, mu = Aeq.shape[0], Aub.shape[0]
    m = me + mu
    N = n + mu + m

    lb = np.concatenate([problem.lower, np.zeros(mu), np.zeros(m)])
    ub = np.concatenate([problem.upper, np.full(mu, np.inf), np.zeros(m)])
    x = np.zeros(N)
    state = np.full(N, _sx.AT_LB, dtype=np.int64)
    lo, hi = problem.lower, problem.upper
    for j in range(n):
        if np.isfinite(lo[j]):
            x[j] = lo[j]
        elif np.isfinite(hi[j]):
            x[j] = hi[j]
            state[j] = _sx.AT_UB
        else:
            state[j] = _sx.FREE

    A = np.zeros((m, N))
    A[:me, :n] = Aeq
    A[me:, :n] = Aub
    A[me:, n:n + mu] = np.eye(mu)
    b = np.concatenate([problem.eq_rhs, problem.ub_rhs])
    resid = b - A[:, :n] @ x[:n]

    basis = np.empty(m, dtype=np.int64)
    phase1_cost = np.zeros(N)
    for i in range(m):
        art = n + mu + i
        if i >= me and resid[i] >= 0.0:
            slack = n + (i - me)
            A[i, art] = 1.0
            basis[i] = slack
            x[slack] = resid[i]
            state[slack] = _sx.BASIC
        else:
            sign = 1.0 if resid[i] >= 0.0 else -1.0
            A[i, art] = sign
            basis[i] = art
            x[art] = abs(resid[i])
            ub[art] = np.inf
            phase1_cost[art] = 1.0
            state[art] = _sx.BASIC

    scale_c = max(1.0, float(np.abs(problem.objective).max(initial=0.0)))
    scale_b = max(1.0, float(np.abs(b).max(initial=0.0)))
    opts = dict(chunk=max(200, 2 * m), tol_d=1e-9, tol_piv=1e-9,
                max_iter=200 * (m + N) + 1000, max_refactor=10_000)

    tab = _Tableau(A=A, b=b, T=np.zeros((m, N)), d=np.zeros(N), x=x, basis=basis,
                   state=state, lb=lb, ub=ub, cost=phase1_cost, n_core=n + mu)
    # the starting basis is a signed identity, so B^-1 A is a row scaling
    sign = A[np.arange(m), basis] if m else np.zeros(0)
    tab.T[:] = A * sign[:, None]
    _price(tab)
    iterations = 0
    if phase1_cost.any():
        code, Binv, it = _run_phase(tab, deadline, opts)
        iterations += it
        if code is None:
            return LpSolution(Status.TIME_LIMIT, wall_time=time.perf_counter() - start,
                              iterations=iterations)
        infeas = float(tab.x[n + mu:].max(initial=0.0))
        if infeas > tol_feas * scale_b:
            return LpSolution(Status.INFEASIBLE, wall_time=time.perf_counter() - start,
                              iterations=iterations)
    # artificials are pinned at zero from here on
    tab.ub[n + mu:] = 0.0
    art_nonbasic = tab.state[n + mu:] != _sx.BASIC
    tab.state[n + mu:][art_nonbasic] = _sx.AT_LB
    tab.x[n + mu:][art_nonbasic] = 0.0
    tab.cost = np.concatenate([problem.objective, np.zeros(mu + m)])
    opts["tol_d"] = 1e-9 * scale_c
    _price(tab)
    code, Binv, it = _run_phase(tab, deadline, opts)
    iterations += it
    wall = time.perf_counter() - start
    if code is None:
        return LpSolution(Status.TIME_LIMIT, wall_time=wall, iterations=iterations)
    if code == _sx.UNBOUNDED:
        return LpSolution(Status.UNBOUNDED, wall_time=wall, iterations=iterations)

    z = tab.x[:n].copy()
    y = tab.cost[tab.basis] @ Binv if m else np.zeros(0)
    rc = problem.objective - (Aeq.T @ y[:me] if me else 0.0) - (Aub.T @ y[me:] if mu else 0.0)
    rc = np.asarray(rc, dtype=float).reshape(n)
    basic_struct = tab.state[:n] == _sx.BASIC
    rc[basic_struct] = 0.0
    rc[np.abs(rc) <= 1e-12 * scale_c] = 0.0
    # snap nonbasic variables exactly onto their bounds
    at_lb = tab.state[:n] == _sx.AT_LB
    at_ub = tab.state[:n] == _sx.AT_UB
    z[at_lb] = problem.lower[at_lb]
    z[at_ub] = problem.upper[at_ub]
    return LpSolution(Status.OPTIMAL, primal=z, dual_eq=y[:me].copy(), dual_ub=-y[me:].copy(),
                      objective=float(problem.objective @ z), wall_time=wall,
                      reduced_costs=rc, iterations=iterations)


def check_lp_optimality(problem: LinearProgram, sol: LpSolution, *, tol_feas=TOL_FEAS,
                        tol_cs=TOL_CS, tol_gap=TOL_GAP) -> dict:
    """Evaluate the four optimality invariants; returns a dict of booleans."""
    z = sol.primal
    scale = max(1.0, float(np.abs(np.concatenate([problem.eq_rhs, problem.ub_rhs])).max(initial=0.0)))
    eq_res = problem.eq_matrix @ z - problem.eq_rhs
    ub_res = problem.ub_matrix @ z - problem.ub_rhs
    primal = (np.all(np.abs(eq_res) <= tol_feas * scale)
              and np.all(ub_res <= tol_feas * scale)
              and np.all(z >= problem.lower - tol_feas * scale)
              and np.all(z <= problem.upper + tol_feas * scale))
    dual = bool(np.all(sol.dual_ub >= -tol_feas))
    cs = bool(np.all(sol.dual_ub * (problem.ub_rhs - problem.ub_matrix @ z) <= tol_cs * scale))
    dobj = dual_objective(problem, sol)
    gap = abs(sol.objective - dobj) <= tol_gap * max(1.0, abs(sol.objective))
    return {"primal": bool(primal), "dual": dual, "complementarity": cs, "strong_duality": bool(gap)}


# ---------------------------------------------------------------------------
# branch and bound


def milp_point_feasible(problem: MilpProblem, z, tol: float = 1e-6) -> bool:
    base = problem.base
    z = np.asarray(z, dtype=float)
    if z.shape != (base.n_vars,) or not np.all(np.isfinite(z)):
        return False
    scale = max(1.0, float(np.abs(np.concatenate([base.eq_rhs, base.ub_rhs])).max(initial=0.0)))
    if np.any(z < base.lower - tol) or np.any(z > base.upper + tol):
        return False
    zb = z[problem.binary_vars]
    if np.any(np.minimum(np.abs(zb), np.abs(zb - 1.0)) > TOL_INT):
        return False
    if base.eq_matrix.shape[0] and np.abs(base.eq_matrix @ z - base.eq_rhs).max() > tol * scale:
        return False
    if base.ub_matrix.shape[0] and (base.ub_matrix @ z - base.ub_rhs).max() > tol * scale:
        return False
    return True


def solve_milp(problem: MilpProblem, time_limit: Optional[float] = None, *,
               incumbent: Optional[np.ndarray] = None,
               heuristic: Optional[Callable[[np.ndarray], Optional[np.ndarray]]] = None,
               mip_gap: float = 1e-7) -> LpSolution:
    """Best-bound branch and bound with most-fractional branching.

    ``incumbent`` is an optional starting point and ``heuristic`` maps a node's
    relaxation to a candidate point; both are checked before use.
    """
    start = time.perf_counter()
    deadline = None if time_limit is None else start + float(time_limit)
    base = problem.base
    bins = problem.binary_vars
    best_z, best_obj = None, np.inf

    def offer(z):
        nonlocal best_z, best_obj
        if z is None or not milp_point_feasible(problem, z):
            return
        z = np.asarray(z, dtype=float).copy()
        z[bins] = np.round(z[bins])
        obj = float(base.objective @ z)
        if obj < best_obj - 1e-12 * max(1.0, abs(obj)):
            best_z, best_obj = z, obj

    offer(incumbent)
    counter = itertools.count()
    heap = [(-np.inf, next(counter), base.lower.copy(), base.upper.copy())]
    nodes = 0
    iterations = 0
    timed_out = False
    root_unbounded = False
    while heap:
        bound, _, lo, hi = heapq.heappop(heap)
        if bound >= best_obj - mip_gap * max(1.0, abs(best_obj)):
            continue
        remaining = None
        if deadline is not None:
            remaining = deadline - time.perf_counter()
            if remaining <= 0:
                timed_out = True
                break
        sol = solve_lp(base.with_bounds(lo, hi), remaining)
        nodes += 1
        iterations += sol.iterations
        if sol.status == Status.TIME_LIMIT:
            timed_out = True
            break
        if sol.status == Status.UNBOUNDED:
            if nodes == 1:
                root_unbounded = True
                break
            continue
        if sol.status != Status.OPTIMAL:
            continue
        if sol.objective >= best_obj - mip_gap * max(1.0, abs(best_obj)):
            continue
        zb = sol.primal[bins]
        frac = np.abs(zb - np.round(zb))
        if frac.max(initial=0.0) <= TOL_INT:
            offer(sol.primal)
            continue
        if heuristic is not None:
            offer(heuristic(sol.primal))
            if sol.objective >= best_obj - mip_gap * max(1.0, abs(best_obj)):
                continue
        k = int(np.argmax(np.minimum(zb - np.floor(zb), np.ceil(zb) - zb)))
        j = int(bins[k])
        down_hi = hi.copy()
        down_hi[j] = 0.0
        up_lo = lo.copy()
        up_lo[j] = 1.0
        heapq.heappush(heap, (sol.objective, next(counter), lo, down_hi))
        heapq.heappush(heap, (sol.objective, next(counter), up_lo, hi))

    wall = time.perf_counter() - start
    extra = {"nodes": nodes}
    if root_unbounded:
        return LpSolution(Status.UNBOUNDED, wall_time=wall, lp_count=nodes, iterations=iterations,
                          extra=extra)
    if timed_out:
        extra["has_incumbent"] = best_z is not None
        return LpSolution(Status.TIME_LIMIT, primal=best_z,
                          objective=best_obj if best_z is not None else np.nan,
                          wall_time=wall, lp_count=nodes, iterations=iterations, extra=extra)
    if best_z is None:
        return LpSolution(Status.INFEASIBLE, wall_time=wall, lp_count=nodes,
                          iterations=iterations, extra=extra)
    return LpSolution(Status.OPTIMAL, primal=best_z, objective=best_obj, wall_time=wall,
                      lp_count=nodes, iterations=iterations, extra=extra)
