"""Strategic bidding as a single-level problem: KKT layout and the big-M MILP baseline.

Variable layout shared by the MILP and the reduced LPs::

    [c_s | p_g (G) | psi (n_bus) | alpha (n_bus) | gamma | mu (K) | u (K, MILP only)]

with ``K = 2G + 2L`` and ``mu = [phi_min, phi_max, rho_min, rho_max]``.  The
upper-level objective ``(c_1 - alpha_S) * p_S`` is made linear through strong
duality of the market clearing plus complementarity at the strategic unit:

    c_1 p_S + sum_{i != S} (c_i p_i + pmax_i phi_max_i - pmin_i phi_min_i)
        - sum_b alpha_b load_b + sum_l fmax_l (rho_min_l + rho_max_l)

Profits are reported as positive numbers (the negated minimum).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dcopf import (DcopfSolution, InfeasibleDispatch, binding_set, dcopf_matrices, extract_active_set,
                    solve_dcopf)
from .lp_core import (LinearProgram, LpSolution, MilpProblem, Status, TOL_INT, solve_milp)
from .network import NetworkCase

DUAL_FAMILIES = ("alpha", "gamma", "phi_min", "phi_max", "rho_min", "rho_max")
SLACK_FAMILIES = ("gen_slack", "flow_slack")


def c_s_max(case: NetworkCase) -> float:
    """Upper bid limit: ten times the most expensive generator cost."""
    return 10.0 * float(max(g.cost for g in case.generators))


@dataclass(frozen=True)
class Layout:
    n_gen: int
    n_bus: int
    n_line: int
    strategic: int
    binaries: bool

    @property
    def K(self) -> int:
        return 2 * self.n_gen + 2 * self.n_line

    @property
    def nx(self) -> int:
        return self.n_gen + self.n_bus

    @property
    def cs(self) -> int:
        return 0

    @property
    def p(self) -> slice:
        return slice(1, 1 + self.n_gen)

    @property
    def psi(self) -> slice:
        return slice(1 + self.n_gen, 1 + self.nx)

    @property
    def x(self) -> slice:
        return slice(1, 1 + self.nx)

    @property
    def alpha(self) -> slice:
        s = 1 + self.nx
        return slice(s, s + self.n_bus)

    @property
    def gamma(self) -> int:
        return 1 + self.nx + self.n_bus

    @property
    def y(self) -> slice:
        s = 1 + self.nx
        return slice(s, s + self.n_bus + 1)

    @property
    def mu(self) -> slice:
        s = 2 + self.nx + self.n_bus
        return slice(s, s + self.K)

    @property
    def u(self) -> slice:
        s = 2 + self.nx + self.n_bus + self.K
        return slice(s, s + (self.K if self.binaries else 0))

    @property
    def n_vars(self) -> int:
        return 2 + self.nx + self.n_bus + self.K * (2 if self.binaries else 1)


def layout_for(case: NetworkCase, binaries: bool) -> Layout:
    return Layout(case.n_gen, case.n_bus, case.n_line, case.strategic_gen, binaries)


@dataclass(frozen=True)
class KktBlocks:
    """Rows and objective common to the MILP and every reduced LP."""

    objective: np.ndarray
    eq_matrix: np.ndarray   # balance + reference, then stationarity
    eq_rhs: np.ndarray
    A_ub: np.ndarray        # lower-level inequality rows over x
    b_ub: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def kkt_blocks(case: NetworkCase, lay: Layout) -> KktBlocks:
    mats = dcopf_matrices(case)
    g, nb, K, nx = lay.n_gen, lay.n_bus, lay.K, lay.nx
    S = lay.strategic
    n = lay.n_vars
    costs = case.costs

    # primal equalities of the lower level
    prim = np.zeros((nb + 1, n))
    prim[:, lay.x] = mats.A_eq
    prim_rhs = np.concatenate([case.loads, [0.0]])

    # stationarity: c(c_s) - A_eq^T y + A_ub^T mu = 0, one row per x column
    stat = np.zeros((nx, n))
    stat[S, lay.cs] = 1.0
    stat[:, lay.y] = -mats.A_eq.T
    stat[:, lay.mu] = mats.A_ub.T
    stat_rhs = np.zeros(nx)
    other = np.arange(g) != S
    stat_rhs[:g][other] = -costs[other]

    obj = np.zeros(n)
    obj[lay.p] = costs
    obj[lay.y] = -prim_rhs
    mu_cost = mats.b_ub.copy()
    mu_cost[S] = 0.0
    mu_cost[g + S] = 0.0
    obj[lay.mu] = mu_cost

    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    lower[lay.cs] = case.strategic.cost
    upper[lay.cs] = c_s_max(case)
    lower[lay.mu] = 0.0
    if lay.binaries:
        lower[lay.u] = 0.0
        upper[lay.u] = 1.0
    return KktBlocks(obj, np.vstack([prim, stat]), np.concatenate([prim_rhs, stat_rhs]),
                     np.asarray(mats.A_ub), np.asarray(mats.b_ub), lower, upper)


def dispatch_from_vector(case: NetworkCase, lay: Layout, z: np.ndarray) -> DcopfSolution:
    g, nl = lay.n_gen, lay.n_line
    mats = dcopf_matrices(case)
    p = z[lay.p].copy()
    psi = z[lay.psi]
    mu = z[lay.mu]
    c_s = float(z[lay.cs])
    costs = case.costs.copy()
    costs[lay.strategic] = c_s
    return DcopfSolution(
        p_g=p, theta=psi / case.base_mva, flows=case.susceptances * (mats.incidence @ psi),
        alpha=z[lay.alpha].copy(), gamma=float(z[lay.gamma]),
        phi_min=mu[:g].copy(), phi_max=mu[g:2 * g].copy(),
        rho_min=mu[2 * g:2 * g + nl].copy(), rho_max=mu[2 * g + nl:].copy(),
        objective=float(costs @ p), c_s=c_s)


def vector_from_dispatch(case: NetworkCase, lay: Layout, sol: DcopfSolution,
                         tol_dual: float = 1e-9) -> np.ndarray:
    """Full MILP/LP vector from a market-clearing solution at bid ``sol.c_s``."""
    z = np.zeros(lay.n_vars)
    z[lay.cs] = sol.c_s
    z[lay.p] = sol.p_g
    z[lay.psi] = sol.theta * case.base_mva
    z[lay.alpha] = sol.alpha
    z[lay.gamma] = sol.gamma
    mu = np.maximum(sol.duals, 0.0)
    inactive = mu <= tol_dual
    mu[inactive] = 0.0
    z[lay.mu] = mu
    if lay.binaries:
        z[lay.u] = inactive.astype(float)
    return z


# ---------------------------------------------------------------------------
# big-M


@dataclass
class DualMaxima:
    """Largest magnitudes seen per multiplier family and per primal slack family."""

    values: dict = field(default_factory=dict)

    def update(self, case: NetworkCase, sol: DcopfSolution) -> None:
        obs = {"alpha": np.max(np.abs(sol.alpha)), "gamma": abs(sol.gamma),
               "phi_min": sol.phi_min.max(initial=0.0), "phi_max": sol.phi_max.max(initial=0.0),
               "rho_min": sol.rho_min.max(initial=0.0), "rho_max": sol.rho_max.max(initial=0.0)}
        slack = sol.slacks(case)
        g = case.n_gen
        obs["gen_slack"] = slack[:2 * g].max(initial=0.0)
        obs["flow_slack"] = slack[2 * g:].max(initial=0.0)
        for key, val in obs.items():
            self.values[key] = max(float(val), self.values.get(key, 0.0))

    def merge(self, other: "DualMaxima") -> "DualMaxima":
        keys = set(self.values) | set(other.values)
        return DualMaxima({k: max(self.values.get(k, 0.0), other.values.get(k, 0.0)) for k in keys})

    @property
    def empty(self) -> bool:
        return not any(k in self.values for k in DUAL_FAMILIES)

    def max_dual(self) -> float:
        return max(self.values.get(k, 0.0) for k in DUAL_FAMILIES)

    def max_slack(self) -> float:
        return max(self.values.get(k, 0.0) for k in SLACK_FAMILIES)

    def to_dict(self) -> dict:
        return dict(sorted(self.values.items()))

    @classmethod
    def from_dict(cls, doc: dict) -> "DualMaxima":
        return cls({k: float(v) for k, v in doc.items()})


@dataclass(frozen=True)
class BigM:
    m_primal: float
    m_dual: float

    def __post_init__(self):
        for name in ("m_primal", "m_dual"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")


def physical_slack_bound(case: NetworkCase) -> float:
    spans = [g.p_max - g.p_min for g in case.generators] + [2.0 * ln.flow_limit for ln in case.lines]
    return float(max(spans))


def compute_big_m(maxima: DualMaxima, case: Optional[NetworkCase] = None, factor: float = 10.0) -> BigM:
    """Ten times the largest observed multiplier / primal slack.

    With ``case`` given, the primal constant is floored at the widest physical
    slack range (generator span or twice a flow limit).
    """
    if maxima.empty:
        raise ValueError("no dual statistics recorded")
    m_dual = factor * maxima.max_dual()
    m_primal = factor * maxima.max_slack()
    if case is not None:
        m_primal = max(m_primal, physical_slack_bound(case))
    if m_primal <= 0:
        m_primal = factor
    if m_dual <= 0:
        m_dual = factor
    return BigM(m_primal=m_primal, m_dual=m_dual)


# ---------------------------------------------------------------------------
# baseline MILP


@dataclass
class BilevelSolution:
    status: Status
    c_s_star: float = np.nan
    profit: float = np.nan
    dispatch: Optional[DcopfSolution] = None
    wall_time: float = 0.0
    lp_count: int = 0
    vector: Optional[np.ndarray] = None
    n_rows: int = 0
    info: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == Status.OPTIMAL and self.dispatch is not None


def build_baseline(case: NetworkCase, big_m: BigM) -> MilpProblem:
    """Fortuny-Amat big-M reformulation with one binary per lower-level inequality."""
    lay = layout_for(case, binaries=True)
    kb = kkt_blocks(case, lay)
    K, n = lay.K, lay.n_vars
    rows = np.zeros((3 * K, n))
    rhs = np.zeros(3 * K)
    ku = np.arange(K)
    # primal feasibility: A_ub x <= b_ub
    rows[:K, lay.x] = kb.A_ub
    rhs[:K] = kb.b_ub
    # slack <= M_p u
    rows[K:2 * K, lay.x] = -kb.A_ub
    rows[K + ku, lay.u.start + ku] = -big_m.m_primal
    rhs[K:2 * K] = -kb.b_ub
    # mu <= M_d (1 - u)
    rows[2 * K + ku, lay.mu.start + ku] = 1.0
    rows[2 * K + ku, lay.u.start + ku] = big_m.m_dual
    rhs[2 * K:] = big_m.m_dual
    lp = LinearProgram(kb.objective, kb.eq_matrix, kb.eq_rhs, rows, rhs, kb.lower, kb.upper)
    return MilpProblem(lp, np.arange(lay.u.start, lay.u.stop))


def solution_from_vector(case: NetworkCase, lay: Layout, z: np.ndarray, objective: float,
                         status: Status = Status.OPTIMAL) -> BilevelSolution:
    disp = dispatch_from_vector(case, lay, z)
    return BilevelSolution(status=status, c_s_star=float(z[lay.cs]), profit=-float(objective),
                           dispatch=disp, vector=z)


def audit_big_m(case: NetworkCase, sol: BilevelSolution, big_m: BigM, margin: float = 0.01) -> list:
    """Names of slacks / multipliers within ``margin`` of their big-M bound."""
    flags = []
    disp = sol.dispatch
    slack = disp.slacks(case)
    duals = disp.duals
    for k in np.flatnonzero(slack >= (1.0 - margin) * big_m.m_primal):
        flags.append(f"slack[{int(k)}]")
    for k in np.flatnonzero(duals >= (1.0 - margin) * big_m.m_dual):
        flags.append(f"dual[{int(k)}]")
    return flags


class _GridHeuristic:
    """Turns a relaxation's bid into a feasible MILP point through one market clearing."""

    def __init__(self, case: NetworkCase, lay: Layout):
        self.case, self.lay = case, lay
        self.cache = {}
        self.lp_count = 0

    def point(self, c_s: float):
        case = self.case
        c_s = float(np.clip(c_s, case.strategic.cost, c_s_max(case)))
        key = round(c_s, 9)
        if key not in self.cache:
            try:
                sol = solve_dcopf(case, c_s)
                self.lp_count += 1
                self.cache[key] = vector_from_dispatch(case, self.lay, sol)
            except (InfeasibleDispatch, RuntimeError):
                self.cache[key] = None
        return self.cache[key]

    def __call__(self, z_relax):
        return self.point(z_relax[self.lay.cs])


def solve_baseline(case: NetworkCase, big_m: BigM, time_limit: Optional[float] = 300.0,
                   grid: int = 10) -> BilevelSolution:
    """Solve the big-M MILP by branch and bound.

    Market clearings at ``grid`` evenly spaced bids seed the incumbent, and
    every fractional node's bid is replayed the same way.
    """
    start = time.perf_counter()
    milp = build_baseline(case, big_m)
    lay = layout_for(case, binaries=True)
    heur = _GridHeuristic(case, lay)
    best = None
    for c in np.linspace(case.strategic.cost, c_s_max(case), grid):
        z = heur.point(c)
        if z is not None and (best is None or milp.base.objective @ z < milp.base.objective @ best):
            best = z
    remaining = None if time_limit is None else max(0.0, time_limit - (time.perf_counter() - start))
    res = solve_milp(milp, remaining, incumbent=best, heuristic=heur)
    wall = time.perf_counter() - start
    if res.primal is None:
        out = BilevelSolution(status=res.status, wall_time=wall, lp_count=res.lp_count,
                              n_rows=milp.base.n_rows)
        out.info["nodes"] = res.extra.get("nodes", 0)
        return out
    out = solution_from_vector(case, lay, res.primal, res.objective, res.status)
    out.wall_time = wall
    out.lp_count = res.lp_count
    out.n_rows = milp.base.n_rows
    out.info.update(nodes=res.extra.get("nodes", 0), heuristic_lps=heur.lp_count,
                    big_m_flags=audit_big_m(case, out, big_m),
                    active_set=extract_active_set(case, out.dispatch).to_hex(),
                    binding_set=binding_set(case, out.dispatch).to_hex())
    return out
