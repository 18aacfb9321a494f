"""Lower-level market clearing (DC optimal power flow) and its active set.

LP variables are the generator outputs followed by the scaled bus angles
``psi = base_mva * theta``, so line flows are ``B_l * (psi_from - psi_to)`` in
MW with ``B_l`` in p.u.  Rows:

* equalities: one power balance per bus (dual = nodal price), then the
  reference angle;
* inequalities, in this order: gen-min, gen-max, flow-min, flow-max.  The
  same order indexes :class:`ActiveSet` bits.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .lp_core import LinearProgram, LpSolution, Status, TOL_CS, solve_lp
from .network import NetworkCase

TOL_DUAL = 1e-6


class InfeasibleDispatch(RuntimeError):
    """The DCOPF has no feasible dispatch for the given load."""


@dataclass(frozen=True)
class ActiveSet:
    """Bitset over the lower-level inequalities ``[gen-min, gen-max, flow-min, flow-max]``."""

    n_gen: int
    n_line: int
    mask: int

    def __post_init__(self):
        size = 2 * self.n_gen + 2 * self.n_line
        if self.mask < 0 or self.mask >> size:
            raise ValueError("mask has bits beyond the constraint count")

    @property
    def size(self) -> int:
        return 2 * self.n_gen + 2 * self.n_line

    @classmethod
    def from_bools(cls, n_gen: int, n_line: int, bits: Iterable[bool]) -> "ActiveSet":
        mask = 0
        for j, bit in enumerate(bits):
            if bit:
                mask |= 1 << j
        return cls(n_gen, n_line, mask)

    def to_array(self) -> np.ndarray:
        return np.array([(self.mask >> j) & 1 for j in range(self.size)], dtype=bool)

    def __contains__(self, j: int) -> bool:
        return bool((self.mask >> j) & 1)

    def to_hex(self) -> str:
        width = max(1, -(-self.size // 4))
        return format(self.mask, f"0{width}x")

    @classmethod
    def from_hex(cls, n_gen: int, n_line: int, text: str) -> "ActiveSet":
        return cls(n_gen, n_line, int(text, 16))

    def count(self) -> int:
        return bin(self.mask).count("1")

    def conflicts(self, case: Optional[NetworkCase] = None) -> list:
        """Constraint pairs set at both bounds where the bounds differ."""
        bits = self.to_array()
        g, l = self.n_gen, self.n_line
        bad = []
        for i in range(g):
            if bits[i] and bits[g + i]:
                if case is None or case.generators[i].p_min != case.generators[i].p_max:
                    bad.append(("gen", i))
        for k in range(l):
            if bits[2 * g + k] and bits[2 * g + l + k]:
                if case is None or case.lines[k].flow_limit != 0.0:
                    bad.append(("line", k))
        return bad

    def check(self, case: NetworkCase) -> None:
        if (self.n_gen, self.n_line) != (case.n_gen, case.n_line):
            raise ValueError("active set dimensions do not match the case")
        bad = self.conflicts(case)
        if bad:
            raise ValueError(f"contradictory active set: {bad}")


@dataclass
class DcopfSolution:
    p_g: np.ndarray
    theta: np.ndarray
    flows: np.ndarray
    alpha: np.ndarray
    phi_min: np.ndarray
    phi_max: np.ndarray
    rho_min: np.ndarray
    rho_max: np.ndarray
    gamma: float
    objective: float
    status: Status = Status.OPTIMAL
    c_s: float = np.nan

    @property
    def duals(self) -> np.ndarray:
        """Inequality multipliers in active-set order."""
        return np.concatenate([self.phi_min, self.phi_max, self.rho_min, self.rho_max])

    def slacks(self, case: NetworkCase) -> np.ndarray:
        f = case.flow_limits
        return np.concatenate([self.p_g - case.p_min, case.p_max - self.p_g,
                               f + self.flows, f - self.flows])

    def strategic_profit(self, case: NetworkCase) -> float:
        """(price at the strategic bus - true cost) * output."""
        gen = case.strategic
        price = self.alpha[case.bus_pos(gen.bus)]
        return float((price - gen.cost) * self.p_g[case.strategic_gen])


@dataclass(frozen=True)
class DcopfMatrices:
    """Constant parts of the DCOPF LP for a case (the load enters only ``b_eq``)."""

    A_eq: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    gen_cost: np.ndarray
    incidence: np.ndarray   # line x bus, +1 at from, -1 at to
    n_gen: int
    n_bus: int
    ref_pos: int


def dcopf_matrices(case: NetworkCase) -> DcopfMatrices:
    mats = case._cache.get("dcopf")
    if mats is None:
        mats = case._cache["dcopf"] = _build_matrices(case)
    return mats


def _build_matrices(case: NetworkCase) -> DcopfMatrices:
    g, nb, nl = case.n_gen, case.n_bus, case.n_line
    inc = np.zeros((nl, nb))
    for k, ln in enumerate(case.lines):
        inc[k, case.bus_pos(ln.from_bus)] = 1.0
        inc[k, case.bus_pos(ln.to_bus)] = -1.0
    flow = case.susceptances[:, None] * inc          # flows = flow @ psi
    gen_map = np.zeros((nb, g))
    for i, gen in enumerate(case.generators):
        gen_map[case.bus_pos(gen.bus), i] = 1.0
    ref = case.bus_pos(case.ref_bus)
    A_eq = np.zeros((nb + 1, g + nb))
    A_eq[:nb, :g] = gen_map
    A_eq[:nb, g:] = -(inc.T @ flow)                  # minus net outflow
    A_eq[nb, g + ref] = 1.0
    A_ub = np.zeros((2 * g + 2 * nl, g + nb))
    A_ub[:g, :g] = -np.eye(g)
    A_ub[g:2 * g, :g] = np.eye(g)
    A_ub[2 * g:2 * g + nl, g:] = -flow
    A_ub[2 * g + nl:, g:] = flow
    f = case.flow_limits
    b_ub = np.concatenate([-case.p_min, case.p_max, f, f])
    for arr in (A_eq, A_ub, b_ub, inc):
        arr.setflags(write=False)
    return DcopfMatrices(A_eq, A_ub, b_ub, case.costs, inc, g, nb, ref)


def build_dcopf(case: NetworkCase, c_s: float) -> LinearProgram:
    """Market clearing LP with the strategic generator priced at ``c_s``."""
    if not np.isfinite(c_s):
        raise ValueError("c_s must be finite")
    mats = dcopf_matrices(case)
    cost = np.concatenate([case.costs, np.zeros(case.n_bus)])
    cost[case.strategic_gen] = c_s
    b_eq = np.concatenate([case.loads, [0.0]])
    return LinearProgram(cost, mats.A_eq, b_eq, mats.A_ub, mats.b_ub)


def dcopf_from_lp(case: NetworkCase, sol: LpSolution, c_s: float) -> DcopfSolution:
    g, nb, nl = case.n_gen, case.n_bus, case.n_line
    z = sol.primal
    p_g, psi = z[:g], z[g:]
    flows = case.susceptances * (dcopf_matrices(case).incidence @ psi)
    mu = sol.dual_ub
    return DcopfSolution(
        p_g=p_g.copy(), theta=psi / case.base_mva, flows=flows,
        alpha=sol.dual_eq[:nb].copy(), gamma=float(sol.dual_eq[nb]),
        phi_min=mu[:g].copy(), phi_max=mu[g:2 * g].copy(),
        rho_min=mu[2 * g:2 * g + nl].copy(), rho_max=mu[2 * g + nl:].copy(),
        objective=sol.objective, status=sol.status, c_s=float(c_s))


def solve_dcopf(case: NetworkCase, c_s: float, time_limit: Optional[float] = None) -> DcopfSolution:
    lp = build_dcopf(case, c_s)
    sol = solve_lp(lp, time_limit)
    if sol.status == Status.INFEASIBLE:
        raise InfeasibleDispatch("load cannot be served within generator and line limits")
    if sol.status != Status.OPTIMAL:
        raise RuntimeError(f"DCOPF solve ended with status {sol.status.value}")
    return dcopf_from_lp(case, sol, c_s)


def extract_active_set(case: NetworkCase, sol: DcopfSolution, tol_dual: float = TOL_DUAL) -> ActiveSet:
    """Bit j is set iff the multiplier of inequality j exceeds ``tol_dual``."""
    return ActiveSet.from_bools(case.n_gen, case.n_line, sol.duals > tol_dual)


def binding_set(case: NetworkCase, sol: DcopfSolution, tol_slack: float = TOL_CS) -> ActiveSet:
    """Primal rule: bit j is set iff inequality j holds with (near) zero slack.

    Unlike :func:`extract_active_set` this keeps binding rows whose
    multiplier is zero, which matters at dual-degenerate optima.
    """
    bits = sol.slacks(case) <= tol_slack
    # a pair with equal bounds can be binding on both sides; keep the lower one
    g, nl = case.n_gen, case.n_line
    for i in range(g):
        if bits[i] and bits[g + i] and case.generators[i].p_min != case.generators[i].p_max:
            bits[g + i] = False
    for k in range(nl):
        if bits[2 * g + k] and bits[2 * g + nl + k] and case.lines[k].flow_limit != 0.0:
            bits[2 * g + nl + k] = False
    return ActiveSet.from_bools(g, nl, bits)


def count_degenerate(case: NetworkCase, sol: DcopfSolution, tol_dual: float = TOL_DUAL,
                     tol_slack: float = TOL_CS) -> int:
    """Constraints that bind (zero slack) but carry a zero multiplier."""
    slack = sol.slacks(case)
    return int(np.sum((np.abs(slack) <= tol_slack) & (sol.duals <= tol_dual)))


def reduced_dcopf(case: NetworkCase, c_s: float, active: ActiveSet) -> LinearProgram:
    """DCOPF with active inequalities as equalities and the inactive ones dropped."""
    lp = build_dcopf(case, c_s)
    bits = active.to_array()
    A_eq = np.vstack([lp.eq_matrix, lp.ub_matrix[bits]])
    b_eq = np.concatenate([lp.eq_rhs, lp.ub_rhs[bits]])
    return LinearProgram(lp.objective, A_eq, b_eq, lower=lp.lower, upper=lp.upper)
