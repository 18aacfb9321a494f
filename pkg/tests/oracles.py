"""Independent reference computations used by the tests.

Nothing here calls the package's solvers: LPs are solved by brute-force
vertex enumeration and constraint checks are written out bus by bus.
"""
import itertools

import numpy as np


def vertex_enumeration(c, A_eq, b_eq, A_ub, b_ub, lower, upper, tol=1e-7):
    """Minimum of a bounded LP over all basic feasible points; None if infeasible.

    All bounds must be finite so the feasible set is a polytope.
    """
    c = np.asarray(c, float)
    n = c.size
    A_eq = np.asarray(A_eq, float).reshape(-1, n)
    A_ub = np.asarray(A_ub, float).reshape(-1, n)
    b_eq = np.asarray(b_eq, float).ravel()
    b_ub = np.asarray(b_ub, float).ravel()
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    assert np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))
    # candidate inequality rows: A_ub, -z <= -lower, z <= upper
    G = np.vstack([A_ub, -np.eye(n), np.eye(n)])
    h = np.concatenate([b_ub, -lower, upper])
    me = A_eq.shape[0]
    k = n - me
    if k < 0:
        return None
    best = None
    combos = list(itertools.combinations(range(G.shape[0]), k))
    if not combos:
        combos = [()]
    combos = np.array(combos, dtype=int).reshape(len(combos), k)
    M = np.empty((len(combos), n, n))
    r = np.empty((len(combos), n))
    M[:, :me, :] = A_eq
    r[:, :me] = b_eq
    if k:
        M[:, me:, :] = G[combos]
        r[:, me:] = h[combos]
    det = np.linalg.det(M)
    ok = np.abs(det) > 1e-9
    if not ok.any():
        return None
    Z = np.linalg.solve(M[ok], r[ok][..., None])[..., 0]
    scale = max(1.0, np.abs(np.concatenate([b_eq, h])).max(initial=0.0))
    feas = np.all(G @ Z.T <= h[:, None] + tol * scale, axis=0)
    if me:
        feas &= np.all(np.abs(A_eq @ Z.T - b_eq[:, None]) <= tol * scale, axis=0)
    if not feas.any():
        return None
    vals = Z[feas] @ c
    i = int(np.argmin(vals))
    best = (float(vals[i]), Z[feas][i])
    return best


def milp_enumeration(c, A_eq, b_eq, A_ub, b_ub, lower, upper, binaries):
    """Exhaustive 0/1 assignment; each restricted LP by vertex enumeration.

    Binaries are substituted out, so the enumeration runs over the
    continuous variables only.
    """
    c = np.asarray(c, float)
    n = c.size
    A_eq = np.asarray(A_eq, float).reshape(-1, n)
    A_ub = np.asarray(A_ub, float).reshape(-1, n)
    b_eq = np.asarray(b_eq, float).ravel()
    b_ub = np.asarray(b_ub, float).ravel()
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    bins = list(binaries)
    cont = [j for j in range(n) if j not in set(bins)]
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=len(bins)):
        u = np.array(bits)
        fixed = float(c[bins] @ u)
        if not cont:
            ok = np.all(A_ub[:, bins] @ u <= b_ub + 1e-9) and np.allclose(A_eq[:, bins] @ u, b_eq)
            res = (fixed, np.zeros(0)) if ok else None
        else:
            res = vertex_enumeration(c[cont], A_eq[:, cont], b_eq - A_eq[:, bins] @ u,
                                     A_ub[:, cont], b_ub - A_ub[:, bins] @ u,
                                     lower[cont], upper[cont])
            if res is not None:
                res = (res[0] + fixed, res[1])
        if res is not None and (best is None or res[0] < best[0]):
            best = res
    return best


def violated_constraints(case, c_s, p_g, theta, alpha, gamma, phi_min, phi_max, rho_min, rho_max,
                         tol=1e-5, complementarity=True):
    """Names of every original single-level constraint violated beyond ``tol``.

    Written bus by bus and line by line, without the package's matrices.
    """
    bad = []
    pos = {b: i for i, b in enumerate(case.buses)}
    psi = np.asarray(theta) * case.base_mva
    gens = case.generators
    if c_s < gens[case.strategic_gen].cost - tol or c_s > 10 * max(g.cost for g in gens) + tol:
        bad.append("bid bounds")
    flows = []
    for ln in case.lines:
        flows.append(ln.susceptance * (psi[pos[ln.from_bus]] - psi[pos[ln.to_bus]]))
    for b in case.buses:
        inj = sum(p_g[i] for i, g in enumerate(gens) if g.bus == b)
        out = sum(f for f, ln in zip(flows, case.lines) if ln.from_bus == b)
        inn = sum(f for f, ln in zip(flows, case.lines) if ln.to_bus == b)
        if abs(inj - out + inn - case.loads[pos[b]]) > tol:
            bad.append(f"balance {b}")
    if abs(psi[pos[case.ref_bus]]) > tol:
        bad.append("reference angle")
    for i, g in enumerate(gens):
        if p_g[i] < g.p_min - tol or p_g[i] > g.p_max + tol:
            bad.append(f"gen limit {i}")
        if phi_min[i] < -tol or phi_max[i] < -tol:
            bad.append(f"gen dual sign {i}")
        cost = c_s if i == case.strategic_gen else g.cost
        # dL/dP_i = c_i - alpha_bus - phi_min + phi_max
        if abs(cost - alpha[pos[g.bus]] - phi_min[i] + phi_max[i]) > tol * max(1.0, cost):
            bad.append(f"stationarity gen {i}")
        if complementarity:
            if min(phi_min[i], p_g[i] - g.p_min) > tol or min(phi_max[i], g.p_max - p_g[i]) > tol:
                bad.append(f"complementarity gen {i}")
    for k, (ln, f) in enumerate(zip(case.lines, flows)):
        if abs(f) > ln.flow_limit + tol:
            bad.append(f"flow limit {k}")
        if rho_min[k] < -tol or rho_max[k] < -tol:
            bad.append(f"flow dual sign {k}")
        if complementarity:
            if min(rho_min[k], ln.flow_limit + f) > tol or min(rho_max[k], ln.flow_limit - f) > tol:
                bad.append(f"complementarity line {k}")
    # dL/dpsi_b: alpha terms from the flow expressions, rho terms, gamma at the reference
    for b in case.buses:
        val = 0.0
        for ln, rmin, rmax, a_k in zip(case.lines, rho_min, rho_max, range(len(case.lines))):
            sign = 1.0 if ln.from_bus == b else (-1.0 if ln.to_bus == b else 0.0)
            if sign == 0.0:
                continue
            dflow = sign * ln.susceptance
            val += dflow * (alpha[pos[ln.from_bus]] - alpha[pos[ln.to_bus]])
            val += dflow * (rmax - rmin)
        if b == case.ref_bus:
            val -= gamma
        if abs(val) > tol * max(1.0, float(np.max(np.abs(alpha)))):
            bad.append(f"stationarity angle {b}")
    return bad


def grid_profit(case, grid):
    """Best strategic profit over a bid grid by repeated market clearing (lowest bid on ties)."""
    from activebilevel.dcopf import solve_dcopf

    best = (-np.inf, None)
    for c in grid:
        p = solve_dcopf(case, float(c)).strategic_profit(case)
        if best[1] is None or p > best[0] + 1e-9 * max(1.0, abs(best[0])):
            best = (p, float(c))
    return best
