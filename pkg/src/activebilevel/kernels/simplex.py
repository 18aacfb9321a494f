"""Bounded-variable primal simplex iterations on a dense tableau.

The driver in :mod:`activebilevel.lp_core` owns factorisation, phases and
time limits; the functions here only pivot.  Both implementations follow the
same rules so that they visit the same bases:

* pricing: Dantzig (largest |reduced cost|, lowest index on ties), switching
  to Bland (lowest eligible index) after ``stall_limit`` consecutive
  degenerate steps, and back once a step makes progress;
* ratio test: two passes, first the minimum step, then among rows within
  ``tie_tol`` of it the largest pivot magnitude (Bland: lowest variable
  index).  A bound flip of the entering variable wins ties with the rows.

Return codes: 0 optimal, 1 unbounded, 2 iteration budget spent.
"""
from __future__ import annotations

import numpy as np

from .._accel import njit, use_numba

AT_LB = 0
AT_UB = 1
FREE = 2
BASIC = 3

OPTIMAL = 0
UNBOUNDED = 1
BUDGET = 2


@njit
def _iterate_nb(T, d, x, basis, state, lb, ub, max_iter, tol_d, tol_piv, tie_tol, stall_limit):
    m, n = T.shape
    inf = np.inf
    it = 0
    stall = 0
    bland = False
    while it < max_iter:
        q = -1
        direction = 0
        best = 0.0
        for j in range(n):
            s = state[j]
            if s == BASIC or lb[j] == ub[j]:
                continue
            dj = d[j]
            if dj < -tol_d and (s == AT_LB or s == FREE):
                dirj = 1
                score = -dj
            elif dj > tol_d and (s == AT_UB or s == FREE):
                dirj = -1
                score = dj
            else:
                continue
            if bland:
                q = j
                direction = dirj
                break
            if score > best:
                best = score
                q = j
                direction = dirj
        if q < 0:
            return OPTIMAL, it

        t_flip = inf
        if lb[q] > -inf and ub[q] < inf:
            t_flip = ub[q] - lb[q]

        t_min = inf
        for i in range(m):
            a = direction * T[i, q]
            p = basis[i]
            if a > tol_piv:
                if lb[p] == -inf:
                    continue
                t = (x[p] - lb[p]) / a
            elif a < -tol_piv:
                if ub[p] == inf:
                    continue
                t = (ub[p] - x[p]) / (-a)
            else:
                continue
            if t < 0.0:
                t = 0.0
            if t < t_min:
                t_min = t

        r = -1
        if t_flip <= t_min:
            step = t_flip
        else:
            step = t_min
            limit = t_min + tie_tol * (1.0 + t_min)
            best_piv = 0.0
            best_var = n
            for i in range(m):
                a = direction * T[i, q]
                p = basis[i]
                if a > tol_piv:
                    if lb[p] == -inf:
                        continue
                    t = (x[p] - lb[p]) / a
                elif a < -tol_piv:
                    if ub[p] == inf:
                        continue
                    t = (ub[p] - x[p]) / (-a)
                else:
                    continue
                if t < 0.0:
                    t = 0.0
                if t > limit:
                    continue
                if bland:
                    if p < best_var:
                        best_var = p
                        r = i
                else:
                    if abs(a) > best_piv:
                        best_piv = abs(a)
                        r = i

        if step == inf:
            return UNBOUNDED, it

        if step > 0.0:
            x[q] += direction * step
            for i in range(m):
                x[basis[i]] -= direction * T[i, q] * step

        if r < 0:
            if direction > 0:
                state[q] = AT_UB
                x[q] = ub[q]
            else:
                state[q] = AT_LB
                x[q] = lb[q]
        else:
            p = basis[r]
            if direction * T[r, q] > 0.0:
                x[p] = lb[p]
                state[p] = AT_LB
            else:
                x[p] = ub[p]
                state[p] = AT_UB
            piv = T[r, q]
            for j in range(n):
                T[r, j] /= piv
            for i in range(m):
                if i == r:
                    continue
                f = T[i, q]
                if f != 0.0:
                    for j in range(n):
                        T[i, j] -= f * T[r, j]
            f = d[q]
            if f != 0.0:
                for j in range(n):
                    d[j] -= f * T[r, j]
            for i in range(m):
                T[i, q] = 0.0
            T[r, q] = 1.0
            d[q] = 0.0
            basis[r] = q
            state[q] = BASIC

        it += 1
        if step <= 1e-12:
            stall += 1
            if stall > stall_limit:
                bland = True
        else:
            stall = 0
            bland = False
    return BUDGET, it


def _iterate_np(T, d, x, basis, state, lb, ub, max_iter, tol_d, tol_piv, tie_tol, stall_limit):
    m, n = T.shape
    it = 0
    stall = 0
    bland = False
    movable = lb != ub
    while it < max_iter:
        nonbasic = (state != BASIC) & movable
        up = nonbasic & (d < -tol_d) & ((state == AT_LB) | (state == FREE))
        down = nonbasic & (d > tol_d) & ((state == AT_UB) | (state == FREE))
        eligible = up | down
        if not eligible.any():
            return OPTIMAL, it
        if bland:
            q = int(np.argmax(eligible))
        else:
            q = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
        direction = 1 if up[q] else -1

        t_flip = ub[q] - lb[q] if np.isfinite(lb[q]) and np.isfinite(ub[q]) else np.inf
        col = direction * T[:, q]
        xb = x[basis]
        lbb = lb[basis]
        ubb = ub[basis]
        ratios = np.full(m, np.inf)
        dec = (col > tol_piv) & np.isfinite(lbb)
        inc = (col < -tol_piv) & np.isfinite(ubb)
        ratios[dec] = (xb[dec] - lbb[dec]) / col[dec]
        ratios[inc] = (ubb[inc] - xb[inc]) / (-col[inc])
        np.maximum(ratios, 0.0, out=ratios)
        t_min = ratios.min() if m else np.inf

        r = -1
        if t_flip <= t_min:
            step = t_flip
        else:
            step = t_min
            ties = np.flatnonzero(ratios <= t_min + tie_tol * (1.0 + t_min))
            if bland:
                r = int(ties[np.argmin(basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(col[ties]))])

        if step == np.inf:
            return UNBOUNDED, it

        if step > 0.0:
            x[q] += direction * step
            x[basis] -= col * step

        if r < 0:
            if direction > 0:
                state[q] = AT_UB
                x[q] = ub[q]
            else:
                state[q] = AT_LB
                x[q] = lb[q]
        else:
            p = basis[r]
            if col[r] > 0.0:
                x[p] = lb[p]
                state[p] = AT_LB
            else:
                x[p] = ub[p]
                state[p] = AT_UB
            prow = T[r] / T[r, q]
            fcol = T[:, q].copy()
            fcol[r] = 0.0
            T -= np.outer(fcol, prow)
            T[r] = prow
            d -= d[q] * prow
            T[:, q] = 0.0
            T[r, q] = 1.0
            d[q] = 0.0
            basis[r] = q
            state[q] = BASIC

        it += 1
        if step <= 1e-12:
            stall += 1
            if stall > stall_limit:
                bland = True
        else:
            stall = 0
            bland = False
    return BUDGET, it


def iterate(T, d, x, basis, state, lb, ub, max_iter, tol_d, tol_piv, tie_tol=1e-9, stall_limit=50):
    """Run at most ``max_iter`` simplex iterations in place; returns (code, iterations)."""
    fn = _iterate_nb if use_numba() else _iterate_np
    code, it = fn(T, d, x, basis, state, lb, ub, int(max_iter), float(tol_d), float(tol_piv),
                  float(tie_tol), int(stall_limit))
    return int(code), int(it)
