"""Split search and tree traversal for the CART classifier.

A split is scored by ``sum(left**2)/n_left + sum(right**2)/n_right`` over the
class counts, which is ``n * (1 - weighted Gini)``; larger is better.  The
counts are integers, so both backends compute bit-identical scores.  Ties keep
the first candidate found: lower feature index, then lower threshold.
"""
import numpy as np

from .._accel import njit, use_numba

REL_EPS = 1e-12


@njit
def _best_split_nb(X, y, idx, n_classes, min_leaf):
    n = idx.size
    F = X.shape[1]
    total = np.zeros(n_classes)
    for k in range(n):
        total[y[idx[k]]] += 1.0
    best_f = -1
    best_t = 0.0
    best_score = -1.0
    left = np.empty(n_classes)
    vals = np.empty(n)
    for f in range(F):
        for k in range(n):
            vals[k] = X[idx[k], f]
        order = np.argsort(vals, kind="mergesort")
        left[:] = 0.0
        sq_left = 0.0
        sq_right = 0.0
        for c in range(n_classes):
            sq_right += total[c] * total[c]
        for k in range(n - 1):
            c = y[idx[order[k]]]
            # move one sample of class c from right to left
            r = total[c] - left[c]
            sq_right -= 2.0 * r - 1.0
            sq_left += 2.0 * left[c] + 1.0
            left[c] += 1.0
            nl = k + 1
            nr = n - nl
            v0 = vals[order[k]]
            v1 = vals[order[k + 1]]
            if v1 <= v0 or nl < min_leaf or nr < min_leaf:
                continue
            score = sq_left / nl + sq_right / nr
            if score > best_score * (1.0 + REL_EPS):
                best_score = score
                best_f = f
                best_t = v0 + 0.5 * (v1 - v0)
    return best_f, best_t, best_score


def _best_split_np(X, y, idx, n_classes, min_leaf):
    n = idx.size
    Xs = X[idx]
    ys = y[idx]
    total = np.bincount(ys, minlength=n_classes).astype(float)
    best_f, best_t, best_score = -1, 0.0, -1.0
    if n < 2:
        return best_f, best_t, best_score
    onehot = np.zeros((n, n_classes))
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    size_ok = (nl >= min_leaf) & (nr >= min_leaf)
    for f in range(X.shape[1]):
        order = np.argsort(Xs[:, f], kind="mergesort")
        vals = Xs[order, f]
        onehot[:] = 0.0
        onehot[np.arange(n), ys[order]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        right = total - left
        score = (left * left).sum(axis=1) / nl + (right * right).sum(axis=1) / nr
        ok = size_ok & (vals[1:] > vals[:-1])
        if not ok.any():
            continue
        cand = np.flatnonzero(ok)
        # first maximum along the sweep, mirroring the sequential update rule
        for k in cand:
            if score[k] > best_score * (1.0 + REL_EPS):
                best_score = score[k]
                best_f = f
                best_t = vals[k] + 0.5 * (vals[k + 1] - vals[k])
    return best_f, best_t, best_score


def best_split(X, y, idx, n_classes, min_leaf):
    """Best (feature, threshold, score) over ``X[idx]``; feature -1 when no split is allowed."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    fn = _best_split_nb if use_numba() else _best_split_np
    f, t, s = fn(X, y, idx, int(n_classes), int(min_leaf))
    return int(f), float(t), float(s)


@njit
def _apply_nb(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


def _apply_np(X, feature, threshold, left, right):
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        r = rows[active]
        nd = node[r]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return node


def apply(X, feature, threshold, left, right):
    """Leaf index reached by each row of ``X``."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    fn = _apply_nb if use_numba() else _apply_np
    return fn(X, np.asarray(feature, dtype=np.int64), np.asarray(threshold, dtype=np.float64),
              np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64))
