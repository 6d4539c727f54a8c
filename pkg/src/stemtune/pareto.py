"""Pareto dominance, front extraction and exact two-objective hypervolume.

All objectives are maximized.
"""

from __future__ import annotations

import numpy as np

REFERENCE_MARGIN = 0.1


def _vec(p):
    return np.asarray(getattr(p, "as_array", lambda: p)(), dtype=float)


def dominates(a, b):
    """True iff ``a`` is at least as good as ``b`` everywhere and better somewhere."""
    a, b = _vec(a), _vec(b)
    return bool(np.all(a >= b) and np.any(a > b))


def pareto_front(points):
    """Indices (ascending) of the non-dominated rows of an (n, 2) array.

    Exact duplicates of a front point are all kept.
    """
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(P)
    if n == 0:
        return np.array([], dtype=int)
    order = np.lexsort((-P[:, 1], -P[:, 0]))
    keep = np.zeros(n, dtype=bool)
    best_prev = -np.inf  # max f2 over points with strictly larger f1
    i = 0
    while i < n:
        f1 = P[order[i], 0]
        j = i
        while j < n and P[order[j], 0] == f1:
            j += 1
        group = order[i:j]
        group_max = P[group[0], 1]
        for k in group:
            f2 = P[k, 1]
            keep[k] = f2 > best_prev and f2 == group_max
        best_prev = max(best_prev, group_max)
        i = j
    return np.flatnonzero(keep)


def hypervolume(front, ref):
    """Area dominated by ``front`` and bounded below by ``ref``."""
    P = np.asarray(front, dtype=float).reshape(-1, 2)
    ref = np.asarray(ref, dtype=float)
    P = P[np.all(P > ref, axis=1)]
    if len(P) == 0:
        return 0.0
    order = np.lexsort((-P[:, 1], -P[:, 0]))
    f1 = P[order, 0]
    f2 = np.maximum.accumulate(P[order, 1])
    widths = f1 - np.append(f1[1:], ref[0])
    return float(np.sum(widths * (f2 - ref[1])))


def _sorted_front(front, ref):
    P = np.asarray(front, dtype=float).reshape(-1, 2)
    P = P[np.all(P > ref, axis=1)]
    P = P[pareto_front(P)]
    return P[np.lexsort((-P[:, 1], -P[:, 0]))]


def hvi_batch(front, ref, candidates):
    """Hypervolume improvement of each candidate row over ``front``."""
    ref = np.asarray(ref, dtype=float)
    Y = np.asarray(candidates, dtype=float).reshape(-1, 2)
    P = _sorted_front(front, ref)
    box = np.maximum(Y[:, 0] - ref[0], 0.0) * np.maximum(Y[:, 1] - ref[1], 0.0)
    if len(P) == 0:
        return box
    # Area of [ref, y] already dominated: hypervolume of the front clipped at y.
    c1 = np.maximum(np.minimum(P[None, :, 0], Y[:, None, 0]), ref[0])
    c2 = np.maximum(np.minimum(P[None, :, 1], Y[:, None, 1]), ref[1])
    nxt = np.concatenate([c1[:, 1:], np.full((len(Y), 1), ref[0])], axis=1)
    covered = np.sum((c1 - nxt) * (c2 - ref[1]), axis=1)
    out = np.maximum(box - covered, 0.0)
    weakly_dominated = np.any(np.all(P[None, :, :] >= Y[:, None, :], axis=2), axis=1)
    out[weakly_dominated | np.any(Y <= ref, axis=1)] = 0.0
    return out


def hvi(front, ref, candidate):
    return float(hvi_batch(front, ref, _vec(candidate)[None, :])[0])


def reference_point(values, margin=REFERENCE_MARGIN):
    """Component-wise minimum minus ``margin`` times the observed range."""
    Y = np.asarray(values, dtype=float).reshape(-1, 2)
    lo = Y.min(axis=0)
    span = Y.max(axis=0) - lo
    fallback = np.where(np.abs(lo) > 0, np.abs(lo), 1.0)
    span = np.where(span > 0, span, fallback)
    return lo - margin * span


class ParetoArchive:
    """Evaluated points, their non-dominated subset and hypervolume.

    The reference point is only moved when a new observation falls on or
    below it, which keeps the hypervolume non-decreasing.
    """

    def __init__(self, margin=REFERENCE_MARGIN):
        self.margin = margin
        self.X = []
        self.Y = np.empty((0, 2))
        self.front = np.array([], dtype=int)
        self.ref = None
        self.hv = 0.0

    def __len__(self):
        return len(self.Y)

    def add(self, x, y):
        y = _vec(y)
        self.X.append(np.asarray(x, dtype=float))
        self.Y = np.vstack([self.Y, y])
        if self.ref is None or np.any(y <= self.ref):
            self.ref = reference_point(self.Y, self.margin)
        self.front = pareto_front(self.Y)
        self.hv = hypervolume(self.Y[self.front], self.ref)
        return self.hv

    @property
    def front_values(self):
        return self.Y[self.front]

    def on_front(self):
        mask = np.zeros(len(self.Y), dtype=bool)
        mask[self.front] = True
        return mask
