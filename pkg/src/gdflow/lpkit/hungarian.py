"""Hungarian algorithm with row/column potentials, O(n^2 m)."""
from __future__ import annotations

import numpy as np


def hungarian(cost):
    """Min-cost assignment of every row to a distinct column (rows <= cols).

    Returns (assignment, total) where assignment[i] is the column of row i.
    """
    C = np.asarray(cost, float)
    if C.ndim != 2:
        raise ValueError("cost must be a 2-d matrix")
    n, m = C.shape
    if n == 0:
        return np.zeros(0, int), 0.0
    if n > m:
        raise ValueError("hungarian needs rows <= columns")
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, int)  # p[col] = matched row (1-based), 0 = free
    way = np.zeros(m + 1, int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, INF)
        used = np.zeros(m + 1, bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = C[i0 - 1] - u[i0] - v[1:]
            upd = free & (cur < minv[1:])
            minv[1:][upd] = cur[upd]
            way[1:][upd] = j0
            cand = np.where(free, minv[1:], INF)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            if not np.isfinite(delta):
                raise ValueError("no finite assignment exists")
            used_idx = np.nonzero(used)[0]
            u[p[used_idx]] += delta
            v[used_idx] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = np.zeros(n, int)
    for j in range(1, m + 1):
        if p[j]:
            assign[p[j] - 1] = j - 1
    total = float(C[np.arange(n), assign].sum())
    return assign, total
