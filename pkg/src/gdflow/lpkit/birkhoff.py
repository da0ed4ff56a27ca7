"""Birkhoff-von Neumann decomposition of doubly sub-stochastic matrices."""
from __future__ import annotations

import numpy as np

from .hungarian import hungarian

ZERO = 1e-14


def _pad(A):
    """Embed A into a 2n x 2n matrix with all line sums equal to max line sum."""
    n = A.shape[0]
    r, c = A.sum(1), A.sum(0)
    L = max(r.max(initial=0), c.max(initial=0))
    B = np.zeros((2 * n, 2 * n))
    B[:n, :n] = A
    B[:n, n:] = np.diag(L - r)
    B[n:, :n] = np.diag(L - c)
    B[n:, n:] = A.T
    return B, L


def birkhoff_decompose(matrix, tol=1e-9):
    """Return [(weight, match)] with match[i] = column of row i, or -1 if idle.

    Weights sum to the largest line sum of `matrix`; recomposition
    reproduces `matrix` entrywise.
    """
    A = np.array(matrix, float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("birkhoff_decompose needs a square matrix")
    if np.any(A < -tol):
        raise ValueError("entries must be nonnegative")
    A = np.clip(A, 0.0, None)
    n = A.shape[0]
    if n == 0:
        return []
    r, c = A.sum(1), A.sum(0)
    if r.max() > 1 + tol or c.max() > 1 + tol:
        raise ValueError("row/column sums must be <= 1")
    L = max(r.max(), c.max())
    if L <= ZERO:
        return []
    if np.allclose(r, L, atol=1e-12) and np.allclose(c, L, atol=1e-12):
        B = A.copy()
    else:
        B, L = _pad(A)
    N = B.shape[0]
    comps = {}
    mass = L
    for _ in range(N * N + 1):
        if mass <= 1e-12:
            break
        support = B > ZERO
        cost = np.where(support, -B, 1e6)
        perm, _ = hungarian(cost)
        picked = B[np.arange(N), perm]
        if np.any(picked <= ZERO):
            break  # float drift left a mass too small to cover
        theta = picked.min()
        B[np.arange(N), perm] -= theta
        B[B <= ZERO] = 0.0
        mass -= theta
        match = tuple(int(perm[i]) if perm[i] < n else -1 for i in range(n))
        comps[match] = comps.get(match, 0.0) + theta
    return [(w, np.array(m)) for m, w in comps.items()]


def recompose(components, n):
    M = np.zeros((n, n))
    for w, match in components:
        for i, j in enumerate(match):
            if j >= 0:
                M[i, j] += w
    return M
