"""Dense two-phase primal simplex with Bland's anti-cycling rule.

Every row receives an artificial column, so the artificial block of the
tableau always holds the current basis inverse; duals fall out of it.
"""
from __future__ import annotations

import numpy as np

from .model import EQ, GE, LE, LinearProgram, LpSolution

FEAS_TOL = 1e-8
PIV_TOL = 1e-10


def _standard_form(lp: LinearProgram):
    A = lp.A.toarray()
    m, n = A.shape
    lo, up = lp.lower, lp.upper
    b = lp.b - A @ lo
    rows, rhs, kinds = [A[i] for i in range(m)], list(b), list(lp.senses)
    bounded = [j for j in range(n) if np.isfinite(up[j])]
    for j in bounded:
        r = np.zeros(n)
        r[j] = 1.0
        rows.append(r)
        rhs.append(up[j] - lo[j])
        kinds.append(LE)
    M = len(rows)
    n_slack = sum(k != EQ for k in kinds)
    T = np.zeros((M, n + n_slack))
    if M:
        T[:, :n] = np.array(rows)
    s = n
    for i, k in enumerate(kinds):
        if k == LE:
            T[i, s] = 1.0
            s += 1
        elif k == GE:
            T[i, s] = -1.0
            s += 1
    rhs = np.array(rhs, float)
    flip = np.where(rhs < 0, -1.0, 1.0)
    T *= flip[:, None]
    rhs *= flip
    return T, rhs, flip, n


class _Tableau:
    def __init__(self, A, b):
        m, N = A.shape
        self.m, self.N = m, N
        self.T = np.hstack([A, np.eye(m), b[:, None]])
        self.basis = list(range(N, N + m))

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.nonzero(np.abs(col) > 0)[0]
        if len(nz):
            T[nz] -= np.outer(col[nz], T[r])
        self.basis[r] = j

    def run(self, cost, max_iter):
        """Minimise cost over the current tableau; artificials may not enter."""
        T, N = self.T, self.N
        for it in range(max_iter):
            cb = cost[self.basis]
            d = cost[:N] - cb @ T[:, :N]
            cand = np.nonzero(d < -1e-9)[0]
            if len(cand) == 0:
                return "optimal", it
            j = int(cand[0])  # Bland: lowest index
            col = T[:, j]
            pos = np.nonzero(col > PIV_TOL)[0]
            if len(pos) == 0:
                return "unbounded", it
            ratios = T[pos, -1] / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12 * (1 + abs(best))]
            r = min(ties, key=lambda i: self.basis[i])
            self.pivot(int(r), j)
        raise RuntimeError("simplex iteration limit reached")


def simplex_solve(lp: LinearProgram, max_iter=50000) -> LpSolution:
    errs = lp.check()
    if errs:
        raise ValueError("; ".join(errs))
    n = lp.n_vars
    if lp.n_rows == 0 and not np.any(np.isfinite(lp.upper)):
        c = -lp.c if lp.maximize else lp.c
        if np.any(c < 0):
            return LpSolution("unbounded")
        x = lp.lower.copy()
        return LpSolution("optimal", x, np.zeros(0), float(lp.c @ x))
    A, b, flip, _ = _standard_form(lp)
    m, N = A.shape
    tab = _Tableau(A, b)

    # phase 1
    c1 = np.concatenate([np.zeros(N), np.ones(m)])
    tab.run(c1, max_iter)
    infeas = float(tab.T[:, -1] @ (np.array(tab.basis) >= N))
    if infeas > FEAS_TOL * (1 + np.abs(b).max(initial=0)):
        return LpSolution("infeasible", info={"phase1": infeas})
    for r in range(m):
        if tab.basis[r] >= N:
            row = tab.T[r, :N]
            nz = np.nonzero(np.abs(row) > 1e-9)[0]
            if len(nz):
                tab.pivot(r, int(nz[0]))

    # phase 2
    c = -lp.c if lp.maximize else lp.c
    c2 = np.concatenate([c, np.zeros(N - n), np.zeros(m)])
    status, iters = tab.run(c2, max_iter)
    if status != "optimal":
        return LpSolution(status)
    xs = np.zeros(N + m)
    xs[tab.basis] = tab.T[:, -1]
    x = lp.lower + xs[:n]
    binv = tab.T[:, N:N + m]
    y = c2[tab.basis] @ binv
    y = (y * flip)[: lp.n_rows]
    if lp.maximize:
        y = -y
    return LpSolution("optimal", x, y, float(lp.c @ x), {"iterations": iters})
