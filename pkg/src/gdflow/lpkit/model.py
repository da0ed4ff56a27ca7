"""LP container shared by the simplex and HiGHS backends."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<=", "=", ">="


@dataclass
class LinearProgram:
    """min/max c.x  s.t.  A x (sense) b,  lower <= x <= upper.

    A is kept as a CSR matrix; `upper` may hold +inf.
    """
    c: np.ndarray
    A: sp.csr_matrix
    senses: list
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    maximize: bool = False

    @property
    def n_vars(self):
        return len(self.c)

    @property
    def n_rows(self):
        return len(self.b)

    def check(self):
        errs = []
        if self.A.shape != (self.n_rows, self.n_vars):
            errs.append(f"A has shape {self.A.shape}, expected {(self.n_rows, self.n_vars)}")
        if len(self.senses) != self.n_rows:
            errs.append("one sense per row required")
        if any(s not in (LE, EQ, GE) for s in self.senses):
            errs.append("unknown row sense")
        if np.any(~np.isfinite(self.lower)):
            errs.append("lower bounds must be finite")
        if np.any(self.upper < self.lower):
            errs.append("upper < lower")
        return errs


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None = None
    duals: np.ndarray | None = None  # d objective / d b_i
    objective: float = float("nan")
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == "optimal"


class LpBuilder:
    """Incremental row-wise construction of a LinearProgram."""

    def __init__(self, maximize=False):
        self.maximize = maximize
        self._c, self._lo, self._up = [], [], []
        self._rows, self._cols, self._vals = [], [], []
        self._senses, self._b = [], []

    def add_var(self, cost=0.0, lower=0.0, upper=np.inf):
        self._c.append(float(cost))
        self._lo.append(float(lower))
        self._up.append(float(upper))
        return len(self._c) - 1

    def add_vars(self, k, cost=0.0, lower=0.0, upper=np.inf):
        start = len(self._c)
        cost = np.broadcast_to(np.asarray(cost, float), (k,))
        upper = np.broadcast_to(np.asarray(upper, float), (k,))
        self._c.extend(cost.tolist())
        self._lo.extend([float(lower)] * k)
        self._up.extend(upper.tolist())
        return np.arange(start, start + k)

    def add_row(self, idx, coef, sense, rhs):
        r = len(self._b)
        idx = np.asarray(idx, int)
        coef = np.broadcast_to(np.asarray(coef, float), idx.shape)
        self._rows.extend([r] * len(idx))
        self._cols.extend(idx.tolist())
        self._vals.extend(coef.tolist())
        self._senses.append(sense)
        self._b.append(float(rhs))
        return r

    def build(self) -> LinearProgram:
        n, m = len(self._c), len(self._b)
        A = sp.csr_matrix((self._vals, (self._rows, self._cols)), shape=(m, n))
        return LinearProgram(np.array(self._c), A, list(self._senses), np.array(self._b),
                             np.array(self._lo), np.array(self._up), self.maximize)


def from_dense(c, A, senses, b, lower=None, upper=None, maximize=False):
    c = np.asarray(c, float)
    A = np.atleast_2d(np.asarray(A, float)) if len(b) else np.zeros((0, len(c)))
    n = len(c)
    lower = np.zeros(n) if lower is None else np.asarray(lower, float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, float)
    if isinstance(senses, str):
        senses = [senses] * len(b)
    return LinearProgram(c, sp.csr_matrix(A), list(senses), np.asarray(b, float),
                         lower, upper, maximize)


def primal_residual(lp, x):
    """Largest violation of rows and bounds at x."""
    Ax = lp.A @ x
    viol = 0.0
    for i, s in enumerate(lp.senses):
        d = Ax[i] - lp.b[i]
        if s == LE:
            viol = max(viol, d)
        elif s == GE:
            viol = max(viol, -d)
        else:
            viol = max(viol, abs(d))
    viol = max(viol, float(np.max(lp.lower - x, initial=0.0)))
    viol = max(viol, float(np.max(x - lp.upper, initial=0.0)))
    return viol


def dual_objective(lp, y):
    """Lagrangian dual bound for multipliers y (sign convention d obj/d b).

    Bounds are dualised implicitly: each variable sits at whichever finite
    bound is cheapest under its reduced cost.
    """
    sgn = -1.0 if lp.maximize else 1.0
    c = sgn * lp.c
    yy = sgn * np.asarray(y, float)
    d = c - lp.A.T @ yy
    val = float(lp.b @ yy)
    # reduced costs within roundoff of zero count as zero
    dtol = 1e-9 * (1.0 + np.abs(c) + np.abs(lp.A.T) @ np.abs(yy))
    for j in range(lp.n_vars):
        if d[j] >= -dtol[j]:
            val += d[j] * lp.lower[j]
        elif np.isfinite(lp.upper[j]):
            val += d[j] * lp.upper[j]
        else:
            return sgn * -np.inf
    return sgn * val


def duality_gap(lp, sol):
    return abs(sol.objective - dual_objective(lp, sol.duals))
