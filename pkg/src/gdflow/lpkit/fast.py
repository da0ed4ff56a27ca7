"""Thin direct interface to HiGHS for the many small LPs of the residual solver."""
from __future__ import annotations

import threading

import highspy
import numpy as np
import scipy.sparse as sp

INF = highspy.kHighsInf
_local = threading.local()


def _solver():
    h = getattr(_local, "h", None)
    if h is None:
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("primal_feasibility_tolerance", 1e-10)
        h.setOptionValue("dual_feasibility_tolerance", 1e-10)
        _local.h = h
    return h


def _fin(a, inf):
    a = np.asarray(a, float).copy()
    a[~np.isfinite(a)] = inf
    return a


def highs_lp(c, A, row_lo, row_up, col_lo, col_up):
    """min c.x  s.t. row_lo <= A x <= row_up, col_lo <= x <= col_up.

    Returns (status, x, objective, row_duals) with duals = d obj / d bound.
    status is one of optimal / infeasible / unbounded / error.
    """
    A = sp.csr_matrix(A)
    m, n = A.shape
    lp = highspy.HighsLp()
    lp.num_col_ = n
    lp.num_row_ = m
    lp.col_cost_ = np.asarray(c, float)
    lp.col_lower_ = _fin(col_lo, -INF) if n else np.zeros(0)
    lp.col_upper_ = _fin(col_up, INF) if n else np.zeros(0)
    lp.row_lower_ = np.where(np.isfinite(row_lo), row_lo, -INF).astype(float)
    lp.row_upper_ = np.where(np.isfinite(row_up), row_up, INF).astype(float)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data.astype(float)
    h = _solver()
    h.clearModel()
    h.passModel(lp)
    h.run()
    st = h.getModelStatus()
    if st == highspy.HighsModelStatus.kOptimal:
        sol = h.getSolution()
        x = np.array(sol.col_value)
        return "optimal", x, float(np.asarray(c, float) @ x), np.array(sol.row_dual)
    if st == highspy.HighsModelStatus.kInfeasible:
        return "infeasible", None, np.nan, None
    if st in (highspy.HighsModelStatus.kUnbounded, highspy.HighsModelStatus.kUnboundedOrInfeasible):
        return "unbounded", None, np.nan, None
    return "error", None, np.nan, None


class WarmLp:
    """A fixed constraint matrix solved repeatedly with new costs and column
    bounds; HiGHS warm starts from the previous basis."""

    def __init__(self, A, row_lo, row_up, n_cols=None):
        A = sp.csr_matrix(A)
        m, n = A.shape
        self.n = n if n_cols is None else n_cols
        self.h = highspy.Highs()
        self.h.setOptionValue("output_flag", False)
        self.h.setOptionValue("primal_feasibility_tolerance", 1e-10)
        self.h.setOptionValue("dual_feasibility_tolerance", 1e-10)
        lp = highspy.HighsLp()
        lp.num_col_ = self.n
        lp.num_row_ = m
        lp.col_cost_ = np.zeros(self.n)
        lp.col_lower_ = np.zeros(self.n)
        lp.col_upper_ = np.full(self.n, INF)
        lp.row_lower_ = _fin(row_lo, -INF)
        lp.row_upper_ = _fin(row_up, INF)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
        lp.a_matrix_.start_ = A.indptr.astype(np.int32)
        lp.a_matrix_.index_ = A.indices.astype(np.int32)
        lp.a_matrix_.value_ = A.data.astype(float)
        self.h.passModel(lp)
        self.idx = np.arange(self.n, dtype=np.int32)

    def solve(self, c, col_lo, col_up):
        c = np.asarray(c, float)
        self.h.changeColsCost(self.n, self.idx, c)
        self.h.changeColsBounds(self.n, self.idx, _fin(col_lo, -INF), _fin(col_up, INF))
        self.h.run()
        st = self.h.getModelStatus()
        if st == highspy.HighsModelStatus.kInfeasible:
            return "infeasible", None, np.nan
        if st != highspy.HighsModelStatus.kOptimal:
            return "error", None, np.nan
        x = np.array(self.h.getSolution().col_value)
        return "optimal", x, float(c @ x)
