"""Backend dispatch: own simplex (default) or HiGHS through highspy."""
from __future__ import annotations

import numpy as np

from .fast import highs_lp
from .model import GE, LE, LinearProgram, LpSolution
from .simplex import simplex_solve

def highs_solve(lp: LinearProgram) -> LpSolution:
    c = -lp.c if lp.maximize else lp.c
    senses = np.array(lp.senses)
    lo = np.where(senses == LE, -np.inf, lp.b)
    up = np.where(senses == GE, np.inf, lp.b)
    status, x, obj, y = highs_lp(c, lp.A, lo, up, lp.lower, lp.upper)
    if status != "optimal":
        if status == "error":
            raise RuntimeError("HiGHS failed")
        return LpSolution(status)
    if lp.maximize:
        y = -y
    return LpSolution("optimal", x, y, float(lp.c @ x), {"backend": "highs"})


def solve(lp: LinearProgram, backend="simplex") -> LpSolution:
    if backend == "simplex":
        return simplex_solve(lp)
    if backend == "highs":
        return highs_solve(lp)
    raise ValueError(f"unknown LP backend {backend!r}")
