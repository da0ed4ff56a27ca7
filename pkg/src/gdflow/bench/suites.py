"""Seeded batteries of property checks behind `gdflow verify` and bench configs."""
from __future__ import annotations

import os

import numpy as np

from .. import verify as V
from ..envs import Matroid
from ..policies import GdPolicy
from ..residual import RemainingState, ResidualConfig
from ..sim import SimConfig, offline_opt_fractional, simulate
from .generate import GeneratorSpec, generate

SUITES = ("supermodularity", "gs", "ls", "potential", "rate")
TOL_ENV = "GDFLOW_TOL"
DEFAULT_TOL = 1e-6


def global_tolerance():
    """Tolerance from the GDFLOW_TOL environment variable, else 1e-6."""
    raw = os.environ.get(TOL_ENV)
    if raw is None or raw == "":
        return DEFAULT_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise ValueError(f"{TOL_ENV} must be a number, got {raw!r}") from None
    if not tol >= 0:
        raise ValueError(f"{TOL_ENV} must be >= 0")
    return tol


def _state(inst):
    return RemainingState.fresh(inst)


def supermodularity_suite(seed, tol):
    out = []
    inst = generate(GeneratorSpec("single_machine", 5, seed, {"weights": (0.5, 2.0)}))
    out.append(("single_machine_integral",
                V.check_supermodularity(inst.env, _state(inst), tol, ResidualConfig(mode="integral"))))
    inst = generate(GeneratorSpec("unrelated", 4, seed))
    out.append(("unrelated_matching",
                V.check_supermodularity(inst.env, _state(inst), tol, ResidualConfig(mode="integral"))))
    interval = ResidualConfig(method="interval")
    for kind, n in (("matroid_uniform", 4), ("matroid_partition", 4), ("genflow_dag", 3)):
        inst = generate(GeneratorSpec(kind, n, seed, {"weights": (0.5, 2.0), "integer": True,
                                                      "sizes": (1, 3)}))
        out.append((f"{kind}_interval", V.check_supermodularity(inst.env, _state(inst), tol, interval)))
    return out, []


def gs_suite(seed, tol):
    rng = np.random.default_rng(seed)
    n = 5
    kinds = ("uniform", "partition", "graphic")
    kind = kinds[seed % 3]
    if kind == "uniform":
        M = Matroid("uniform", rank=int(rng.integers(1, n)))
    elif kind == "partition":
        M = Matroid("partition", blocks=[int(b) for b in rng.integers(0, 2, n)],
                    capacities=[int(c) for c in rng.integers(1, 3, 2)])
    else:
        M = Matroid("graphic", edges=[tuple(int(v) for v in rng.choice(4, 2, replace=False)) for _ in range(n)])
    out = [(f"matroid_rank_{kind}", V.check_gs(V.matroid_rank_valuation(M, rng.uniform(0.1, 2, n)), n, tol)),
           ("matching", V.check_gs(V.matching_valuation(rng.uniform(0, 2, (n, 3))), n, tol))]
    inc = np.sort(rng.uniform(0, 1, n))[::-1]
    out.append(("symmetric_concave", V.check_gs(V.symmetric_concave_valuation(np.r_[0, np.cumsum(inc)]), n, tol)))
    sanity = V.check_gs(V.matroid_intersection_valuation([0, 0, 1, 1], [0, 1, 0, 1]), 4, tol)
    return out, [("matroid_intersection_witness", sanity)]


def ls_suite(seed, tol):
    inst = generate(GeneratorSpec("speedup", 3, seed))
    out = []
    for j in range(inst.n):
        out.append((f"ls_job{j}", V.check_ls_demand(V.speedup_demand_oracle(inst.env, j), inst.env.D, tolerance=tol)))
        out.append((f"scaling_job{j}", V.check_demand_scaling(inst.env, j, tolerance=tol)))
        out.append((f"monotone_job{j}", V.check_price_monotonicity(inst.env, j, tolerance=tol)))
    return out, [("min_valuation_violation", V.check_ls_demand(V.min_valuation_demand, 2, tolerance=tol))]


def potential_suite(seed, tol):
    out = []
    for kind in ("single_machine", "matroid_uniform"):
        inst = generate(GeneratorSpec(kind, 4, seed, {"weights": (0.5, 2.0)}))
        _, trO = offline_opt_fractional(inst)
        for eps in (0.5, 1.0):
            trA, _ = simulate(inst, GdPolicy("fractional"), SimConfig(speed=1 + eps))
            rep = V.potential_monitor(trA, trO, inst, eps, tolerance=tol, drift_tolerance=max(tol, 1e-5))
            pr = V.PropertyReport(f"potential_{kind}_eps{eps}")
            for t, d in rep.event_deltas:
                pr.record(d, tol, kind="event", t=t)
            for t, dd, r in rep.drift:
                pr.record(r, rep.drift_tolerance, kind="drift", t=t, delta=dd)
            pr.record(-rep.margin, 0.0, kind="integrated", int_wA=rep.int_wA, int_wO=rep.int_wO)
            out.append((pr.name, pr))
    return out, []


def rate_suite(seed, tol):
    out = []
    inst = generate(GeneratorSpec("single_machine", 5, seed, {"integer": True, "sizes": (1, 4)}))
    tr, _ = simulate(inst, GdPolicy("integral"), SimConfig())
    out.append(("single_integral", V.gd_rate_report(tr, inst, "integral", tolerance=1e-4)))
    inst = generate(GeneratorSpec("matroid_partition", 4, seed, {"weights": (0.5, 2.0)}))
    tr, _ = simulate(inst, GdPolicy("fractional"), SimConfig(speed=1.5))
    out.append(("matroid_fractional", V.gd_rate_report(tr, inst, "fractional", tolerance=1e-4)))
    inst = generate(GeneratorSpec("unrelated", 4, seed))
    tr, _ = simulate(inst, GdPolicy("integral"), SimConfig(speed=1.0))
    out.append(("unrelated_matching", V.gd_rate_report(tr, inst, "matching", tolerance=1e-4)))
    return out, []


_RUNNERS = {"supermodularity": supermodularity_suite, "gs": gs_suite, "ls": ls_suite,
            "potential": potential_suite, "rate": rate_suite}


def run_suite(name, seed, tol=None):
    """-> (ok, list of report dicts). Sanity reports must find a violation."""
    if name not in _RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {list(SUITES)}")
    tol = global_tolerance() if tol is None else tol
    reports, sanity = _RUNNERS[name](seed, tol)
    ok = True
    out = []
    for label, rep in reports:
        d = {"suite": name, "check": label, "expect": "pass", **rep.to_dict()}
        d["passed"] = rep.ok
        ok &= rep.ok
        out.append(d)
    for label, rep in sanity:
        d = {"suite": name, "check": label, "expect": "violation", **rep.to_dict()}
        d["passed"] = not rep.ok
        ok &= not rep.ok
        out.append(d)
    return ok, out

