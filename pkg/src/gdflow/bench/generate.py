"""Seeded random instance generators for every environment family."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import Instance, Job, validate_instance
from ..envs import (Curve, GeneralizedFlow, IdenticalMachines, Matroid, SingleMachine,
                    SpeedupCurves, UnrelatedMachines)

KINDS = ("single_machine", "identical", "unrelated", "matroid_uniform", "matroid_partition",
         "matroid_graphic", "genflow_dag", "speedup")

DEFAULTS = {
    "sizes": (0.5, 4.0),
    "weights": (1.0, 1.0),
    "releases": (0.0, 8.0),
    "integer": False,
    "machines": 2,
    "rates": (0.5, 2.0),
    "rank": 2,
    "blocks": 2,
    "graph_vertices": 4,
    "relays": 2,
    "capacities": (0.5, 2.0),
    "gains": (0.5, 1.5),
    "resources": 3,
    "pieces": 2,
}


@dataclass
class GeneratorSpec:
    kind: str
    n: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def get(self, key):
        return self.params.get(key, DEFAULTS[key])

    def check(self):
        errs = []
        if self.kind not in KINDS:
            errs.append(f"unknown generator kind {self.kind!r}")
        if self.n < 0:
            errs.append("n must be >= 0")
        unknown = set(self.params) - set(DEFAULTS)
        if unknown:
            errs.append(f"unknown generator parameters {sorted(unknown)}")
        for key in ("sizes", "rates", "capacities", "gains"):
            lo, hi = self.get(key)
            if not 0 < lo <= hi:
                errs.append(f"{key} range must be positive")
        lo, hi = self.get("weights")
        if not 0 <= lo <= hi:
            errs.append("weights range must be nonnegative")
        lo, hi = self.get("releases")
        if not 0 <= lo <= hi:
            errs.append("releases range must be nonnegative")
        return errs


def _r3(v):
    return float(np.round(v, 3))


def _jobs(spec, rng):
    integer = spec.get("integer")
    out = []
    for j in range(spec.n):
        if integer:
            p = float(rng.integers(int(np.ceil(spec.get("sizes")[0])), int(spec.get("sizes")[1]) + 1))
            r = float(rng.integers(int(spec.get("releases")[0]), int(spec.get("releases")[1]) + 1))
            lo, hi = spec.get("weights")
            w = float(rng.integers(int(lo), int(hi) + 1)) if lo != hi else float(lo)
        else:
            p = max(_r3(rng.uniform(*spec.get("sizes"))), 1e-3)
            r = _r3(rng.uniform(*spec.get("releases")))
            lo, hi = spec.get("weights")
            w = _r3(rng.uniform(lo, hi)) if lo != hi else float(lo)
        out.append(Job(j, r, p, w))
    return out


def _genflow(spec, rng):
    n, L = spec.n, spec.get("relays")
    # nodes: jobs 0..n-1, relays n..n+L-1, sink n+L
    sink = n + L
    arcs = []
    for j in range(n):
        k = int(rng.integers(1, min(2, L) + 1))
        for v in rng.choice(L, size=k, replace=False):
            arcs.append((j, n + int(v), _r3(rng.uniform(*spec.get("capacities"))),
                         _r3(rng.uniform(*spec.get("gains")))))
    for v in range(L):
        arcs.append((n + v, sink, _r3(rng.uniform(*spec.get("capacities"))), 1.0))
    excess = [_r3(rng.uniform(*spec.get("capacities"))) for _ in range(n)] + [0.0] * L + [np.inf]
    return GeneralizedFlow(n + L + 1, excess, arcs, list(range(n)))


def _speedup(spec, rng):
    n, D, P = spec.n, spec.get("resources"), spec.get("pieces")
    groups, curves = [], []
    coef = np.round(rng.uniform(0.2, 1.0, (n, D)), 3)
    for j in range(n):
        perm = [int(d) for d in rng.permutation(D)]
        cut = int(rng.integers(1, D + 1))
        gs = [g for g in (perm[:cut], perm[cut:]) if g]
        groups.append(gs)
        cs = []
        for _ in gs:
            slopes = np.sort(np.round(rng.uniform(0.2, 1.5, P), 3))[::-1]
            lengths = np.round(rng.uniform(0.2, 1.0, P), 3)
            cs.append(Curve(lengths, slopes))
        curves.append(cs)
    return SpeedupCurves(D, groups, coef, curves)


def make_env(spec, rng):
    kind, n = spec.kind, spec.n
    if kind == "single_machine":
        return SingleMachine()
    if kind == "identical":
        return IdenticalMachines(int(spec.get("machines")))
    if kind == "unrelated":
        rates = np.round(rng.uniform(*spec.get("rates"), (n, int(spec.get("machines")))), 3)
        return UnrelatedMachines(rates)
    if kind == "matroid_uniform":
        return Matroid("uniform", rank=int(spec.get("rank")))
    if kind == "matroid_partition":
        B = int(spec.get("blocks"))
        caps = [int(c) for c in rng.integers(1, 3, B)]
        return Matroid("partition", blocks=[int(b) for b in rng.integers(0, B, n)], capacities=caps)
    if kind == "matroid_graphic":
        V = int(spec.get("graph_vertices"))
        edges = [tuple(int(a) for a in rng.choice(V, 2, replace=False)) for _ in range(n)]
        return Matroid("graphic", edges=edges)
    if kind == "genflow_dag":
        return _genflow(spec, rng)
    return _speedup(spec, rng)


def generate(spec: GeneratorSpec) -> Instance:
    errs = spec.check()
    if errs:
        raise ValueError("; ".join(errs))
    rng = np.random.default_rng(spec.seed)
    jobs = _jobs(spec, rng)
    inst = Instance(jobs, make_env(spec, rng))
    errs = validate_instance(inst)
    if errs:
        raise ValueError("; ".join(errs))
    return inst
