"""Environments: the downward-closed rate polytope P and its oracles.

Every environment exposes a `RateModel`, a linear description

    P = { z : z <= M u,  G u <= h,  0 <= u <= ub }

over auxiliary variables u (machine shares, arc flows, resource fills ...).
Residual LPs are assembled from it uniformly.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import lpkit

VERTEX_CAP = 12


@dataclass
class RateModel:
    G: np.ndarray
    h: np.ndarray
    M: np.ndarray  # n_jobs x k
    ub: np.ndarray
    owner: np.ndarray  # job owning each variable, -1 if shared
    e: np.ndarray | None = None  # per-variable constant cost rate

    @property
    def k(self):
        return self.M.shape[1]

    def restrict(self, jobs_mask):
        """Upper bounds that switch off variables owned by masked-out jobs."""
        ub = self.ub.copy()
        own = self.owner >= 0
        ub[own & ~jobs_mask[np.maximum(self.owner, 0)]] = 0.0
        return ub


def _lp_max(model: RateModel, v, ub=None):
    """max v.u over the model's u-polytope (HiGHS)."""
    b = lpkit.LpBuilder(maximize=True)
    u = b.add_vars(model.k, cost=v, upper=model.ub if ub is None else ub)
    for r in range(len(model.h)):
        nz = np.nonzero(model.G[r])[0]
        if len(nz):
            b.add_row(u[nz], model.G[r, nz], lpkit.LE, model.h[r])
    sol = lpkit.solve(b.build(), backend="highs")
    return sol.objective, sol.x


class Environment:
    kind = "abstract"
    # True when max_linear has a combinatorial oracle (no LP)
    combinatorial = False

    def check(self, n):
        return []

    def rate_model(self, n) -> RateModel:
        raise NotImplementedError

    def model(self, n) -> RateModel:
        """Cached rate_model(n)."""
        cache = self.__dict__.setdefault("_models", {})
        if n not in cache:
            cache[n] = self.rate_model(n)
        return cache[n]

    def for_jobs(self, origin):
        """Environment for a job list whose k-th job is a copy of job origin[k]."""
        raise NotImplementedError

    def support(self, v, n, mask=None):
        """max v.u over the u-polytope with jobs outside mask disabled -> (value, u)."""
        model = self.model(n)
        ub = None if mask is None else model.restrict(mask)
        return _lp_max(model, v, ub)

    def max_linear(self, c):
        c = np.asarray(c, float)
        model = self.model(len(c))
        val, u = self.support(model.M.T @ c, len(c))
        return float(val), model.M @ u

    def is_feasible_rate(self, z, tol=1e-9):
        z = np.asarray(z, float)
        if np.any(z < -tol):
            return False
        z = np.clip(z, 0.0, None)
        model = self.model(len(z))
        b = lpkit.LpBuilder()
        u = b.add_vars(model.k, upper=model.ub)
        slack = b.add_var(cost=1.0)
        scale = 1.0 + np.abs(z).max(initial=0)
        for r in range(len(model.h)):
            nz = np.nonzero(model.G[r])[0]
            b.add_row(np.append(u[nz], slack), np.append(model.G[r, nz], -1.0), lpkit.LE, model.h[r])
        for j in range(len(z)):
            nz = np.nonzero(model.M[j])[0]
            b.add_row(np.append(u[nz], slack), np.append(model.M[j, nz], scale), lpkit.GE, z[j])
        sol = lpkit.solve(b.build(), backend="highs")
        return sol.ok and sol.objective <= tol * scale

    def rank_table(self, n):
        """Rank of every job subset (bitmask index) for polymatroid envs, cached."""
        cache = self.__dict__.setdefault("_ranks", {})
        if n not in cache:
            if n > VERTEX_CAP:
                raise ValueError(f"rank table capped at {VERTEX_CAP} jobs")
            cache[n] = np.array([self.set_rank([j for j in range(n) if mask >> j & 1])
                                 for mask in range(1 << n)], float)
        return cache[n]

    def max_rate(self, j, n):
        c = np.zeros(n)
        c[j] = 1.0
        return self.max_linear(c)[0]

    def to_dict(self):
        raise NotImplementedError


# ---------------------------------------------------------------- machines

class SingleMachine(Environment):
    kind = "single_machine"
    combinatorial = True

    def rate_model(self, n):
        return RateModel(np.ones((1, n)), np.ones(1), np.eye(n), np.full(n, np.inf), np.arange(n))

    def for_jobs(self, origin):
        return self

    def support(self, v, n, mask=None):
        v = np.asarray(v, float).copy()
        if mask is not None:
            v[~mask] = -np.inf
        u = np.zeros(n)
        if n and v.max() > 0:
            u[int(np.argmax(v))] = 1.0
            return float(v.max()), u
        return 0.0, u

    def max_linear(self, c):
        return self.support(c, len(c))

    def is_feasible_rate(self, z, tol=1e-9):
        z = np.asarray(z, float)
        return bool(np.all(z >= -tol) and z.sum() <= 1 + tol)

    def vertices(self, n):
        return [np.zeros(n)] + [np.eye(n)[j] for j in range(n)]

    def set_rank(self, S):
        return 1.0 if len(S) else 0.0

    def to_dict(self):
        return {"kind": self.kind}


@dataclass
class IdenticalMachines(Environment):
    m: int = 1
    kind = "identical"
    combinatorial = True

    def check(self, n):
        return [] if self.m >= 1 else ["machine count must be >= 1"]

    def rate_model(self, n):
        return RateModel(np.ones((1, n)), np.array([float(self.m)]), np.eye(n), np.ones(n), np.arange(n))

    def for_jobs(self, origin):
        return self

    def support(self, v, n, mask=None):
        v = np.asarray(v, float).copy()
        if mask is not None:
            v[~mask] = -np.inf
        order = sorted(range(n), key=lambda j: (-v[j], j))[: self.m]
        u = np.zeros(n)
        for j in order:
            if v[j] > 0:
                u[j] = 1.0
        return float(v[u > 0].sum()), u

    def max_linear(self, c):
        return self.support(c, len(c))

    def is_feasible_rate(self, z, tol=1e-9):
        z = np.asarray(z, float)
        return bool(np.all(z >= -tol) and np.all(z <= 1 + tol) and z.sum() <= self.m + tol)

    def set_rank(self, S):
        return float(min(len(S), self.m))

    def vertices(self, n):
        out = []
        for k in range(min(self.m, n) + 1):
            for S in itertools.combinations(range(n), k):
                v = np.zeros(n)
                v[list(S)] = 1.0
                out.append(v)
        return out

    def to_dict(self):
        return {"kind": self.kind, "m": self.m}


@dataclass
class UnrelatedMachines(Environment):
    """Rates lam[j, i]: job j processes at rate lam[j, i] on machine i."""
    rates: np.ndarray = None
    kind = "unrelated"

    def __post_init__(self):
        self.rates = np.atleast_2d(np.asarray(self.rates, float))

    @property
    def m(self):
        return self.rates.shape[1]

    def check(self, n):
        errs = []
        if self.rates.shape[0] != n:
            errs.append(f"rate matrix has {self.rates.shape[0]} rows for {n} jobs")
        if np.any(self.rates < 0):
            errs.append("rates must be >= 0")
        return errs

    def rate_model(self, n):
        # u indexed (j, i) -> j * m + i
        m = self.m
        lam = self.rates[:n]
        k = n * m
        G = np.zeros((m + n, k))
        M = np.zeros((n, k))
        for j in range(n):
            for i in range(m):
                v = j * m + i
                G[i, v] = 1.0
                G[m + j, v] = 1.0
                M[j, v] = lam[j, i]
        owner = np.repeat(np.arange(n), m)
        return RateModel(G, np.ones(m + n), M, np.ones(k), owner)

    def support(self, v, n, mask=None):
        # a max-weight matching between jobs and machines
        W = np.asarray(v, float).reshape(n, self.m).copy()
        if mask is not None:
            W[~mask] = 0.0
        W = np.clip(W, 0.0, None)
        if n == 0:
            return 0.0, np.zeros(0)
        cost = np.hstack([-W, np.zeros((n, n))])  # dummy columns = unassigned
        assign, tot = lpkit.hungarian(cost)
        u = np.zeros(n * self.m)
        for j, i in enumerate(assign):
            if i < self.m and W[j, i] > 0:
                u[j * self.m + i] = 1.0
        return float(-tot), u

    def for_jobs(self, origin):
        return UnrelatedMachines(self.rates[np.asarray(origin, int)])

    def to_dict(self):
        return {"kind": self.kind, "rates": self.rates.tolist()}


# ---------------------------------------------------------------- matroids

@dataclass
class Matroid(Environment):
    """Uniform, partition or graphic matroid over the job set.

    uniform:   rank
    partition: blocks (job -> block id list), capacities
    graphic:   edges (job -> (u, v) vertex pair)
    """
    matroid: str = "uniform"
    rank: int = 1
    blocks: list = None
    capacities: list = None
    edges: list = None
    kind = "matroid"
    combinatorial = True

    def check(self, n):
        errs = []
        if self.matroid == "uniform":
            if self.rank < 0:
                errs.append("rank must be >= 0")
        elif self.matroid == "partition":
            if self.blocks is None or len(self.blocks) != n:
                errs.append("partition matroid needs one block id per job")
            elif max(self.blocks, default=-1) >= len(self.capacities or []):
                errs.append("block id without capacity")
            if any(c < 0 for c in self.capacities or []):
                errs.append("capacities must be >= 0")
        elif self.matroid == "graphic":
            if self.edges is None or len(self.edges) != n:
                errs.append("graphic matroid needs one edge per job")
        else:
            errs.append(f"unknown matroid kind {self.matroid!r}")
        if n > VERTEX_CAP:
            errs.append(f"matroid environments support at most {VERTEX_CAP} jobs")
        return errs

    def independent(self, S):
        S = list(S)
        if self.matroid == "uniform":
            return len(S) <= self.rank
        if self.matroid == "partition":
            cnt = {}
            for j in S:
                b = self.blocks[j]
                cnt[b] = cnt.get(b, 0) + 1
                if cnt[b] > self.capacities[b]:
                    return False
            return True
        parent = {}

        def find(a):
            while parent.get(a, a) != a:
                a = parent[a]
            return a
        for j in S:
            a, b = (find(x) for x in self.edges[j])
            if a == b:
                return False
            parent[a] = b
        return True

    def rank_of(self, S):
        I = []
        for j in sorted(S):
            if self.independent(I + [j]):
                I.append(j)
        return len(I)

    def set_rank(self, S):
        return float(self.rank_of(S))

    def greedy(self, c, S=None):
        c = np.asarray(c, float)
        n = len(c)
        S = range(n) if S is None else S
        I = []
        for j in sorted(S, key=lambda j: (-c[j], j)):
            if c[j] <= 0:
                break
            if self.independent(I + [j]):
                I.append(j)
        z = np.zeros(n)
        z[I] = 1.0
        return float(c[I].sum()), z

    def _rank_rows(self, n):
        """Subsets whose rank rows define P together with 0 <= z <= 1."""
        if self.matroid == "uniform":
            return [tuple(range(n))] if self.rank < n else []
        if self.matroid == "partition":
            out = []
            for b, cap in enumerate(self.capacities):
                S = tuple(j for j in range(n) if self.blocks[j] == b)
                if len(S) > cap:
                    out.append(S)
            return out
        # z(S) <= r(S) is implied by the row of the closure of S, and by z <= 1
        # when S is independent, so closed dependent sets suffice
        out = []
        for k in range(2, n + 1):
            for S in itertools.combinations(range(n), k):
                r = self.rank_of(S)
                if r < k and all(self.rank_of(S + (e,)) > r for e in range(n) if e not in S):
                    out.append(S)
        return out

    def rate_model(self, n):
        subsets = self._rank_rows(n)
        G = np.zeros((len(subsets), n))
        h = np.zeros(len(subsets))
        for r, S in enumerate(subsets):
            G[r, list(S)] = 1.0
            h[r] = self.rank_of(S)
        return RateModel(G, h, np.eye(n), np.ones(n), np.arange(n))

    def support(self, v, n, mask=None):
        S = range(n) if mask is None else np.nonzero(mask)[0]
        return self.greedy(v, S)

    def max_linear(self, c):
        return self.greedy(c)

    def is_feasible_rate(self, z, tol=1e-9):
        z = np.asarray(z, float)
        if np.any(z < -tol) or np.any(z > 1 + tol):
            return False
        n = len(z)
        # the max over subsets of z(S) - r(S) is attained greedily along z order
        for k in range(1, n + 1):
            for S in itertools.combinations(range(n), k):
                if z[list(S)].sum() > self.rank_of(S) + tol:
                    return False
        return True

    def vertices(self, n):
        if n > VERTEX_CAP:
            raise ValueError(f"vertex enumeration capped at {VERTEX_CAP} jobs")
        out = []
        for k in range(n + 1):
            for S in itertools.combinations(range(n), k):
                if self.independent(S):
                    v = np.zeros(n)
                    v[list(S)] = 1.0
                    out.append(v)
        return out

    def for_jobs(self, origin):
        origin = [int(o) for o in origin]
        if self.matroid == "uniform":
            return self
        if self.matroid == "partition":
            return Matroid("partition", blocks=[self.blocks[o] for o in origin],
                           capacities=list(self.capacities))
        return Matroid("graphic", edges=[tuple(self.edges[o]) for o in origin])

    def to_dict(self):
        d = {"kind": self.kind, "matroid": self.matroid}
        if self.matroid == "uniform":
            d["rank"] = self.rank
        elif self.matroid == "partition":
            d["blocks"] = list(self.blocks)
            d["capacities"] = list(self.capacities)
        else:
            d["edges"] = [list(e) for e in self.edges]
        return d


def weighted_rank(env: Matroid, S, weights):
    return env.greedy(weights, S)[0]


def enumerate_vertices(env, n, cap=VERTEX_CAP):
    if n > cap:
        raise ValueError(f"job count {n} exceeds vertex cap {cap}")
    if not hasattr(env, "vertices"):
        raise ValueError(f"{env.kind} environments have no vertex enumeration")
    return env.vertices(n)


# ---------------------------------------------------------------- generalized flow

@dataclass
class GeneralizedFlow(Environment):
    """Generalized flow network.

    nodes: number of nodes; excess[v] = b_v (inf marks a sink);
    arcs: list of (tail, head, capacity, gain); job_nodes[j] = source node of job j.
    Job j's rate is bounded by its source's net outflow, relay nodes conserve
    flow and sinks absorb anything.
    """
    nodes: int = 0
    excess: list = None
    arcs: list = None
    job_nodes: list = None
    kind = "genflow"

    def check(self, n):
        errs = []
        if self.job_nodes is None or len(self.job_nodes) != n:
            errs.append("genflow needs one source node per job")
            return errs
        if len(set(self.job_nodes)) != n:
            errs.append("job source nodes must be distinct")
        for (a, b, cap, g) in self.arcs:
            if not (0 <= a < self.nodes and 0 <= b < self.nodes):
                errs.append("arc endpoint out of range")
            if cap < 0 or g < 0:
                errs.append("capacities and gains must be >= 0")
            if b in self.job_nodes:
                errs.append("arcs may not enter a job source node")
        if any(x < 0 for x in self.excess):
            errs.append("excess must be >= 0")
        return errs

    def rate_model(self, n):
        E = len(self.arcs)
        k = E + n  # arc flows, then per-job net-outflow variables
        jobs_at = {v: j for j, v in enumerate(self.job_nodes[:n])}
        rows, h = [], []
        for v in range(self.nodes):
            net = np.zeros(k)
            for e, (a, b, cap, g) in enumerate(self.arcs):
                if a == v:
                    net[e] += 1.0
                if b == v:
                    net[e] -= g
            if v in jobs_at:
                j = jobs_at[v]
                r = -net.copy()
                r[E + j] = 1.0  # y_j <= netout_v
                rows.append(r)
                h.append(0.0)
                rows.append(net)
                h.append(self.excess[v])
            elif np.isfinite(self.excess[v]):
                rows.append(net)  # netout <= b_v
                h.append(self.excess[v])
                rows.append(-net)  # netout >= 0
                h.append(0.0)
        M = np.zeros((n, k))
        M[np.arange(n), E + np.arange(n)] = 1.0
        ub = np.array([a[2] for a in self.arcs] + [np.inf] * n, float)
        owner = np.array([jobs_at.get(a[0], -1) for a in self.arcs] + list(range(n)))
        return RateModel(np.array(rows).reshape(-1, k), np.array(h), M, ub, owner)

    def for_jobs(self, origin):
        origin = [int(o) for o in origin]
        src = set(self.job_nodes)
        relay = [v for v in range(self.nodes) if v not in src]
        idx = {v: i for i, v in enumerate(relay)}
        excess = [self.excess[v] for v in relay]
        arcs = [(idx[a], idx[b], c, g) for (a, b, c, g) in self.arcs if a not in src]
        job_nodes = []
        for o in origin:
            v = self.job_nodes[o]
            nv = len(excess)
            excess.append(self.excess[v])
            job_nodes.append(nv)
            arcs += [(nv, idx[b], c, g) for (a, b, c, g) in self.arcs if a == v]
        return GeneralizedFlow(len(excess), excess, arcs, job_nodes)

    def to_dict(self):
        return {"kind": self.kind, "nodes": self.nodes,
                "excess": [None if not np.isfinite(x) else x for x in self.excess],
                "arcs": [list(a) for a in self.arcs], "job_nodes": list(self.job_nodes)}


# ---------------------------------------------------------------- speed-up curves

@dataclass
class Curve:
    """Concave piecewise-linear g with g(0) = 0: segment lengths and slopes."""
    lengths: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, float)
        self.slopes = np.asarray(self.slopes, float)

    def __call__(self, s):
        out, left = 0.0, float(s)
        for L, a in zip(self.lengths, self.slopes):
            d = min(L, max(left, 0.0))
            out += a * d
            left -= d
        return out

    @classmethod
    def sample(cls, fn, top, pieces):
        xs = np.linspace(0.0, top, pieces + 1)
        ys = np.array([fn(x) for x in xs])
        return cls(np.diff(xs), np.diff(ys) / np.diff(xs))

    def check(self):
        errs = []
        if np.any(self.slopes < 0):
            errs.append("curve slopes must be >= 0")
        if np.any(np.diff(self.slopes) > 1e-12):
            errs.append("curve slopes must be nonincreasing")
        if np.any(self.lengths <= 0):
            errs.append("curve segment lengths must be > 0")
        return errs


@dataclass
class SpeedupCurves(Environment):
    """D divisible resources; job j's speed is sum_g g_jg(sum_{d in G_jg} a_jd y_jd)."""
    D: int = 1
    groups: list = None  # per job: list of resource-index lists
    coef: np.ndarray = None  # n x D
    curves: list = None  # per job: list of Curve, one per group
    kind = "speedup"

    def __post_init__(self):
        self.coef = np.atleast_2d(np.asarray(self.coef, float))

    def check(self, n):
        errs = []
        if self.coef.shape != (n, self.D):
            errs.append(f"coefficient matrix must be {n}x{self.D}")
        if np.any(self.coef < 0):
            errs.append("coefficients must be >= 0")
        if len(self.groups) != n or len(self.curves) != n:
            errs.append("one group partition and curve list per job")
            return errs
        for j in range(n):
            flat = [d for g in self.groups[j] for d in g]
            if len(flat) != len(set(flat)) or any(not 0 <= d < self.D for d in flat):
                errs.append(f"job {j} groups are not disjoint resource sets")
            if len(self.curves[j]) != len(self.groups[j]):
                errs.append(f"job {j} needs one curve per group")
            for c in self.curves[j]:
                errs.extend(c.check())
        return errs

    def utility(self, j, y):
        return sum(c(self.coef[j, g] @ np.asarray(y)[g]) for g, c in zip(self.groups[j], self.curves[j]))

    def rate_model(self, n):
        D = self.D
        # layout: y (n*D) | per job per group per piece fill | rho (n)
        pieces = [(j, gi, li) for j in range(n) for gi, c in enumerate(self.curves[j])
                  for li in range(len(c.lengths))]
        pidx = {p: n * D + t for t, p in enumerate(pieces)}
        k = n * D + len(pieces) + n
        rows, h = [], []
        for d in range(D):
            r = np.zeros(k)
            r[[j * D + d for j in range(n)]] = 1.0
            rows.append(r)
            h.append(1.0)
        ub = np.full(k, np.inf)
        ub[: n * D] = 1.0
        owner = np.concatenate([np.repeat(np.arange(n), D), [p[0] for p in pieces], np.arange(n)])
        for j in range(n):
            rho = np.zeros(k)
            rho[n * D + len(pieces) + j] = 1.0
            for gi, (g, c) in enumerate(zip(self.groups[j], self.curves[j])):
                r = np.zeros(k)
                for li, L in enumerate(c.lengths):
                    v = pidx[(j, gi, li)]
                    r[v] = 1.0
                    ub[v] = L
                    rho[v] = -c.slopes[li]
                for d in g:
                    r[j * D + d] = -self.coef[j, d]
                rows.append(r)
                h.append(0.0)
            rows.append(rho)
            h.append(0.0)
        M = np.zeros((n, k))
        M[np.arange(n), n * D + len(pieces) + np.arange(n)] = 1.0
        return RateModel(np.array(rows), np.array(h), M, ub, owner)

    def for_jobs(self, origin):
        o = [int(x) for x in origin]
        return SpeedupCurves(self.D, [self.groups[j] for j in o], self.coef[o],
                             [self.curves[j] for j in o])

    def to_dict(self):
        return {"kind": self.kind, "D": self.D, "groups": self.groups, "coef": self.coef.tolist(),
                "curves": [[{"lengths": c.lengths.tolist(), "slopes": c.slopes.tolist()} for c in cs]
                           for cs in self.curves]}


@dataclass
class DemandResult:
    y: np.ndarray
    utility: float
    prices: np.ndarray = field(default=None)


def speedup_demand(env: SpeedupCurves, j, q):
    """Greedy demand: per group, buy resources in decreasing a_d/q_d while the
    marginal speed gain exceeds the price."""
    q = np.asarray(q, float)
    if q.shape != (env.D,):
        raise ValueError("one price per resource required")
    if np.any(q <= 0):
        raise ValueError("prices must be strictly positive")
    a = env.coef[j]
    y = np.zeros(env.D)
    for g, curve in zip(env.groups[j], env.curves[j]):
        order = sorted(g, key=lambda d: (-(a[d] / q[d]), d))
        piece, used = 0, 0.0  # position inside the curve
        stop = False
        for d in order:
            if a[d] <= 0:
                break
            while y[d] < 1.0 and piece < len(curve.lengths):
                if curve.slopes[piece] * a[d] <= q[d]:
                    stop = True  # later resources and pieces are no better
                    break
                room = curve.lengths[piece] - used
                dy = min(1.0 - y[d], room / a[d])
                y[d] += dy
                used += dy * a[d]
                if used >= curve.lengths[piece] - 1e-15:
                    piece, used = piece + 1, 0.0
            if stop or piece >= len(curve.lengths):
                break
    return DemandResult(y, env.utility(j, y) - q @ y, q)


def concave_closure_value(v, x, backend="highs"):
    """max sum_S v(S) lam_S  s.t. sum_S lam_S 1_S = x, sum lam = 1, lam >= 0."""
    x = np.asarray(x, float)
    n = len(x)
    subsets = [S for k in range(n + 1) for S in itertools.combinations(range(n), k)]
    b = lpkit.LpBuilder(maximize=True)
    lam = b.add_vars(len(subsets), cost=[v(frozenset(S)) for S in subsets])
    for i in range(n):
        idx = [t for t, S in enumerate(subsets) if i in S]
        b.add_row(lam[idx], 1.0, lpkit.EQ, x[i])
    b.add_row(lam, 1.0, lpkit.EQ, 1.0)
    sol = lpkit.solve(b.build(), backend=backend)
    if not sol.ok:
        raise ValueError("x outside [0,1]^n")
    return sol.objective


# ---------------------------------------------------------------- module-level API

def is_feasible_rate(env, z, tol=1e-9):
    return env.is_feasible_rate(z, tol)


def max_linear(env, c):
    return env.max_linear(c)


def env_from_dict(d):
    d = dict(d)
    kind = d.pop("kind")
    allowed = {
        "single_machine": set(), "identical": {"m"}, "unrelated": {"rates"},
        "matroid": {"matroid", "rank", "blocks", "capacities", "edges"},
        "genflow": {"nodes", "excess", "arcs", "job_nodes"},
        "speedup": {"D", "groups", "coef", "curves"},
    }
    if kind not in allowed:
        raise ValueError(f"unknown environment kind {kind!r}")
    extra = set(d) - allowed[kind]
    if extra:
        raise ValueError(f"unknown environment fields {sorted(extra)}")
    if kind == "single_machine":
        return SingleMachine()
    if kind == "identical":
        return IdenticalMachines(int(d["m"]))
    if kind == "unrelated":
        return UnrelatedMachines(np.array(d["rates"], float))
    if kind == "matroid":
        return Matroid(d.get("matroid", "uniform"), int(d.get("rank", 1)), d.get("blocks"),
                       d.get("capacities"), [tuple(e) for e in d["edges"]] if d.get("edges") else None)
    if kind == "genflow":
        ex = [np.inf if x is None else float(x) for x in d["excess"]]
        return GeneralizedFlow(int(d["nodes"]), ex, [tuple(a) for a in d["arcs"]], list(d["job_nodes"]))
    curves = [[Curve(c["lengths"], c["slopes"]) for c in cs] for cs in d["curves"]]
    return SpeedupCurves(int(d["D"]), [[list(g) for g in gs] for gs in d["groups"]],
                         np.array(d["coef"], float), curves)
