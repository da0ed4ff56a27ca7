"""Residual optimum f(x): closed forms, matching, and time-indexed LPs.

The continuous fractional residual is solved exactly by a segment LP whose
breakpoints are refined until a Lagrangian dual bound meets the primal
value. Within a segment of constant rates the cost int t dt is exact at
the midpoint, so the primal value is exact for the plan it returns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import lpkit
from .lpkit.fast import WarmLp, highs_lp
from .envs import VERTEX_CAP, Environment, RateModel, SingleMachine, UnrelatedMachines

GAP_TOL = 1e-10


@dataclass
class RemainingState:
    x: np.ndarray
    w: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.x = np.clip(np.asarray(self.x, float), 0.0, None)
        self.w = np.asarray(self.w, float)
        self.p = np.asarray(self.p, float)

    @classmethod
    def fresh(cls, inst):
        return cls(inst.sizes.copy(), inst.weights, inst.sizes)

    @property
    def n(self):
        return len(self.x)

    @property
    def density(self):
        return self.w / self.p

    @property
    def frac_weight(self):
        """W~ = sum_j w_j x_j / p_j."""
        return float(self.density @ self.x)

    @property
    def weight(self):
        return float(self.w[self.x > 0].sum())

    def subset(self, S):
        mask = np.zeros(self.n, bool)
        mask[list(S)] = True
        return RemainingState(np.where(mask, self.x, 0.0), self.w, self.p)

    def check(self):
        errs = []
        if np.any(self.x < 0):
            errs.append("remaining sizes must be >= 0")
        if np.any(self.x > self.p * (1 + 1e-12)):
            errs.append("remaining size exceeds original size")
        return errs


@dataclass
class ResidualPlan:
    """Piecewise-constant rates over residual time [breaks[k], breaks[k+1])."""
    breaks: np.ndarray
    rates: np.ndarray  # K x n job work rates
    value: float
    u: np.ndarray | None = None  # K x k model variables (machine shares etc.)
    meta: dict = field(default_factory=dict)

    @property
    def n_segments(self):
        return len(self.breaks) - 1

    @property
    def end(self):
        return float(self.breaks[-1]) if len(self.breaks) else 0.0

    def work(self):
        return np.diff(self.breaks) @ self.rates if self.n_segments else np.zeros(self.rates.shape[1])

    def segment_at(self, tau, eps=1e-12):
        """Index of the segment active just after tau, or -1 past the end."""
        k = int(np.searchsorted(self.breaks, tau + eps * (1 + abs(tau)), side="right")) - 1
        return k if 0 <= k < self.n_segments else -1

    def objective(self, c, e_cost=None):
        """Recompute sum_j c_j int t z_j (+ sum e_v int u_v)."""
        if not self.n_segments:
            return 0.0
        a, b = self.breaks[:-1], self.breaks[1:]
        val = float((0.5 * (b * b - a * a)) @ self.rates @ c)
        if e_cost is not None and self.u is not None:
            val += float((b - a) @ self.u @ e_cost)
        return val


def empty_plan(n, k=None):
    return ResidualPlan(np.zeros(1), np.zeros((0, n)), 0.0,
                        None if k is None else np.zeros((0, k)))


def _sequential_plan(order, durations, rates_per_job, n, value):
    breaks = [0.0]
    rows = []
    for j in order:
        if durations[j] <= 0:
            continue
        r = np.zeros(n)
        r[j] = rates_per_job[j]
        rows.append(r)
        breaks.append(breaks[-1] + durations[j])
    return ResidualPlan(np.array(breaks), np.array(rows).reshape(-1, n), value)


# ---------------------------------------------------------------- single machine

def smith_order(x, w):
    alive = [j for j in range(len(x)) if x[j] > 0]
    # descending w/x, ties by id; cross-multiplied to stay exact on integers
    import functools

    def cmp(a, b):
        lhs, rhs = w[a] * x[b], w[b] * x[a]
        if lhs != rhs:
            return -1 if lhs > rhs else 1
        return -1 if a < b else 1
    return sorted(alive, key=functools.cmp_to_key(cmp))


def single_machine_residual(x, w):
    """Min weighted completion time on one machine (integral mode)."""
    x, w = np.asarray(x, float), np.asarray(w, float)
    order = smith_order(x, w)
    t, f = 0.0, 0.0
    for j in order:
        t += x[j]
        f += w[j] * t
    return f, _sequential_plan(order, x, np.ones(len(x)), len(x), f)


def single_machine_fractional(state: RemainingState):
    """Fractional residual on one machine: highest w_j/p_j first."""
    c = state.density
    order = sorted([j for j in range(state.n) if state.x[j] > 0], key=lambda j: (-c[j], j))
    t, f = 0.0, 0.0
    for j in order:
        f += c[j] * (state.x[j] * t + 0.5 * state.x[j] ** 2)
        t += state.x[j]
    return f, _sequential_plan(order, state.x, np.ones(state.n), state.n, f)


def per_machine_residual(lam, x, w):
    """Weighted completion time of one machine's jobs with sizes x_j / lam_j."""
    x, w, lam = (np.asarray(a, float) for a in (x, w, lam))
    sel = x > 0
    if not np.any(sel):
        return 0.0
    if np.any(lam[sel] <= 0):
        return math.inf
    pij = np.where(sel, x / np.where(lam > 0, lam, 1.0), 0.0)
    return single_machine_residual(pij, w)[0]


# ---------------------------------------------------------------- matching (unrelated, unweighted)

def matching_residual(env: UnrelatedMachines, state: RemainingState):
    """Min-cost assignment of jobs to (machine, reverse position) slots.

    Returns (f, plan); plan.meta['assignment'] maps job -> (machine, k).
    """
    n, m = state.n, env.m
    lam = env.rates[:n]
    alive = [j for j in range(n) if state.x[j] > 0]
    if not alive:
        return 0.0, empty_plan(n, n * m)
    na = len(alive)
    big = 1e18
    cost = np.full((na, m * na), big)
    for r, j in enumerate(alive):
        if not np.any(lam[j] > 0):
            raise ValueError(f"job {j} has no machine with positive rate")
        for i in range(m):
            if lam[j, i] > 0:
                pij = state.x[j] / lam[j, i]
                cost[r, i * na: (i + 1) * na] = np.arange(1, na + 1) * pij
    assign, total = lpkit.hungarian(cost)
    slots = {j: (int(col // na), int(col % na) + 1) for j, col in zip(alive, assign)}
    # each machine: descending k (ascending p_ij), ties by job id
    timelines = []
    for i in range(m):
        jobs = sorted([j for j in alive if slots[j][0] == i], key=lambda j: (-slots[j][1], j))
        t, seq = 0.0, []
        for j in jobs:
            d = state.x[j] / lam[j, i]
            seq.append((t, t + d, j))
            t += d
        timelines.append(seq)
    pts = sorted({0.0} | {s[1] for seq in timelines for s in seq})
    K = len(pts) - 1
    rates = np.zeros((K, n))
    u = np.zeros((K, n * m))
    for i, seq in enumerate(timelines):
        for (a, b, j) in seq:
            for k in range(K):
                if pts[k] >= a - 1e-15 and pts[k + 1] <= b + 1e-15:
                    rates[k, j] = lam[j, i]
                    u[k, j * m + i] = 1.0
    plan = ResidualPlan(np.array(pts), rates, float(total), u, {"assignment": slots})
    return float(total), plan


# ---------------------------------------------------------------- exact continuous LP

def _support_fn(env, model, n):
    """(v, mask) -> (value, u) maximising v.u over the model polytope."""
    if env is not None and env.combinatorial or isinstance(env, UnrelatedMachines):
        return lambda v, mask: env.support(v, n, mask)
    cache = {}

    def f(v, mask):
        key = (v.tobytes(), None if mask is None else mask.tobytes())
        if key not in cache:
            ub = model.ub if mask is None else model.restrict(mask)
            cache[key] = _model_max(model, v, ub)
        return cache[key]
    return f


def _model_max(model, v, ub):
    warm = model.__dict__.get("_warm")
    if warm is None:
        warm = model.__dict__["_warm"] = WarmLp(model.G, np.full(len(model.h), -np.inf), model.h, model.k)
    st, u, val = warm.solve(-v, np.zeros(model.k), ub)
    if st != "optimal":
        raise RuntimeError(f"support LP {st}")
    return float(-val), u


def _segment_lp(model, x, cv, e, breaks, masks, live):
    K = len(breaks) - 1
    k = model.k
    d = np.diff(breaks)
    mid = 0.5 * (breaks[:-1] + breaks[1:])
    cost = (np.outer(mid, cv) + e[None, :]).ravel()
    mg = len(model.h)
    gr, gc = np.nonzero(model.G)
    Ml = model.M[live]
    wr, wc = np.nonzero(Ml)
    off = np.arange(K)
    # K diagonal copies of G, then the work rows summing M over segments
    rows = np.concatenate([(gr[None, :] + mg * off[:, None]).ravel(), np.tile(wr, K) + K * mg])
    cols = np.concatenate([(gc[None, :] + k * off[:, None]).ravel(), (wc[None, :] + k * off[:, None]).ravel()])
    vals = np.concatenate([np.tile(model.G[gr, gc], K), np.tile(Ml[wr, wc], K)])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(K * mg + Ml.shape[0], K * k))
    lo = np.concatenate([np.full(K * mg, -np.inf), x[live]])
    up = np.concatenate([np.kron(d, model.h), x[live]])
    ub = np.concatenate([d[s] * model.restrict(masks[s]) for s in range(K)])
    st, y, val, duals = highs_lp(cost, A, lo, up, np.zeros(K * k), ub)
    if st != "optimal":
        return st
    pi = np.zeros(len(x))
    pi[live] = duals[K * mg:]
    return val, y.reshape(K, k), pi


def _envelope(support, v0, cv, a, b, mask, scale, limit=400):
    """int_a^b max_u (v0 - t cv).u dt, its kinks (t, u_left, u_right), and the
    maximiser at a."""
    def at(t):
        val, u = support(v0 - t * cv, mask)
        return val, u, (float(v0 @ u), float(cv @ u))

    def line(L, t):
        return L[0] - t * L[1]
    _, ua, la = at(a)
    _, ub, lb = at(b)
    kinks = []
    total = 0.0
    stack = [(a, b, la, lb, ua, ub)]
    calls = 0
    while stack:
        lo, hi, l1, l2, u1, u2 = stack.pop()
        (A1, C1), (A2, C2) = l1, l2
        if abs(C1 - C2) <= 1e-13 * scale:
            # parallel lines: optimality at both ends pins a single line
            best = l1 if line(l1, 0.5 * (lo + hi)) >= line(l2, 0.5 * (lo + hi)) else l2
            total += best[0] * (hi - lo) - best[1] * 0.5 * (hi * hi - lo * lo)
            continue
        ts = min(max((A1 - A2) / (C1 - C2), lo), hi)
        calls += 1
        fs, us, ls = at(ts)
        if fs <= line(l1, ts) + 1e-12 * scale or calls > limit:
            total += l1[0] * (ts - lo) - l1[1] * 0.5 * (ts * ts - lo * lo)
            total += l2[0] * (hi - ts) - l2[1] * 0.5 * (hi * hi - ts * ts)
            if lo < ts < hi:
                kinks.append((ts, u1, u2))
            continue
        stack.append((lo, ts, l1, ls, u1, us))
        stack.append((ts, hi, ls, l2, us, u2))
    kinks.sort(key=lambda k: k[0])
    return total, kinks, ua


def _envelope_integral(support, v0, cv, a, b, mask, scale):
    total, kinks, _ = _envelope(support, v0, cv, a, b, mask, scale)
    return total, [k[0] for k in kinks]


def _lagrangian(model, support, pi, x, cv, e, regions, scale):
    """Exact dual bound pi.x - int sigma(M'pi - e - t cv) dt with its kink times.

    The last region is stretched until every variable's reduced value turns
    nonpositive, so the bound is valid for any pi.
    """
    v0 = model.M.T @ pi - e
    pos = cv > 0
    if np.any((cv <= 0) & (v0 > 1e-12 * scale)):
        return -np.inf, []
    tail = float(np.max(v0[pos] / cv[pos], initial=0.0))
    total, times = float(pi @ x), []
    for r, (a, b, mask) in enumerate(regions):
        if r == len(regions) - 1:
            b = max(b, tail)
        val, kinks, _ = _envelope(support, v0, cv, a, b, mask, scale)
        total -= val
        times += [k[0] for k in kinks]
    return total, times


def _tie_groups(c, tol=1e-12):
    """Aggregation matrix joining jobs of equal density."""
    n = len(c)
    ids, keys = np.zeros(n, int), []
    for j in range(n):
        for g, cg in enumerate(keys):
            if abs(c[j] - cg) <= tol * max(1.0, abs(cg)):
                ids[j] = g
                break
        else:
            ids[j] = len(keys)
            keys.append(c[j])
    A = np.zeros((n, len(keys)))
    A[np.arange(n), ids] = 1.0
    return A


def _newton_duals(model, support, pi, x, cv, e, regions, scale, steps=8, agg=None):
    """Newton iterations on the work equations int M u*(t) dt = x.

    Inside a fixed envelope structure every kink is affine in pi, so the
    equations are linear. With agg, duals are shared inside each column group
    and only group totals are matched (ties keep a face, not a vertex).
    """
    n = len(x)
    Mt = model.M.T
    A = np.eye(n) if agg is None else agg
    pos = cv > 0
    for _ in range(steps):
        v0 = Mt @ pi - e
        lhs = np.zeros((n, n))
        rhs = x.astype(float).copy()
        # stretch the last region past the tail so a kink on the boundary stays inside
        tail = float(np.max(v0[pos] / cv[pos], initial=0.0))
        for r, (a, b, mask) in enumerate(regions):
            if r == len(regions) - 1:
                b = max(b, tail * (1 + 1e-9) + 1e-12)
            _, kinks, ua = _envelope(support, v0, cv, a, b, mask, scale)
            # boundaries: (alpha, beta) with t = alpha + beta . pi
            bounds = [(a, np.zeros(n))]
            verts = [ua]
            for (t, u1, u2) in kinks:
                du = u1 - u2
                den = float(cv @ du)
                if abs(den) <= 1e-14 * scale:
                    bounds.append((t, np.zeros(n)))
                else:
                    bounds.append((-float(e @ du) / den, (model.M @ du) / den))
                verts.append(u2)
            bounds.append((b, np.zeros(n)))
            for q, u in enumerate(verts):
                Mu = model.M @ u
                (a0, b0), (a1, b1) = bounds[q], bounds[q + 1]
                lhs += np.outer(Mu, b1 - b0)
                rhs -= (a1 - a0) * Mu
        if not np.any(np.abs(lhs) > 0):
            break
        sol, *_ = np.linalg.lstsq(A.T @ lhs @ A, A.T @ rhs, rcond=None)
        new = A @ sol
        if not np.all(np.isfinite(new)):
            break
        if np.max(np.abs(new - pi)) <= 1e-13 * scale:
            pi = new
            break
        pi = new
    return pi


def time_indexed_lp(model: RateModel, x, c, support, release=None, horizon=None, hint=None,
                    tol=GAP_TOL, max_iter=60):
    """Exact min sum_j c_j int t z_j + sum_v e_v int u_v over piecewise-constant u.

    release: per-job earliest start (global-time mode). Returns a plan whose
    rates are job work rates and whose u holds the model variables.
    """
    x = np.asarray(x, float)
    n, k = len(x), model.k
    e = np.zeros(k) if model.e is None else model.e
    live = x > 0
    if not np.any(live):
        return empty_plan(n, k)
    cv = model.M.T @ c
    rel = np.zeros(n) if release is None else np.asarray(release, float)
    if horizon is None:
        rmax = np.array([support(model.M[j], None)[0] if live[j] else 1.0 for j in range(n)])
        if np.any(rmax[live] <= 0):
            raise ValueError("a job with remaining work has zero maximum rate")
        horizon = float(rel[live].max() + (x[live] / rmax[live]).sum())
    B = {0.0, horizon} | {float(r) for r in rel if 0 < r < horizon}
    if hint is not None:
        B |= {float(t) for t in hint if 0 < t < horizon}
    B = np.array(sorted(B))
    scale = 1.0 + float(np.abs(c).max() * horizon + np.abs(e).max(initial=0))
    history = []
    agg = _tie_groups(c)
    best_lb, stall = -np.inf, 0
    for it in range(max_iter):
        masks = [(rel <= B[s] + 1e-12) & live for s in range(len(B) - 1)]
        out = _segment_lp(model, x, cv, e, B, masks, live)
        if isinstance(out, str):
            if out == "infeasible":
                horizon *= 2
                B = np.append(B, horizon)
            else:  # numerical trouble: thin out close breakpoints
                B = _insert_points(B[:1], B[1:], rel, horizon, 1e-6 * horizon)
            continue
        U, Y, pi_lp = out
        d = np.diff(B)
        B_used = B
        regions = []
        for s in range(len(B) - 1):
            if regions and np.array_equal(regions[-1][2], masks[s]):
                regions[-1] = (regions[-1][0], B[s + 1], masks[s])
            else:
                regions.append((B[s], B[s + 1], masks[s]))
        cands = [pi_lp, _newton_duals(model, support, pi_lp, x, cv, e, regions, scale),
                 _newton_duals(model, support, pi_lp, x, cv, e, regions, scale, agg=agg)]
        Bm, keep = _merge_layout(B, Y / d[:, None], rel)
        pi_s, ts = _structure_solve(model, Bm, (Y / d[:, None])[keep], x, cv, e, rel)
        if pi_s is not None:
            cands.append(pi_s)
        if stall >= 2:
            cands.append(_certify(model, support, B, Y / d[:, None], cv, e, masks, pi_lp, scale)[0])
        kinks = list(ts)
        for p in cands:
            if not np.all(np.isfinite(p)):
                continue
            val, times = _lagrangian(model, support, p, x, cv, e, regions, scale)
            kinks += times
            if val > best_lb:
                best_lb = val
        gap = max(U - best_lb, 0.0)
        history.append(gap)
        if gap <= tol * (1 + abs(U)):
            break
        stall = stall + 1 if len(history) > 1 and gap > 0.5 * history[-2] else 0
        if stall >= 3 and np.any(Y[-1] > 0):
            # the horizon binds: give the plan room
            horizon *= 2
            B = np.append(B_used, horizon)
            stall = 0
            continue
        kinks += _balance_points(model, B, Y / d[:, None], pi_lp, cv, e)
        B = _merge_equal(B, Y / d[:, None], rel)
        new = np.array(sorted(set(kinks) | set(_compression_points(model, B_used, Y))))
        new = new[(new > 0) & (new < horizon)] if len(new) else new
        grown = _insert_points(B, new, rel, horizon, 1e-7 * horizon)
        if len(grown) == len(B) and np.allclose(grown, B, rtol=0, atol=1e-15):
            used = np.nonzero(np.abs(Y).sum(1) > 0)[0]
            grown = _insert_points(B, 0.5 * (B_used[used] + B_used[used + 1]), rel, horizon,
                                   1e-12 * horizon)
        B = grown
    B = B_used
    d = np.diff(B)
    urate = Y / d[:, None]
    rates = urate @ model.M.T
    work = d @ rates
    fix = np.where(work > 0, x / np.where(work > 0, work, 1.0), 0.0)
    rates = rates * fix[None, :]
    plan = _compact(ResidualPlan(B, rates, U, urate, {"gap": gap, "iterations": it + 1, "gaps": history}))
    return plan


def _certify(model, support, B, urate, cv, e, masks, pi, scale, rounds=60):
    """Search duals pi under which each segment's rates are optimal at both ends.

    The residual sigma(t) - (v(t).u_k) is convex in t, so endpoint violations
    s bound it on the whole segment and sum_k d_k max(s) bounds the gap.
    Returns (pi, gap bound, per-segment violation).
    """
    K, n = len(B) - 1, model.M.shape[0]
    d = np.diff(B)
    cuts = []  # (segment, end, u')
    Mt = model.M.T
    best = (pi, np.inf, np.full(K, np.inf))
    for rnd in range(rounds):
        v0 = Mt @ pi - e
        s = np.zeros((K, 2))
        added = 0
        for k in range(K):
            for end, t in enumerate((B[k], B[k + 1])):
                v = v0 - t * cv
                val, up = support(v, masks[k])
                s[k, end] = max(0.0, val - v @ urate[k])
                if s[k, end] > 1e-14 * scale:
                    cuts.append((k, end, up))
                    added += 1
        viol = s.max(1)
        gap = float(d @ viol)
        if gap < best[1]:
            best = (pi, gap, viol)
        if not added:
            break
        # min sum_k d_k (s_ka + s_kb)/2  s.t. (M (u' - u_k)).pi - s_ke <= (e + t cv).(u' - u_k)
        nc = len(cuts)
        A = np.zeros((nc, n + 2 * K))
        b = np.zeros(nc)
        for r, (k, end, up) in enumerate(cuts):
            du = up - urate[k]
            t = B[k + end]
            A[r, :n] = model.M @ du
            A[r, n + 2 * k + end] = -1.0
            b[r] = (e + t * cv) @ du
        c = np.concatenate([np.zeros(n), np.repeat(d / 2, 2)])
        # marginal residual costs are nonnegative and at most c_j H + e_max
        st, sol, _, _ = highs_lp(c, A, np.full(nc, -np.inf), b,
                                 np.zeros(n + 2 * K),
                                 np.concatenate([np.full(n, 10 * scale), np.full(2 * K, np.inf)]))
        if st != "optimal":
            break
        pi = sol[:n]
    return best


def _structure_solve(model, B, urate, x, cv, e, rel):
    """Jointly place free breakpoints and duals for fixed segment rates.

    Work equations are linear in the breakpoints and balance equations
    pi.M du - t cv.du = e.du are linear in (pi, t), so one least-squares
    solve gives the exact layout when the rate sequence is right.
    """
    n, K = len(x), len(B) - 1
    fixed = [b for b in range(1, K) if np.any(np.abs(rel - B[b]) <= 1e-12)]
    free = [b for b in range(1, K) if b not in fixed]
    if not free:
        return None, []
    col = {b: n + i for i, b in enumerate(free)}
    W = urate @ model.M.T  # K x n job rates
    A = np.zeros((n + len(free), n + len(free)))
    rhs = x.astype(float).copy()
    for s in range(K):
        for b, sign in ((s, -1.0), (s + 1, 1.0)):
            if b in col:
                A[:n, col[b]] += sign * W[s]
            else:
                rhs -= sign * B[b] * W[s]
    bal = np.zeros(len(free))
    for i, b in enumerate(free):
        du = urate[b - 1] - urate[b]
        A[n + i, :n] = model.M @ du
        A[n + i, col[b]] = -float(cv @ du)
        bal[i] = float(e @ du)
    sol, *_ = np.linalg.lstsq(A, np.concatenate([rhs, bal]), rcond=None)
    if not np.all(np.isfinite(sol)):
        return None, []
    return sol[:n], [float(t) for t in sol[n:]]


def _balance_points(model, B, urate, pi, cv, e):
    """Times where adjacent segment rates have equal Lagrangian value under pi."""
    v0 = model.M.T @ pi - e
    out = []
    for s in range(1, len(B) - 1):
        du = urate[s - 1] - urate[s]
        den = float(cv @ du)
        if np.max(np.abs(du)) <= 1e-12 or abs(den) <= 1e-14:
            continue
        t = float(v0 @ du) / den
        if B[s - 1] < t < B[s + 1]:
            out.append(t)
    return out


def _insert_points(B, new, rel, horizon, tol):
    """Add points to B; a point within tol of a movable breakpoint replaces it.

    0, the horizon and release times never move.
    """
    fixed = {float(B[0]), float(horizon)} | {float(r) for r in rel if 0 < r < horizon}
    pts = sorted([(float(t), 1) for t in new] + [(float(t), 0) for t in B])
    out = []  # (time, is_new)
    for t, fresh in pts:
        if out and t - out[-1][0] <= tol:
            prev, pfresh = out[-1]
            if prev in fixed:
                continue
            if t in fixed or (fresh and not pfresh):
                out[-1] = (t, fresh)
            continue
        out.append((t, fresh))
    return np.array([t for t, _ in out])


def _merge_layout(B, urate, rel):
    """Breakpoints left after merging equal-rate neighbours (release times stay),
    with the index of one representative segment per merged piece."""
    keep, seg = [B[0]], [0]
    for s in range(1, len(B) - 1):
        if np.max(np.abs(urate[s - 1] - urate[s])) > 1e-13 or np.any(np.abs(rel - B[s]) <= 1e-12):
            keep.append(B[s])
            seg.append(s)
    keep.append(B[-1])
    return np.array(keep), seg


def _merge_equal(B, urate, rel):
    return _merge_layout(B, urate, rel)[0]


def _compression_points(model, B, Y):
    """End times if each under-used segment ran its rates at full gauge."""
    d = np.diff(B)
    out = []
    for s in range(len(d)):
        u = Y[s] / d[s]
        if not np.any(u > 0):
            continue
        load = model.G @ u
        g = np.max(np.where(model.h > 0, load / np.where(model.h > 0, model.h, 1.0), 0.0), initial=0.0)
        fin = np.isfinite(model.ub) & (model.ub > 0)
        if np.any(fin):
            g = max(g, float(np.max(u[fin] / model.ub[fin])))
        if 1e-9 < g < 1 - 1e-9:
            out.append(B[s] + g * d[s])
    return out


def _compact(plan: ResidualPlan, eps=1e-13):
    """Merge equal neighbours and drop trailing idle time."""
    B, R, U = plan.breaks, plan.rates, plan.u
    keep_b, keep_r, keep_u = [B[0]], [], []
    sliver = 1e-12 * (1 + abs(B[-1]))
    for s in range(len(B) - 1):
        if keep_r and B[s + 1] - B[s] <= sliver:
            keep_b[-1] = B[s + 1]
            continue
        if keep_r and np.allclose(R[s], keep_r[-1], atol=eps, rtol=0) and (
                U is None or np.allclose(U[s], keep_u[-1], atol=eps, rtol=0)):
            keep_b[-1] = B[s + 1]
            continue
        keep_b.append(B[s + 1])
        keep_r.append(R[s])
        keep_u.append(None if U is None else U[s])
    while keep_r and np.all(np.abs(keep_r[-1]) <= eps):
        keep_r.pop()
        keep_u.pop()
        keep_b.pop()
    n = R.shape[1]
    plan.breaks = np.array(keep_b)
    plan.rates = np.array(keep_r).reshape(-1, n)
    if U is not None:
        plan.u = np.array(keep_u).reshape(-1, U.shape[1])
    return plan


def _line_min_integral(slopes, icepts, H):
    """int_0^H min_i (slopes_i t + icepts_i) dt, exactly."""
    pts = [0.0, H]
    for i in range(len(slopes)):
        for k in range(i + 1, len(slopes)):
            ds = slopes[i] - slopes[k]
            if ds != 0:
                t = (icepts[k] - icepts[i]) / ds
                if 0 < t < H:
                    pts.append(t)
    pts = np.unique(pts)
    vals = np.min(np.outer(pts, slopes) + icepts[None, :], axis=1)
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(pts)))


def polymatroid_fractional(env, state: RemainingState, tol=GAP_TOL):
    """Greedy-by-density trajectory, accepted only when it meets a lower bound.

    With R the rank function, the work doable by time t inside S is
    rho_t(S) = min_{T <= S} t R(T) + x(S - T), so c.x(t) >= c.x - max{c.y : y(S) <= rho_t(S)}
    and the max is the greedy sum over density-sorted prefixes. Returns None
    when the greedy plan does not certify.
    """
    x, c = state.x, state.density
    n = state.n
    R = env.rank_table(n)
    full = np.arange(1 << n)
    bits = (full[:, None] >> np.arange(n)[None, :]) & 1
    xs = bits @ x
    alive = x > 0
    rem = x.copy()
    t, breaks, rates, cost = 0.0, [0.0], [], 0.0
    while np.any(alive):
        order = sorted(np.nonzero(alive)[0], key=lambda j: (-c[j], j))
        z = np.zeros(n)
        mask, prev = 0, 0.0
        for j in order:
            mask |= 1 << int(j)
            z[j] = R[mask] - prev
            prev = R[mask]
        run = z > 0
        if not np.any(run):
            raise ValueError("a job with remaining work has zero maximum rate")
        dt = float(np.min(rem[run] / z[run]))
        hit = run & (rem - dt * z <= 1e-12 * np.maximum(1.0, x))
        rem = np.where(hit, 0.0, rem - dt * z)
        alive &= ~hit
        cost += float(c @ z) * 0.5 * ((t + dt) ** 2 - t * t)
        t += dt
        breaks.append(t)
        rates.append(z)
    H = t
    order = sorted(np.nonzero(x > 0)[0], key=lambda j: (-c[j], j))
    lb = float(c @ x) * H
    mask = 0
    for k, j in enumerate(order):
        mask |= 1 << int(j)
        nxt = c[order[k + 1]] if k + 1 < len(order) else 0.0
        if c[j] - nxt <= 0:
            continue
        sub = full[(full & ~mask) == 0]
        slope, icept = R[sub], xs[mask] - xs[sub]
        best = {}
        for r, b in zip(slope, icept):
            if b < best.get(r, np.inf):
                best[r] = b
        sl = np.array(list(best.keys()))
        lb -= (c[j] - nxt) * _line_min_integral(sl, np.array([best[r] for r in sl]), H)
    if cost - lb > tol * (1 + abs(cost)):
        return None
    rates = np.array(rates)
    plan = ResidualPlan(np.array(breaks), rates, cost, rates.copy(),
                        {"gap": cost - lb, "iterations": 0, "method": "polymatroid"})
    return cost, _compact(plan)


def exact_fractional(env: Environment, state: RemainingState, release=None, hint=None):
    """Continuous fractional residual optimum over env's polytope."""
    n = state.n
    if not np.any(state.x > 0):
        return 0.0, empty_plan(n)
    if release is None and hasattr(env, "set_rank") and n <= VERTEX_CAP:
        out = polymatroid_fractional(env, state)
        if out is not None:
            return out
    model = env.model(n)
    plan = time_indexed_lp(model, state.x, state.density, _support_fn(env, model, n),
                           release=release, hint=hint)
    return plan.value, plan


def weighted_unrelated_model(lam, w):
    """Machine-capacity relaxation with per-share cost w_j (the second term)."""
    lam = np.asarray(lam, float)
    n, m = lam.shape
    k = n * m
    G = np.zeros((m, k))
    M = np.zeros((n, k))
    for j in range(n):
        for i in range(m):
            G[i, j * m + i] = 1.0
            M[j, j * m + i] = lam[j, i]
    e = np.repeat(np.asarray(w, float), m)
    return RateModel(G, np.ones(m), M, np.full(k, np.inf), np.repeat(np.arange(n), m), e)


def _capacity_support(lam, n, m):
    def f(v, mask):
        V = np.asarray(v, float).reshape(n, m).copy()
        if mask is not None:
            V[~mask] = -np.inf
        u = np.zeros((n, m))
        val = 0.0
        for i in range(m):
            j = int(np.argmax(V[:, i]))
            if V[j, i] > 0:
                u[j, i] = 1.0
                val += V[j, i]
        return val, u.ravel()
    return f


def weighted_unrelated_residual(env: UnrelatedMachines, state: RemainingState, grid=None, offset=1):
    """Residual LP with time cost (w_j lam_ij / p_j) t and share cost w_j."""
    n, m = state.n, env.m
    lam = env.rates[:n]
    if not np.any(state.x > 0):
        return 0.0, empty_plan(n, n * m)
    model = weighted_unrelated_model(lam, state.w)
    if grid is not None:
        return solve_interval_lp(model, state, grid, offset)
    # share costs depend only on the work split, so an optimum never idles and
    # ends before every job has run alone on its slowest usable machine
    live = state.x > 0
    slow = np.array([lam[j][lam[j] > 0].min() if np.any(lam[j] > 0) else np.nan for j in range(n)])
    if np.any(np.isnan(slow[live])):
        raise ValueError("a job with remaining work has no machine with positive rate")
    H = float((state.x[live] / slow[live]).sum())
    plan = time_indexed_lp(model, state.x, state.density, _capacity_support(lam, n, m), horizon=H)
    return plan.value, plan


# ---------------------------------------------------------------- interval grid

@dataclass
class IntervalGrid:
    rho: float
    breakpoints: np.ndarray  # a_1 < ... < a_{K+1}; interval h = [a_h, a_{h+1})
    horizon: float

    @property
    def lefts(self):
        return self.breakpoints[:-1]

    @property
    def lengths(self):
        return np.diff(self.breakpoints)

    def g(self, t):
        """Left endpoint a_h of the interval holding residual time t (slot a_h - 1)."""
        h = int(np.searchsorted(self.breakpoints, t + 1, side="right")) - 1
        return float(self.breakpoints[max(h, 0)])

    @classmethod
    def unit(cls, horizon):
        H = int(math.ceil(horizon))
        return cls(1.0, np.arange(1, H + 2, dtype=float), float(horizon))


def grid_sequence(rho, upto):
    inv = round(1 / rho)
    if inv < 1 or abs(inv * rho - 1) > 1e-12:
        raise ValueError("1/rho must be a positive integer")
    N = 10 * inv * inv
    a = list(range(1, N + 1))
    l = 1
    while a[-1] < upto:
        v = math.floor(N * (1 + rho) ** l + 1e-9)
        if v > a[-1]:
            a.append(v)
        l += 1
    return a


def build_interval_grid(rho, horizon):
    """Grid whose intervals cover residual time [0, horizon)."""
    need = int(math.ceil(horizon)) + 1
    a = grid_sequence(rho, need)
    K = int(np.searchsorted(a, need, side="left"))
    return IntervalGrid(rho, np.array(a[: K + 1], float), float(horizon))


def residual_horizon(env, state):
    n = state.n
    live = state.x > 0
    if not np.any(live):
        return 0.0
    rmax = min(env.max_rate(j, n) for j in range(n) if live[j])
    return float(math.ceil(state.x[live].sum() / rmax - 1e-12))


def build_residual_lp(env, state: RemainingState, grid: IntervalGrid, offset=1, model=None):
    """Interval-compressed time-indexed LP.

    A unit processed in interval h costs (a_h - offset) * w_j / p_j.
    Returns (LinearProgram, layout) with layout = (K, k).
    """
    model = env.model(state.n) if model is None else model
    n, k = state.n, model.k
    live = state.x > 0
    b = lpkit.LpBuilder()
    if not np.any(live):
        return b.build(), (0, k)
    e = np.zeros(k) if model.e is None else model.e
    cv = model.M.T @ state.density
    lens = grid.lengths
    K = len(lens)
    ubm = model.restrict(live)
    blocks = []
    for h in range(K):
        cost = (grid.lefts[h] - offset) * cv + e
        blocks.append(b.add_vars(k, cost=cost, upper=lens[h] * ubm))
    for h in range(K):
        for r in range(len(model.h)):
            nz = np.nonzero(model.G[r])[0]
            b.add_row(blocks[h][nz], model.G[r, nz], lpkit.LE, lens[h] * model.h[r])
    for j in np.nonzero(live)[0]:
        nz = np.nonzero(model.M[j])[0]
        idx = np.concatenate([blocks[h][nz] for h in range(K)])
        b.add_row(idx, np.tile(model.M[j, nz], K), lpkit.EQ, state.x[j])
    return b.build(), (K, k)


def solve_interval_lp(model_or_env, state, grid, offset=1):
    if isinstance(model_or_env, RateModel):
        lp, (K, k) = build_residual_lp(None, state, grid, offset, model=model_or_env)
        model = model_or_env
    else:
        model = model_or_env.model(state.n)
        lp, (K, k) = build_residual_lp(model_or_env, state, grid, offset)
    if K == 0:
        return 0.0, empty_plan(state.n, model.k)
    sol = lpkit.solve(lp, backend="highs")
    if not sol.ok:
        raise RuntimeError(f"interval LP {sol.status}; horizon too short?")
    Y = sol.x.reshape(K, k)
    urate = Y / grid.lengths[:, None]
    breaks = np.concatenate([[0.0], np.cumsum(grid.lengths)])
    plan = ResidualPlan(breaks, urate @ model.M.T, sol.objective, urate, {"grid": grid, "offset": offset})
    return sol.objective, plan


# ---------------------------------------------------------------- dispatch

@dataclass
class ResidualConfig:
    mode: str = "fractional"  # fractional | integral
    method: str = "auto"  # auto | closed_form | matching | exact | interval | weighted_unrelated
    rho: float = 0.25
    offset: int = 1
    unit_grid: bool = False


def solve_residual(env, state: RemainingState, config: ResidualConfig = None):
    cfg = config or ResidualConfig()
    n = state.n
    if not np.any(state.x > 0):
        return 0.0, empty_plan(n)
    method = cfg.method
    if cfg.mode == "integral":
        if method in ("auto", "closed_form") and isinstance(env, SingleMachine):
            return single_machine_residual(state.x, state.w)
        if method in ("auto", "matching") and isinstance(env, UnrelatedMachines):
            if np.any(state.w[state.x > 0] != state.w[state.x > 0][0]):
                raise ValueError("matching residual needs uniform weights")
            f, plan = matching_residual(env, state)
            w0 = float(state.w[state.x > 0][0])
            plan.value = w0 * f
            return w0 * f, plan
        raise ValueError(f"no integral residual for {env.kind} environments")
    if cfg.mode != "fractional":
        raise ValueError(f"unknown mode {cfg.mode!r}")
    if method == "weighted_unrelated":
        return weighted_unrelated_residual(env, state)
    if method in ("auto", "closed_form") and isinstance(env, SingleMachine):
        return single_machine_fractional(state)
    if method == "closed_form":
        raise ValueError(f"no closed form for {env.kind} environments")
    if method == "interval":
        H = residual_horizon(env, state)
        grid = IntervalGrid.unit(H) if cfg.unit_grid else build_interval_grid(cfg.rho, H)
        return solve_interval_lp(env, state, grid, cfg.offset)
    if method in ("auto", "exact"):
        return exact_fractional(env, state)
    raise ValueError(f"unknown residual method {method!r}")


def residual_value(env, state, config=None):
    return solve_residual(env, state, config)[0]


def residual_set_function(env, state: RemainingState, S, config=None):
    return residual_value(env, state.subset(S), config)
