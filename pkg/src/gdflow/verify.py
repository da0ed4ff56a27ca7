"""Property checkers and the potential-function monitor.

Each checker returns a report listing every violation with its witness, so
a failing property can be reproduced from the report alone.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (Instance, frac_weight_integral, fractional_weighted_flow, integral_weighted_flow,
                   remaining, weight_integrals)
from .envs import IdenticalMachines, Matroid, SingleMachine, speedup_demand
from .lpkit import hungarian
from .residual import (RemainingState, ResidualConfig, build_interval_grid, residual_horizon,
                       solve_interval_lp, solve_residual, weighted_unrelated_residual)


@dataclass
class PropertyReport:
    name: str
    tested: int = 0
    violations: list = field(default_factory=list)  # dicts with witness data and "residual"
    max_residual: float = -np.inf

    @property
    def ok(self):
        return not self.violations

    def record(self, residual, tol, **witness):
        """Count one test; keep it as a violation when residual > tol."""
        self.tested += 1
        self.max_residual = max(self.max_residual, float(residual))
        if residual > tol:
            self.violations.append({"residual": float(residual), **witness})

    def merge(self, other):
        self.tested += other.tested
        self.violations.extend(other.violations)
        self.max_residual = max(self.max_residual, other.max_residual)
        return self

    def to_dict(self):
        return {"name": self.name, "tested": self.tested, "violations": len(self.violations),
                "max_residual": None if self.tested == 0 else self.max_residual,
                "witnesses": self.violations[:5]}


# ---------------------------------------------------------------- supermodularity

def check_set_supermodular(g, n, tolerance=1e-6, name="supermodularity"):
    """Increment form: g(X+j) - g(X) >= g(Y+j) - g(Y) for all Y <= X <= J - j."""
    vals = np.array([g(frozenset(k for k in range(n) if m >> k & 1)) for m in range(1 << n)], float)
    rep = PropertyReport(name)
    for j in range(n):
        bit = 1 << j
        rest = [m for m in range(1 << n) if not m & bit]
        for X in rest:
            inc_x = vals[X | bit] - vals[X]
            # enumerate submasks Y of X
            Y = X
            while True:
                inc_y = vals[Y | bit] - vals[Y]
                rep.record(inc_y - inc_x, tolerance, job=j,
                           X=[k for k in range(n) if X >> k & 1], Y=[k for k in range(n) if Y >> k & 1])
                if Y == 0:
                    break
                Y = (Y - 1) & X
    return rep


def check_supermodularity(env, state: RemainingState, tolerance=1e-6, config: ResidualConfig = None):
    """Supermodularity of S -> f(x restricted to S)."""
    if state.n > 6:
        raise ValueError("supermodularity check enumerates 2^n subsets; n <= 6")

    def g(S):
        return solve_residual(env, state.subset(S), config)[0]
    return check_set_supermodular(g, state.n, tolerance)


# ---------------------------------------------------------------- gross substitutes

def check_gs(valuation, n, tolerance=1e-9):
    """Submodularity plus the triplet condition, exhaustively.

    triplet: v(S+ab) + v(S+c) <= max(v(S+ac) + v(S+b), v(S+bc) + v(S+a)).
    """
    if n > 8:
        raise ValueError("check_gs is exhaustive; n <= 8")
    vals = [valuation(frozenset(k for k in range(n) if m >> k & 1)) for m in range(1 << n)]
    rep = PropertyReport("gross_substitutes")
    for S in range(1 << n):
        out = [k for k in range(n) if not S >> k & 1]
        base = [k for k in range(n) if S >> k & 1]
        for a, b in itertools.combinations(out, 2):
            A, B = 1 << a, 1 << b
            resid = vals[S | A | B] + vals[S] - vals[S | A] - vals[S | B]
            rep.record(resid, tolerance, condition="submodular", S=base, a=a, b=b)
        for a, b, c in itertools.combinations(out, 3):
            A, B, C = 1 << a, 1 << b, 1 << c
            # the condition is symmetric in which pair sits on the left; test all three
            for x, y, z in ((A, B, C), (A, C, B), (B, C, A)):
                lhs = vals[S | x | y] + vals[S | z]
                rhs = max(vals[S | x | z] + vals[S | y], vals[S | y | z] + vals[S | x])
                rep.record(lhs - rhs, tolerance, condition="triplet", S=base,
                           pair=[k for k in range(n) if (x | y) >> k & 1],
                           single=[k for k in range(n) if z >> k & 1])
    return rep


def matroid_rank_valuation(env: Matroid, weights):
    weights = np.asarray(weights, float)
    return lambda S: env.greedy(weights, sorted(S))[0] if S else 0.0


def matching_valuation(weights):
    """Items are left vertices; v(S) = max weight matching of S into the right side."""
    W = np.asarray(weights, float)

    def v(S):
        S = sorted(S)
        if not S:
            return 0.0
        # zero-cost dummy columns let items stay unmatched
        cost = np.hstack([-W[S], np.zeros((len(S), len(S)))])
        _, total = hungarian(cost)
        return -float(total)
    return v


def symmetric_concave_valuation(g_values):
    """v(S) = g(|S|) for concave g given on 0..n."""
    g = np.asarray(g_values, float)
    return lambda S: float(g[len(S)])


def matroid_intersection_valuation(left, right, weights=None):
    """Weighted rank of the intersection of two partition matroids.

    Element e may be chosen when no other chosen element shares left[e] or
    right[e]; this is bipartite matching on edges, not gross substitutes.
    """
    n = len(left)
    w = np.ones(n) if weights is None else np.asarray(weights, float)

    def v(S):
        best = 0.0
        S = sorted(S)
        for k in range(len(S), 0, -1):
            for T in itertools.combinations(S, k):
                if len({left[e] for e in T}) == k and len({right[e] for e in T}) == k:
                    best = max(best, float(w[list(T)].sum()))
        return best
    return v


# ---------------------------------------------------------------- linear substitutes and demand claims

def log_price_grid(points=5, lo=0.1, hi=10.0):
    return np.exp(np.linspace(math.log(lo), math.log(hi), points))


def check_ls_demand(demand_oracle, n_items, price_grid=None, tolerance=1e-9):
    """Raising one price on the grid never lowers demand for any other item."""
    grid = log_price_grid() if price_grid is None else np.asarray(price_grid, float)
    if np.any(grid <= 0):
        raise ValueError("grid prices must be strictly positive")
    rep = PropertyReport("linear_substitutes")
    cache = {}

    def D(idx):
        if idx not in cache:
            cache[idx] = np.asarray(demand_oracle(grid[list(idx)]), float)
        return cache[idx]
    for idx in itertools.product(range(len(grid)), repeat=n_items):
        y = D(idx)
        for j in range(n_items):
            for up in range(idx[j] + 1, len(grid)):
                idx2 = idx[:j] + (up,) + idx[j + 1:]
                y2 = D(idx2)
                drop = np.delete(y - y2, j)
                rep.record(float(drop.max(initial=-np.inf)), tolerance, q=grid[list(idx)].tolist(),
                           raised=j, new_price=float(grid[up]))
    return rep


def min_valuation_demand(q):
    """Demand for v(y) = min(y1, y2) on [0,1]^2: both items or nothing."""
    return np.ones(2) if q[0] + q[1] < 1.0 else np.zeros(2)


def speedup_demand_oracle(env, j):
    return lambda q: speedup_demand(env, j, q).y


def check_demand_scaling(env, j, price_grid=None, scales=(1.0, 1.5, 2.0, 4.0), tolerance=1e-9):
    """Scaling all prices by lam >= 1 never raises any demanded amount."""
    grid = log_price_grid() if price_grid is None else np.asarray(price_grid, float)
    rep = PropertyReport("demand_scaling")
    for idx in itertools.product(range(len(grid)), repeat=env.D):
        q = grid[list(idx)]
        y = speedup_demand(env, j, q).y
        for lam in scales:
            y2 = speedup_demand(env, j, lam * q).y
            rep.record(float((y2 - y).max()), tolerance, q=q.tolist(), scale=lam)
    return rep


def check_price_monotonicity(env, j, price_grid=None, tolerance=1e-9):
    """For q' >= q on the grid, the speed at the demanded bundle does not increase."""
    grid = log_price_grid() if price_grid is None else np.asarray(price_grid, float)
    rep = PropertyReport("price_monotonicity")
    idxs = list(itertools.product(range(len(grid)), repeat=env.D))
    speed = {i: env.utility(j, speedup_demand(env, j, grid[list(i)]).y) for i in idxs}
    for i in idxs:
        for k in idxs:
            if k != i and all(b >= a for a, b in zip(i, k)):
                rep.record(speed[k] - speed[i], tolerance, q=grid[list(i)].tolist(),
                           q_raised=grid[list(k)].tolist())
    return rep


# ---------------------------------------------------------------- potential monitor

@dataclass
class PotentialReport:
    eps: float
    copies: int
    event_deltas: list = field(default_factory=list)  # (t, Phi(t+) - Phi(t-))
    drift: list = field(default_factory=list)  # (t, delta, residual)
    int_wA: float = 0.0
    int_wO: float = 0.0
    margin: float = 0.0  # c_eps int W~O + tol - int W~A
    phi_start: float = 0.0
    phi_end: float = 0.0
    tolerance: float = 1e-6
    drift_tolerance: float = 1e-5

    @property
    def max_event_delta(self):
        return max((d for _, d in self.event_deltas), default=0.0)

    @property
    def max_drift(self):
        return max((d for _, _, d in self.drift), default=-np.inf)

    @property
    def event_violations(self):
        return [(t, d) for t, d in self.event_deltas if d > self.tolerance]

    @property
    def drift_violations(self):
        return [v for v in self.drift if v[2] > self.drift_tolerance]

    @property
    def ok(self):
        return not self.event_violations and not self.drift_violations and self.margin >= 0

    def to_dict(self):
        return {"eps": self.eps, "copies": self.copies, "events": len(self.event_deltas),
                "max_event_delta": self.max_event_delta, "drift_samples": len(self.drift),
                "max_drift": None if not self.drift else self.max_drift,
                "int_wA": self.int_wA, "int_wO": self.int_wO, "margin": self.margin}


class _ResidualEval:
    """f on concatenated states, with one environment per copy layout."""

    def __init__(self, inst, weighted_unrelated=False, config=None):
        self.inst = inst
        self.env = inst.env
        self.wu = weighted_unrelated
        self.config = config or ResidualConfig()
        self._envs = {}

    def __call__(self, parts):
        # parts: list of remaining vectors, each indexed like inst.jobs
        n = self.inst.n
        k = len(parts)
        if k not in self._envs:
            self._envs[k] = self.env if k == 1 else self.env.for_jobs(list(range(n)) * k)
        x = np.concatenate(parts)
        if not np.any(x > 0):
            return 0.0
        w = np.tile(self.inst.weights, k)
        p = np.tile(self.inst.sizes, k)
        state = RemainingState(x, w, p)
        if self.wu:
            return weighted_unrelated_residual(self._envs[k], state)[0]
        return solve_residual(self._envs[k], state, self.config)[0]


def potential_function(traceA, traceO, inst: Instance, eps, mode="half", config=None):
    """-> (phi, copies) with phi(t, side) the potential just after/before t.

    half:   Phi = (2/eps) (f(A) - f(A || O) / 2)
    copies: Phi = (2/eps) (f(A) - eps f(A || (1/eps - 1) O)), weighted unrelated residual
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if mode == "half":
        copies, coef = 1, 0.5
    elif mode == "copies":
        inv = 1.0 / eps
        if abs(inv - round(inv)) > 1e-9:
            raise ValueError("copies mode needs 1/eps to be an integer")
        if inst.env.kind != "unrelated":
            raise ValueError("copies mode is defined for unrelated machines")
        copies, coef = int(round(inv)) - 1, eps
    else:
        raise ValueError(f"unknown potential mode {mode!r}")
    f = _ResidualEval(inst, weighted_unrelated=(mode == "copies"), config=config)

    def phi(t, side="right"):
        xa = remaining(traceA, inst, t, side)
        xo = remaining(traceO, inst, t, side)
        fa = f([xa])
        fao = f([xa] + [xo] * copies) if copies else fa
        return (2.0 / eps) * (fa - coef * fao)
    return phi, copies


def potential_monitor(traceA, traceO, inst: Instance, eps, mode="half", samples=3,
                      tolerance=1e-6, drift_tolerance=1e-5, drift_constant=None, config=None):
    """Track Phi (see potential_function) along a GD run A against a reference schedule O.

    Phi is evaluated on both sides of every arrival and completion. Between
    consecutive events the drift residual
        [Phi(t+d) - Phi(t) + int_t^{t+d} (W~A - c W~O)] / d
    is sampled at `samples` evenly spread points with d = gap/16 (at least
    1e-6); samples=None sweeps the whole gap in 16 steps.
    """
    phi, copies = potential_function(traceA, traceO, inst, eps, mode, config)
    c_eps = (2 + eps) / eps if drift_constant is None else drift_constant

    rep = PotentialReport(eps, copies, tolerance=tolerance, drift_tolerance=drift_tolerance)
    comp = [c[~np.isnan(c)] for c in (traceA.completions, traceO.completions)]
    events = np.unique(np.concatenate([inst.releases] + comp))
    left, right = {}, {}
    for t in events:
        left[t] = phi(t, "left")
        right[t] = phi(t, "right")
        rep.event_deltas.append((float(t), right[t] - left[t]))
    for a, b in zip(events[:-1], events[1:]):
        gap = b - a
        if gap < 1e-6:
            continue
        d = max(gap / 16, 1e-6)
        if samples is None:
            starts = [a + k * d for k in range(16)]
        else:
            starts = sorted({a, *(a + (gap - d) * (i / max(samples - 1, 1)) for i in range(samples))})
        vals = {}

        def phi_at(t):
            if t <= a:
                return right[a]
            if t >= b - 1e-15 * (1 + b):
                return left[b]
            if t not in vals:
                vals[t] = phi(t, "right")
            return vals[t]
        for t in starts:
            t1 = min(t + d, b)
            dd = t1 - t
            wa = frac_weight_integral(traceA, inst, t, t1)
            wo = frac_weight_integral(traceO, inst, t, t1)
            resid = (phi_at(t1) - phi_at(t) + wa - c_eps * wo) / dd
            rep.drift.append((float(t), float(dd), float(resid)))
    rep.int_wA = weight_integrals(traceA, inst)[1]
    rep.int_wO = weight_integrals(traceO, inst)[1]
    rep.margin = c_eps * rep.int_wO + tolerance - rep.int_wA
    if len(events):
        rep.phi_start, rep.phi_end = left[events[0]], right[events[-1]]
    return rep


# ---------------------------------------------------------------- GD rate lemma

def gd_rate_report(trace, inst: Instance, mode="fractional", config=None, tolerance=1e-5):
    """Residual decrease per inter-event segment against s W (integral) or s W~ (fractional).

    mode "matching" uses the unweighted unrelated matching residual and the
    target s |alive|. Residuals are relative deviations; the segment list is
    stored on the report as `segments`.
    """
    if mode not in ("fractional", "integral", "matching"):
        raise ValueError(f"unknown rate mode {mode!r}")
    s = trace.speed
    cfg = config or ResidualConfig(mode="fractional" if mode == "fractional" else "integral")
    env = inst.env
    w, p = inst.weights, inst.sizes

    def f(x):
        if not np.any(x > 0):
            return 0.0
        return solve_residual(env, RemainingState(x, w, p), cfg)[0]

    rep = PropertyReport(f"gd_rate_{mode}")
    rep.segments = []
    comp = trace.completions[~np.isnan(trace.completions)]
    events = np.unique(np.concatenate([inst.releases, comp]))
    for a, b in zip(events[:-1], events[1:]):
        if b - a <= 1e-12 * (1 + b):
            continue
        xa = remaining(trace, inst, a, "right")
        xb = remaining(trace, inst, b, "left")
        drop = f(xa) - f(xb)
        if mode == "fractional":
            target = s * frac_weight_integral(trace, inst, a, b)
        else:
            mid = remaining(trace, inst, 0.5 * (a + b), "right") > 0
            W = float(w[mid].sum()) if mode == "integral" else float(mid.sum())
            target = s * W * (b - a)
        dev = abs(drop - target) / max(abs(target), 1e-12) if abs(target) > 1e-12 else abs(drop)
        rep.segments.append((float(a), float(b), drop, target))
        rep.record(dev, tolerance, start=float(a), end=float(b), decrease=drop, target=target)
    return rep


# ---------------------------------------------------------------- interval grid lemmas

def _grid_f(env, x, state, rho, offset):
    st = RemainingState(x, state.w, state.p)
    if not np.any(st.x > 0):
        return 0.0, None
    H = residual_horizon(env, st)
    return solve_interval_lp(env, st, build_interval_grid(rho, H), offset)


def check_grid_decrease(env, state: RemainingState, rho, offset=0, tolerance=1e-6):
    """Running the first unit of the interval-LP plan lowers the LP value by
    at least W~ / (1 + 2 rho)."""
    rep = PropertyReport("grid_first_unit_decrease")
    f0, plan = _grid_f(env, state.x, state, rho, offset)
    if plan is None:
        return rep
    z1 = plan.rates[0] * (plan.breaks[1] - plan.breaks[0])
    f1, _ = _grid_f(env, np.clip(state.x - z1, 0.0, None), state, rho, offset)
    need = state.frac_weight / (1 + 2 * rho)
    rep.record(need - (f0 - f1), tolerance, rho=rho, decrease=f0 - f1, bound=need)
    return rep


def random_feasible_rate(env, n, alive, rng):
    """A random point of P supported on alive jobs: scaled vertex of a random direction."""
    c = np.where(alive, rng.uniform(0.05, 1.0, n), 0.0)
    _, z = env.max_linear(c)
    z = np.where(alive, np.clip(z, 0.0, None), 0.0)
    return z * rng.uniform(0.2, 1.0)


def check_rate_upper_bound(env, state: RemainingState, rho, rng, delta=1e-3, trials=3, offset=1,
                           tolerance=1e-6):
    """No processing z in P lowers the interval-LP value by more than delta W~."""
    rep = PropertyReport("grid_rate_upper_bound")
    alive = state.x > 0
    if not np.any(alive):
        return rep
    f0, _ = _grid_f(env, state.x, state, rho, offset)
    for _ in range(trials):
        z = random_feasible_rate(env, state.n, alive, rng)
        step = np.minimum(delta * z, state.x)  # P is downward closed
        f1, _ = _grid_f(env, state.x - step, state, rho, offset)
        bound = delta * state.frac_weight
        rep.record((f0 - f1) - bound, tolerance, rho=rho, z=z.tolist(), decrease=f0 - f1, bound=bound)
    return rep


# ---------------------------------------------------------------- competitive table

TABLE_COLUMNS = ("instance_id", "env_kind", "policy", "speed", "integral_flow", "fractional_flow",
                 "opt_fractional", "opt_integral_or_blank", "ratio_fractional", "ratio_integral_or_blank")


def integral_dp_applicable(inst):
    env = inst.env
    if not isinstance(env, (SingleMachine, IdenticalMachines)):
        return False
    return bool(np.all(inst.sizes == np.round(inst.sizes)) and np.all(inst.releases == np.round(inst.releases)))


def competitive_table(instances, policies, speeds, dp_cap=None, on_trace=None):
    """Rows (dicts keyed by TABLE_COLUMNS) for every (instance, policy, speed).

    instances: list of Instance or (instance_id, Instance) pairs. on_trace,
    when given, is called as on_trace(inst, trace) for every simulated run.
    """
    from .policies import make_policy
    from .sim import DP_STATE_CAP, SimConfig, offline_opt_fractional, offline_opt_integral_dp, simulate

    rows = []
    for k, item in enumerate(instances):
        iid, inst = item if isinstance(item, tuple) else (str(k), item)
        opt_f, _ = offline_opt_fractional(inst)
        opt_i = None
        if integral_dp_applicable(inst):
            try:
                opt_i = offline_opt_integral_dp(inst, cap=dp_cap or DP_STATE_CAP)
            except ValueError:
                opt_i = None
        for name in policies:
            for s in speeds:
                trace, _ = simulate(inst, make_policy(name), SimConfig(speed=float(s)))
                if on_trace is not None:
                    on_trace(inst, trace)
                fi = integral_weighted_flow(trace, inst)
                ff = fractional_weighted_flow(trace, inst)
                rows.append({
                    "instance_id": iid, "env_kind": inst.env.kind, "policy": name, "speed": float(s),
                    "integral_flow": fi, "fractional_flow": ff, "opt_fractional": opt_f,
                    "opt_integral_or_blank": opt_i,
                    "ratio_fractional": ff / opt_f if opt_f > 0 else (1.0 if ff == 0 else np.inf),
                    "ratio_integral_or_blank": None if opt_i is None else (fi / opt_i if opt_i > 0 else 1.0),
                })
    return rows
