"""Event-driven continuous-time simulation and offline optima."""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np

from .core import Instance, ScheduleTrace, validate_instance
from .envs import IdenticalMachines, SingleMachine
from .policies import Policy, SimView
from .residual import _support_fn, time_indexed_lp

EVENT_KINDS = ("arrival", "completion", "plan_breakpoint", "fraction_completion", "recompute")

# callables observer(inst, trace), run on every finished simulated or offline trace
TRACE_OBSERVERS = []


def _notify(inst, trace):
    for obs in TRACE_OBSERVERS:
        obs(inst, trace)


@dataclass
class SimConfig:
    speed: float = 1.0
    delta: float | None = None  # monitor step; None picks gap / 16
    check_rates: bool = True
    rate_tol: float = 1e-7
    max_events: int = 100000

    def check(self):
        errs = []
        if not self.speed >= 1:
            errs.append("speed must be >= 1")
        if self.delta is not None and not self.delta > 0:
            errs.append("delta must be > 0")
        return errs


@dataclass
class Event:
    kind: str
    t: float
    job: int | None = None


@dataclass
class EventLog:
    events: list = field(default_factory=list)

    def add(self, kind, t, job=None):
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        self.events.append(Event(kind, float(t), job))

    def times(self, kind=None):
        return [e.t for e in self.events if kind is None or e.kind == kind]

    def check(self, n):
        errs = []
        ts = self.times()
        if any(b < a for a, b in zip(ts, ts[1:])):
            errs.append("event times decrease")
        arr = [e.job for e in self.events if e.kind == "arrival"]
        done = [e.job for e in self.events if e.kind == "completion"]
        if sorted(arr) != list(range(n)):
            errs.append("every job needs exactly one arrival")
        if len(done) != len(set(done)):
            errs.append("a job completed twice")
        return errs


class InfeasibleRates(RuntimeError):
    pass


def simulate(inst: Instance, policy: Policy, config: SimConfig = None):
    """Run policy on inst; returns (ScheduleTrace, EventLog)."""
    cfg = config or SimConfig()
    errs = validate_instance(inst) + cfg.check()
    if errs:
        raise ValueError("; ".join(errs))
    n, s = inst.n, float(cfg.speed)
    r, p = inst.releases, inst.sizes
    log = EventLog()
    policy.reset(inst, s, log)
    x = p.copy()
    arrived = np.zeros(n, bool)
    done = np.zeros(n, bool)
    C = np.full(n, np.nan)
    starts, ends, rows, assigns = [], [], [], []
    t = float(r.min()) if n else 0.0
    if n and t > 0:
        # idle prefix keeps the trace anchored at 0
        starts.append(0.0), ends.append(t), rows.append(np.zeros(n)), assigns.append(None)
    just_done = []
    for _ in range(cfg.max_events):
        new = [j for j in range(n) if not arrived[j] and r[j] <= t]
        for j in new:
            arrived[j] = True
            log.add("arrival", t, j)
        alive = arrived & ~done
        if not np.any(alive) and arrived.all():
            break
        view = SimView(t, np.where(alive, x, 0.0), alive, new, just_done)
        dec = policy.decide(view)
        z = np.where(alive, np.asarray(dec.rates, float), 0.0)
        if cfg.check_rates and np.any(z > 0) and inst.env is not None:
            if not inst.env.is_feasible_rate(z / s, tol=cfg.rate_tol):
                raise InfeasibleRates(f"{policy.name} emitted infeasible rates {z / s} at t={t}")
        pending = r[~arrived]
        t_arr = float(pending.min()) if len(pending) else np.inf
        run = z > 0
        t_done = t + float(np.min(x[run] / z[run])) if np.any(run) else np.inf
        t_pol = float(dec.valid_until)
        if t_pol <= t:
            raise RuntimeError(f"{policy.name} returned valid_until {t_pol} <= now {t}")
        t_next = min(t_arr, t_pol, t_done)
        if not np.isfinite(t_next):
            raise RuntimeError(f"{policy.name} stalled at t={t} with jobs alive")
        # a completion within rounding of an arrival or plan breakpoint joins it
        tol = 1e-12 * (1 + abs(t_next))
        for v in (t_arr, t_pol):
            if abs(v - t_next) <= tol:
                t_next = v
                break
        x = x - z * (t_next - t)
        fin = alive & (x <= 1e-9 * np.maximum(p, 1.0))
        if t_next == t_pol:
            log.add(dec.until_event, t_next)
        starts.append(t), ends.append(t_next), rows.append(z), assigns.append(dec.assign)
        just_done = []
        for j in np.nonzero(fin)[0]:
            x[j] = 0.0
            done[j] = True
            C[j] = t_next
            just_done.append(int(j))
            log.add("completion", t_next, int(j))
        t = t_next
    else:
        raise RuntimeError("event budget exhausted")
    rates = np.array(rows).reshape(-1, n)
    has_assign = any(a is not None for a in assigns)
    trace = ScheduleTrace(np.array(starts), np.array(ends), rates, C, s,
                          assigns if has_assign else None, {"policy": policy.name})
    _notify(inst, trace)
    return trace, log


# ---------------------------------------------------------------- offline optima

def offline_opt_fractional(inst: Instance):
    """Minimum total fractional weighted flow time at speed 1 -> (value, trace)."""
    n = inst.n
    if n == 0:
        return 0.0, ScheduleTrace(np.zeros(0), np.zeros(0), np.zeros((0, 0)), np.zeros(0))
    env = inst.env
    model = env.model(n)
    p, w, r = inst.sizes, inst.weights, inst.releases
    c = w / p
    plan = time_indexed_lp(model, p, c, _support_fn(env, model, n), release=r)
    # plan.value is sum_j c_j int t z_j; flow subtracts the release part
    value = plan.value - float(c @ (r * p))
    B, R = plan.breaks, np.clip(plan.rates, 0.0, None)  # LP roundoff can leave -1e-11
    work = np.cumsum(np.diff(B)[:, None] * R, axis=0)
    C = np.full(n, np.nan)
    for j in range(n):
        k = np.nonzero(work[:, j] >= p[j] * (1 - 1e-12))[0]
        if len(k):
            C[j] = B[k[0] + 1]
    trace = ScheduleTrace(B[:-1].copy(), B[1:].copy(), R.copy(), C, 1.0, None,
                          {"policy": "offline_opt", "gap": plan.meta.get("gap")})
    assign = None
    if plan.u is not None and hasattr(env, "m") and plan.u.shape[1] == n * getattr(env, "m", 0):
        assign = [u.reshape(n, env.m) for u in plan.u]
    trace.assign = assign
    _notify(inst, trace)
    return value, trace


DP_STATE_CAP = 200000


def offline_opt_integral_dp(inst: Instance, cap=DP_STATE_CAP):
    """Exact min total weighted flow time by DP over unit steps.

    Needs integer releases and sizes on one machine or m identical machines.
    With integer data some optimal preemptive schedule switches only at
    integer times, so unit steps lose nothing.
    """
    n = inst.n
    if n == 0:
        return 0.0
    env = inst.env
    if isinstance(env, SingleMachine):
        m = 1
    elif isinstance(env, IdenticalMachines):
        m = env.m
    else:
        raise ValueError("integral DP supports single or identical machines only")
    p, r, w = inst.sizes, inst.releases, inst.weights
    if np.any(p != np.round(p)) or np.any(r != np.round(r)):
        raise ValueError("integral DP needs integer sizes and releases")
    p = p.astype(int)
    r = r.astype(int)
    # states: remaining-size vectors times the release-distinct time prefix
    space = float(np.prod(p + 1, dtype=float)) * (len(set(r.tolist())) + 1)
    if space > cap:
        raise ValueError(f"DP state space {space:.0f} exceeds cap {cap}")

    @functools.lru_cache(maxsize=None)
    def best(t, rem):
        # cost from t on: each unit step costs the weight of the alive jobs
        if not any(rem):
            return 0.0
        alive = [j for j in range(n) if rem[j] > 0 and r[j] <= t]
        unrel = [j for j in range(n) if rem[j] > 0 and r[j] > t]
        if not alive and unrel:
            t2 = min(r[j] for j in unrel)
            return best(t2, rem)
        if not alive:
            return 0.0
        step = float(sum(w[j] for j in alive))
        out = np.inf
        k = min(m, len(alive))
        for S in itertools.combinations(alive, k):
            nxt = list(rem)
            for j in S:
                nxt[j] -= 1
            out = min(out, best(t + 1, tuple(nxt)))
        return step + out

    val = best(int(r.min()), tuple(int(v) for v in p))
    best.cache_clear()
    return float(val)
