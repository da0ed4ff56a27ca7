"""Online policies: gradient descent on the residual optimum, its approximate
variant for weighted unrelated machines, immediate dispatch, and baselines.

Every policy emits rates already scaled by the simulation speed; the
simulator divides by the speed before checking membership in P.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lpkit
from .envs import IdenticalMachines, SingleMachine, UnrelatedMachines
from .residual import (RemainingState, ResidualConfig, per_machine_residual, solve_residual,
                       weighted_unrelated_residual)

ZTOL = 1e-9


@dataclass
class PolicyDecision:
    rates: np.ndarray
    valid_until: float = np.inf
    assign: np.ndarray | None = None  # job x machine time shares, unrelated envs
    until_event: str = "plan_breakpoint"


@dataclass
class SimView:
    """What a policy may look at: clairvoyant remaining sizes of released jobs."""
    t: float
    x: np.ndarray  # remaining work, zero for unreleased and completed jobs
    alive: np.ndarray
    arrived: list  # jobs released exactly at this event
    completed: list  # jobs completed exactly at this event


class Policy:
    name = "policy"

    def reset(self, inst, speed, log=None):
        self.inst = inst
        self.env = inst.env
        self.speed = float(speed)
        self.log = log
        self.w = inst.weights
        self.p = inst.sizes

    def _event(self, kind, t, job=None):
        if self.log is not None:
            self.log.add(kind, t, job)

    def decide(self, view: SimView) -> PolicyDecision:
        raise NotImplementedError


# ---------------------------------------------------------------- gradient descent

class GdPolicy(Policy):
    """Follow the residual-optimal plan; recompute only when jobs arrive.

    paranoid=True also recomputes at every other event and records how far
    the new residual value is from the tail value of the plan being replaced.
    """

    def __init__(self, mode="fractional", config: ResidualConfig = None, paranoid=False):
        self.mode = mode
        self.config = config or ResidualConfig(mode=mode)
        self.config.mode = mode
        self.paranoid = paranoid
        self.name = f"gd_{mode}"

    def reset(self, inst, speed, log=None):
        super().reset(inst, speed, log)
        self.plan = None
        self.t0 = 0.0
        self.recomputes = 0
        self.drift = []  # paranoid: |f(new) - tail(old)|

    def _tail_value(self, tau):
        """Residual value of the current plan from residual time tau on."""
        P = self.plan
        c = self.w / self.p if self.mode == "fractional" else None
        if c is None:
            return None
        val = 0.0
        for k in range(P.n_segments):
            a, b = max(P.breaks[k], tau), P.breaks[k + 1]
            if b > a:
                val += float(c @ P.rates[k]) * 0.5 * ((b - tau) ** 2 - (a - tau) ** 2)
        return val

    def _recompute(self, view):
        state = RemainingState(np.where(view.alive, view.x, 0.0), self.w, self.p)
        old = None
        if self.paranoid and self.plan is not None and not view.arrived:
            old = self._tail_value(self.speed * (view.t - self.t0))
        f, plan = solve_residual(self.env, state, self.config)
        if old is not None:
            self.drift.append(abs(f - old))
        self.plan, self.t0 = plan, view.t
        self.recomputes += 1
        self._event("recompute", view.t)

    def decide(self, view):
        n = len(view.x)
        if not np.any(view.alive):
            self.plan = None
            return PolicyDecision(np.zeros(n))
        tau = self.speed * (view.t - self.t0)
        if (view.arrived or self.plan is None or tau >= self.plan.end - 1e-12
                or (self.paranoid and view.completed)):
            self._recompute(view)
            tau = 0.0
        P = self.plan
        k = P.segment_at(tau)
        z = self.speed * P.rates[k] * view.alive
        until = self.t0 + P.breaks[k + 1] / self.speed
        assign = None
        if isinstance(self.env, UnrelatedMachines) and P.u is not None and P.u.shape[1] == n * self.env.m:
            assign = P.u[k].reshape(n, self.env.m)
        return PolicyDecision(z, until, assign, "plan_breakpoint")


def gd_policy(env=None, mode="fractional", **kw):
    return GdPolicy(mode, **kw)


# ---------------------------------------------------------------- approximate GD, weighted unrelated

@dataclass
class ApproxGdState:
    plan: object = None
    cutoffs: np.ndarray = None  # t~_i per machine
    zhat: np.ndarray = None  # job x machine fractional matching
    components: list = field(default_factory=list)  # (theta, job -> machine or -1)
    slot: float = 0.0


def extract_matching(plan, lam, x):
    """Per-machine cutoff t~_i and zhat_ij = int_0^{t~_i} z_ij / p_ij.

    p_ij = x_j / lam_ij is job j's current processing time on machine i and
    t~_i is the first residual time where the machine's fractions sum to 1
    (the plan end when they never do).
    """
    n, m = lam.shape
    B = plan.breaks
    U = plan.u.reshape(-1, n, m) if plan.n_segments else np.zeros((0, n, m))
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_p = np.where(x[:, None] > 0, lam / np.where(x[:, None] > 0, x[:, None], 1.0), 0.0)
    cut = np.full(m, B[-1] if len(B) else 0.0)
    zhat = np.zeros((n, m))
    for i in range(m):
        acc = 0.0
        for k in range(len(B) - 1):
            speed = float(U[k, :, i] @ inv_p[:, i])  # fraction per unit residual time
            d = B[k + 1] - B[k]
            if speed > 0 and acc + speed * d >= 1.0:
                dt = (1.0 - acc) / speed
                cut[i] = B[k] + dt
                zhat[:, i] += U[k, :, i] * inv_p[:, i] * dt
                acc = 1.0
                break
            acc += speed * d
            zhat[:, i] += U[k, :, i] * inv_p[:, i] * d
    return cut, zhat


def decompose_matching(zhat):
    """Birkhoff components of a job x machine fractional matching."""
    n, m = zhat.shape
    N = max(n, m)
    Z = np.zeros((N, N))
    Z[:n, :m] = np.clip(zhat, 0.0, None)
    comps = lpkit.birkhoff_decompose(Z)
    out = []
    for theta, match in comps:
        mm = np.array([int(match[j]) if match[j] < m else -1 for j in range(n)])
        out.append((float(theta), mm))
    rec = np.zeros((n, m))
    for theta, mm in out:
        for j, i in enumerate(mm):
            if i >= 0:
                rec[j, i] += theta
    return out, float(np.max(np.abs(rec - zhat), initial=0.0))


class ApproxGdPolicy(Policy):
    """Recompute the weighted residual LP at arrivals, completions and
    fraction-completion events; between them, time-share the Birkhoff
    components of zhat across a slot of length D = min_supp p_ij / s."""
    name = "approx_gd"

    def __init__(self, grid=None):
        self.grid = grid

    def reset(self, inst, speed, log=None):
        super().reset(inst, speed, log)
        if not isinstance(self.env, UnrelatedMachines):
            raise ValueError("approx_gd needs an unrelated-machines environment")
        self.state = ApproxGdState()
        self.stats = []  # per recompute: marginals and recomposition error
        self.slot_start = 0.0
        self.sub = []  # (end time, match)

    def _recompute(self, view):
        n, m = len(view.x), self.env.m
        lam = self.env.rates[:n]
        x = np.where(view.alive, view.x, 0.0)
        state = RemainingState(x, self.w, self.p)
        f, plan = weighted_unrelated_residual(self.env, state, self.grid)
        if plan.u is None:
            raise RuntimeError("weighted residual LP returned no shares")
        cut, zhat = extract_matching(plan, lam, x)
        comps, err = decompose_matching(zhat)
        supp = zhat > ZTOL
        with np.errstate(divide="ignore"):
            pij = np.where(lam > 0, x[:, None] / np.where(lam > 0, lam, 1.0), np.inf)
        D = float(np.min(pij[supp])) / self.speed if np.any(supp) else 0.0
        self.state = ApproxGdState(plan, cut, zhat, comps, D)
        self.stats.append({"t": view.t, "value": f, "row_max": float(zhat.sum(1).max(initial=0)),
                           "col_max": float(zhat.sum(0).max(initial=0)), "recompose_err": err,
                           "slot": D})
        self.sub, t = [], view.t
        for theta, match in comps:
            if theta * D > 0:
                t += theta * D
                self.sub.append((t, match))
        self._event("recompute", view.t)

    def decide(self, view):
        n = len(view.x)
        if not np.any(view.alive):
            self.sub = []
            return PolicyDecision(np.zeros(n))
        while self.sub and self.sub[0][0] <= view.t + 1e-12:
            self.sub.pop(0)
        if view.arrived or view.completed or not self.sub:
            self._recompute(view)
        if not self.sub:
            raise RuntimeError("approx_gd produced an empty slot with jobs alive")
        end, match = self.sub[0]
        lam = self.env.rates[:n]
        z = np.zeros(n)
        A = np.zeros((n, self.env.m))
        for j, i in enumerate(match):
            if i >= 0 and view.alive[j]:
                z[j] = self.speed * lam[j, i]
                A[j, i] = 1.0
        kind = "fraction_completion" if len(self.sub) == 1 else "plan_breakpoint"
        return PolicyDecision(z, end, A, kind)


def approx_gd_weighted_unrelated(grid=None):
    return ApproxGdPolicy(grid)


# ---------------------------------------------------------------- immediate dispatch

class ImmediateDispatchPolicy(Policy):
    """Send each arrival to the machine whose residual grows least; never migrate.

    Each machine runs its job of highest w_j / p_ij(t) (Smith on remaining sizes).
    """
    name = "immediate_dispatch"

    def reset(self, inst, speed, log=None):
        super().reset(inst, speed, log)
        self.lam = self._rates(inst)
        self.machine = {}

    @staticmethod
    def _rates(inst):
        env, n = inst.env, inst.n
        if isinstance(env, UnrelatedMachines):
            return env.rates[:n]
        if isinstance(env, IdenticalMachines):
            return np.ones((n, env.m))
        if isinstance(env, SingleMachine):
            return np.ones((n, 1))
        raise ValueError("immediate dispatch needs a machine environment")

    def increments(self, view, j):
        m = self.lam.shape[1]
        out = np.full(m, np.inf)
        for i in range(m):
            if self.lam[j, i] <= 0:
                continue
            A = [k for k, mi in self.machine.items() if mi == i and view.alive[k]]
            x = view.x[A] if A else np.zeros(0)
            base = per_machine_residual(self.lam[A, i], x, self.w[A])
            x2 = np.append(x, view.x[j])
            with_j = per_machine_residual(self.lam[A + [j], i], x2, self.w[A + [j]])
            out[i] = with_j - base
        return out

    def decide(self, view):
        n = len(view.x)
        for j in sorted(view.arrived):
            d = self.increments(view, j)
            if not np.any(np.isfinite(d)):
                raise ValueError(f"job {j} has no machine with positive rate")
            self.machine[j] = int(np.argmin(d))  # first minimum = lowest index
        z = np.zeros(n)
        A = np.zeros((n, self.lam.shape[1]))
        for i in range(self.lam.shape[1]):
            A_i = [k for k, mi in self.machine.items() if mi == i and view.alive[k]]
            if not A_i:
                continue
            j = max(A_i, key=lambda k: (self.w[k] * self.lam[k, i] / view.x[k], -k))
            z[j] = self.speed * self.lam[j, i]
            A[j, i] = 1.0
        return PolicyDecision(z, np.inf, A, "plan_breakpoint")


def immediate_dispatch_policy():
    return ImmediateDispatchPolicy()


# ---------------------------------------------------------------- baselines

class BaselinePolicy(Policy):
    KINDS = ("srpt", "highest_density_first", "fifo", "processor_sharing")

    def __init__(self, kind):
        if kind not in self.KINDS:
            raise ValueError(f"unknown baseline {kind!r}")
        self.kind = self.name = kind

    def reset(self, inst, speed, log=None):
        super().reset(inst, speed, log)
        env = inst.env
        if isinstance(env, SingleMachine):
            self.m = 1
        elif isinstance(env, IdenticalMachines):
            self.m = env.m
        else:
            raise ValueError(f"{self.kind} runs on single or identical machines only")
        self.r = inst.releases

    def decide(self, view):
        n = len(view.x)
        z = np.zeros(n)
        alive = np.nonzero(view.alive)[0]
        if not len(alive):
            return PolicyDecision(z)
        if self.kind == "processor_sharing":
            z[alive] = self.speed * min(1.0, self.m / len(alive))
            return PolicyDecision(z)
        key = {
            "srpt": lambda j: (view.x[j], j),
            "highest_density_first": lambda j: (-self.w[j] / view.x[j], j),
            "fifo": lambda j: (self.r[j], j),
        }[self.kind]
        z[sorted(alive, key=key)[: self.m]] = self.speed
        return PolicyDecision(z)


def baseline_policy(kind):
    return BaselinePolicy(kind)


POLICIES = {
    "gd": lambda: GdPolicy("fractional"),
    "gd_fractional": lambda: GdPolicy("fractional"),
    "gd_integral": lambda: GdPolicy("integral"),
    "approx_gd": ApproxGdPolicy,
    "immediate_dispatch": ImmediateDispatchPolicy,
    "srpt": lambda: BaselinePolicy("srpt"),
    "highest_density_first": lambda: BaselinePolicy("highest_density_first"),
    "hdf": lambda: BaselinePolicy("highest_density_first"),
    "fifo": lambda: BaselinePolicy("fifo"),
    "processor_sharing": lambda: BaselinePolicy("processor_sharing"),
}


def make_policy(name):
    if name not in POLICIES:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}")
    return POLICIES[name]()
