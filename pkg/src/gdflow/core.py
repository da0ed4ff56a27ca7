"""Jobs, instances, realized schedules and flow-time metrics.

All integrals are evaluated exactly over piecewise-constant rate segments.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

COMPLETE_TOL = 1e-9


@dataclass(frozen=True)
class Job:
    id: Any
    release: float
    size: float
    weight: float = 1.0


@dataclass
class Instance:
    jobs: list
    env: Any = None

    @property
    def n(self):
        return len(self.jobs)

    @property
    def releases(self):
        return np.array([j.release for j in self.jobs], float)

    @property
    def sizes(self):
        return np.array([j.size for j in self.jobs], float)

    @property
    def weights(self):
        return np.array([j.weight for j in self.jobs], float)

    def ids(self):
        return [j.id for j in self.jobs]


def validate_instance(inst: Instance):
    errs = []
    seen = set()
    for k, j in enumerate(inst.jobs):
        if not j.size > 0:
            errs.append("size must be > 0")
        if not j.release >= 0:
            errs.append("release must be >= 0")
        if not j.weight >= 0:
            errs.append("weight must be >= 0")
        if j.id in seen:
            errs.append(f"duplicate job id {j.id!r}")
        seen.add(j.id)
    if inst.env is not None:
        errs.extend(inst.env.check(inst.n))
    return errs


@dataclass
class ScheduleTrace:
    """Piecewise-constant realized rates z_j(t) over global time.

    `rates[k]` applies on [starts[k], ends[k]). `assign[k]`, when present, is
    the job x machine time-share matrix behind the rates (unrelated envs).
    """
    starts: np.ndarray
    ends: np.ndarray
    rates: np.ndarray
    completions: np.ndarray  # nan = unfinished
    speed: float = 1.0
    assign: list | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_segments(self):
        return len(self.starts)

    @property
    def horizon(self):
        return float(self.ends[-1]) if len(self.ends) else 0.0

    def work_until(self, t):
        """Cumulative work per job processed in [0, t]."""
        if not len(self.starts):
            return np.zeros(self.rates.shape[1] if self.rates.ndim == 2 else 0)
        dt = np.clip(np.minimum(self.ends, t) - self.starts, 0.0, None)
        return dt @ self.rates

    def check(self, inst: Instance, tol=1e-7):
        errs = []
        s, e = self.starts, self.ends
        if np.any(e <= s):
            errs.append("segment with end <= start")
        if len(s) > 1 and np.any(np.abs(s[1:] - e[:-1]) > 1e-12 * (1 + np.abs(e[:-1]))):
            errs.append("segments not contiguous")
        if np.any(self.rates < -1e-12):
            errs.append("negative rate")
        r = inst.releases
        for k in range(len(s)):
            act = self.rates[k] > 1e-12
            if np.any(act & (r > s[k] + 1e-9)):
                errs.append(f"job processed before release in segment {k}")
            done = ~np.isnan(self.completions) & (self.completions <= s[k] + 1e-12)
            if np.any(act & done):
                errs.append(f"completed job processed in segment {k}")
        work = self.work_until(np.inf)
        p = inst.sizes
        fin = ~np.isnan(self.completions)
        bad = fin & (np.abs(work - p) > tol * np.maximum(1, p))
        if np.any(bad):
            errs.append(f"work mismatch for jobs {np.nonzero(bad)[0].tolist()}")
        if inst.env is not None:
            for k in range(len(s)):
                if not inst.env.is_feasible_rate(self.rates[k] / self.speed, tol=1e-7):
                    errs.append(f"infeasible rates in segment {k}")
                    break
        return errs


@dataclass
class Metrics:
    integral_weighted_flow: float
    fractional_weighted_flow: float
    flows: np.ndarray
    fractional_flows: np.ndarray


def _require_complete(trace, inst):
    if inst.n and np.any(np.isnan(trace.completions)):
        raise ValueError("trace has unfinished jobs")


def integral_weighted_flow(trace: ScheduleTrace, inst: Instance) -> float:
    if inst.n == 0:
        return 0.0
    _require_complete(trace, inst)
    return float(inst.weights @ (trace.completions - inst.releases))


def fractional_flows(trace: ScheduleTrace, inst: Instance):
    """Per job (1/p_j) * int (t - r_j) z_j(t) dt."""
    if inst.n == 0:
        return np.zeros(0)
    a, b = trace.starts, trace.ends
    tint = 0.5 * (b * b - a * a)  # int t dt per segment
    dt = b - a
    num = tint @ trace.rates - inst.releases * (dt @ trace.rates)
    return num / inst.sizes


def fractional_weighted_flow(trace: ScheduleTrace, inst: Instance) -> float:
    if inst.n == 0:
        return 0.0
    return float(inst.weights @ fractional_flows(trace, inst))


def metrics(trace: ScheduleTrace, inst: Instance) -> Metrics:
    _require_complete(trace, inst)
    flows = trace.completions - inst.releases if inst.n else np.zeros(0)
    ff = fractional_flows(trace, inst)
    return Metrics(float(inst.weights @ flows), float(inst.weights @ ff), flows, ff)


def alive_weights(trace: ScheduleTrace, inst: Instance, t: float):
    """(W, W~, remaining) at time t; unreleased jobs report remaining 0."""
    if inst.n == 0:
        return 0.0, 0.0, np.zeros(0)
    rem = np.clip(inst.sizes - trace.work_until(t), 0.0, None)
    released = inst.releases <= t
    done = ~np.isnan(trace.completions) & (trace.completions <= t)
    rem = np.where(released & ~done, rem, 0.0)
    alive = rem > 0
    w = inst.weights
    return float(w[alive].sum()), float((w * rem / inst.sizes)[alive].sum()), rem


def _breakpoints(trace, inst):
    pts = [trace.starts, trace.ends, inst.releases]
    c = trace.completions[~np.isnan(trace.completions)]
    pts.append(c)
    t = np.unique(np.concatenate(pts)) if inst.n else np.zeros(0)
    t = t[t <= trace.horizon]
    return t


def weight_integrals(trace: ScheduleTrace, inst: Instance):
    """Exact (int W dt, int W~ dt) over the trace horizon."""
    if inst.n == 0 or trace.n_segments == 0:
        return 0.0, 0.0
    t = _breakpoints(trace, inst)
    iw = iwt = 0.0
    for a, b in zip(t[:-1], t[1:]):
        if b - a <= 0:
            continue
        mid = 0.5 * (a + b)
        Wm, _, _ = alive_weights(trace, inst, mid)
        _, Wa, _ = _alive_right(trace, inst, a)
        _, Wb, _ = _alive_left(trace, inst, b)
        iw += Wm * (b - a)
        iwt += 0.5 * (Wa + Wb) * (b - a)  # W~ is linear between breakpoints
    return iw, iwt


def remaining(trace: ScheduleTrace, inst: Instance, t: float, side="right"):
    """Remaining work just after (side='right') or just before ('left') time t.

    Right: jobs released at t count and jobs completing at t do not.
    Left: jobs released at t are excluded and jobs completing at t still count.
    """
    rem = np.clip(inst.sizes - trace.work_until(t), 0.0, None)
    if side == "right":
        released = inst.releases <= t
        done = ~np.isnan(trace.completions) & (trace.completions <= t)
    else:
        released = inst.releases < t
        done = ~np.isnan(trace.completions) & (trace.completions < t)
    return np.where(released & ~done, rem, 0.0)


def _alive_right(trace, inst, a):
    rem = remaining(trace, inst, a, "right")
    return None, float((inst.weights * rem / inst.sizes).sum()), rem


def _alive_left(trace, inst, b):
    rem = remaining(trace, inst, b, "left")
    return None, float((inst.weights * rem / inst.sizes).sum()), rem


def frac_weight_integral(trace: ScheduleTrace, inst: Instance, a: float, b: float):
    """Exact int_a^b W~ dt; W~ is linear between breakpoints."""
    if b <= a or inst.n == 0:
        return 0.0
    t = _breakpoints(trace, inst)
    t = np.unique(np.concatenate([[a, b], t[(t > a) & (t < b)]]))
    out = 0.0
    for lo, hi in zip(t[:-1], t[1:]):
        out += 0.5 * (_alive_right(trace, inst, lo)[1] + _alive_left(trace, inst, hi)[1]) * (hi - lo)
    return out


def check_metric_identities(trace: ScheduleTrace, inst: Instance, rel=1e-9):
    """Violations of the alive-weight identities for a complete trace."""
    errs = []
    if inst.n == 0:
        return errs
    iflow = integral_weighted_flow(trace, inst)
    fflow = fractional_weighted_flow(trace, inst)
    iw, iwt = weight_integrals(trace, inst)
    if abs(iw - iflow) > rel * (1 + abs(iflow)):
        errs.append(f"int W = {iw} but sum w F = {iflow}")
    if abs(iwt - fflow) > rel * (1 + abs(fflow)):
        errs.append(f"int W~ = {iwt} but fractional flow = {fflow}")
    if fflow > iflow + rel * (1 + abs(iflow)):
        errs.append(f"fractional {fflow} exceeds integral {iflow}")
    return errs
