from __future__ import annotations

import itertools

import numpy as np
import pytest

from gdflow.bench.generate import GeneratorSpec, generate
from gdflow.core import Instance, fractional_weighted_flow, integral_weighted_flow
from gdflow.envs import IdenticalMachines, SingleMachine
from gdflow.policies import GdPolicy, Policy, PolicyDecision, baseline_policy, make_policy
from gdflow.sim import (EventLog, InfeasibleRates, SimConfig, offline_opt_fractional, offline_opt_integral_dp,
                        simulate)

from _util import make_instance


def test_speed_scales_rates():
    inst = make_instance([2.0])
    tr, _ = simulate(inst, baseline_policy("srpt"), SimConfig(speed=2.0))
    assert tr.completions.tolist() == [1.0]
    assert tr.check(inst) == []


def test_srpt_and_gd_examples():
    inst = make_instance([2.0, 1.0], releases=[0.0, 1.0])
    ts, _ = simulate(inst, baseline_policy("srpt"))
    tg, _ = simulate(inst, GdPolicy("integral"))
    assert integral_weighted_flow(ts, inst) == 4.0 == integral_weighted_flow(tg, inst)
    assert ts.completions.tolist() == tg.completions.tolist() == [2.0, 3.0]


def test_offline_fractional_examples():
    assert offline_opt_fractional(make_instance([1.0]))[0] == pytest.approx(0.5, abs=1e-9)
    v, tr = offline_opt_fractional(make_instance([1.0, 1.0]))
    assert v == pytest.approx(2.0, abs=1e-9)
    assert tr.check(make_instance([1.0, 1.0])) == []
    assert offline_opt_fractional(Instance([], SingleMachine()))[0] == 0.0


def test_offline_fractional_respects_releases():
    inst = make_instance([1.0, 1.0], releases=[0.0, 3.0])
    v, tr = offline_opt_fractional(inst)
    assert v == pytest.approx(1.0, abs=1e-9)
    assert tr.check(inst) == []


def test_dp_examples():
    assert offline_opt_integral_dp(make_instance([1.0, 2.0])) == 4.0
    assert offline_opt_integral_dp(make_instance([3.0], weights=[2.0])) == 6.0
    # heavy job first: 10*2 + 1*4; the reverse order costs 1*2 + 10*4
    assert offline_opt_integral_dp(make_instance([2.0, 2.0], weights=[1.0, 10.0])) == 24.0


def test_dp_errors():
    with pytest.raises(ValueError):
        offline_opt_integral_dp(make_instance([1.5]))
    with pytest.raises(ValueError):
        offline_opt_integral_dp(make_instance([4.0] * 6), cap=1000)
    unrelated = generate(GeneratorSpec("unrelated", 2, 0, {"integer": True}))
    with pytest.raises(ValueError):
        offline_opt_integral_dp(unrelated)


def brute_single_machine(inst):
    """Min total weighted flow over non-preemptive-by-unit schedules: every unit-step choice."""
    p = inst.sizes.astype(int)
    r = inst.releases.astype(int)
    w = inst.weights
    best = np.inf
    total = int(p.sum())
    horizon = int(r.max()) + total
    # enumerate unit-by-unit job sequences, idling only when nothing is released
    units = [j for j in range(inst.n) for _ in range(p[j])]
    for seq in set(itertools.permutations(units)):
        t, rem, cost = 0, p.copy(), 0.0
        ok = True
        for j in seq:
            if r[j] > t:
                alive = [k for k in range(inst.n) if rem[k] > 0 and r[k] <= t]
                if alive:
                    ok = False
                    break
                t = r[j]
            t += 1
            rem[j] -= 1
            if rem[j] == 0:
                cost += w[j] * (t - r[j])
        if ok and t <= horizon:
            best = min(best, cost)
    return best


@pytest.mark.parametrize("seed", range(6))
def test_dp_matches_unit_sequence_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 3
    inst = make_instance(rng.integers(1, 3, n), rng.integers(0, 3, n), rng.integers(1, 4, n))
    assert offline_opt_integral_dp(inst) == pytest.approx(brute_single_machine(inst))


def test_dp_two_identical_machines():
    inst = make_instance([3.0, 1.0, 1.0], env=IdenticalMachines(2))
    # long job on its own machine from time 0
    assert offline_opt_integral_dp(inst) == 1 + 2 + 3


@pytest.mark.parametrize("policy", ["srpt", "gd_integral", "highest_density_first"])
@pytest.mark.parametrize("seed", range(4))
def test_work_conservation(policy, seed):
    inst = generate(GeneratorSpec("single_machine", 5, seed, {"weights": (0.5, 2.0)}))
    if policy == "gd_integral":
        inst = generate(GeneratorSpec("single_machine", 5, seed))
    tr, _ = simulate(inst, make_policy(policy), SimConfig(speed=1.5))
    for a, b, z in zip(tr.starts, tr.ends, tr.rates):
        busy = np.any((inst.releases <= a) & (tr.completions > a))
        assert z.sum() == pytest.approx(1.5 if busy else 0.0, abs=1e-12)


@pytest.mark.parametrize("policy", ["srpt", "gd_integral", "gd"])
@pytest.mark.parametrize("seed", range(4))
def test_time_dilation(policy, seed):
    inst = generate(GeneratorSpec("single_machine", 4, seed))
    s = 2.5
    fast, _ = simulate(inst, make_policy(policy), SimConfig(speed=s))
    stretched = make_instance(inst.sizes, inst.releases * s, inst.weights)
    slow, _ = simulate(stretched, make_policy(policy), SimConfig(speed=1.0))
    assert slow.completions == pytest.approx(fast.completions * s, rel=1e-9)


@pytest.mark.parametrize("kind", ["single_machine", "identical", "matroid_uniform", "unrelated"])
@pytest.mark.parametrize("seed", range(3))
def test_offline_fractional_is_a_lower_bound(kind, seed):
    inst = generate(GeneratorSpec(kind, 4, seed, {"weights": (0.5, 2.0)}))
    opt, tr = offline_opt_fractional(inst)
    assert tr.check(inst) == []
    assert fractional_weighted_flow(tr, inst) == pytest.approx(opt, rel=1e-9, abs=1e-9)
    names = ["gd", "approx_gd", "immediate_dispatch"] if kind == "unrelated" else ["gd"]
    if kind in ("single_machine", "identical"):
        names += ["srpt", "processor_sharing", "fifo"]
    for name in names:
        trp, _ = simulate(inst, make_policy(name))
        assert opt <= fractional_weighted_flow(trp, inst) + 1e-6


def test_event_log():
    inst = make_instance([2.0, 1.0], releases=[0.0, 1.0])
    _, log = simulate(inst, GdPolicy("integral"))
    assert log.check(2) == []
    kinds = [e.kind for e in log.events]
    assert kinds.count("arrival") == 2 and kinds.count("completion") == 2
    assert log.times() == sorted(log.times())
    bad = EventLog()
    bad.add("arrival", 1.0, 0)
    bad.add("arrival", 0.5, 0)
    errs = bad.check(2)
    assert "event times decrease" in errs and "every job needs exactly one arrival" in errs
    with pytest.raises(ValueError):
        bad.add("teleport", 2.0)


class Greedy(Policy):
    name = "greedy"

    def decide(self, view):
        return PolicyDecision(np.where(view.alive, 1.0, 0.0))


def test_infeasible_policy_aborts():
    with pytest.raises(InfeasibleRates):
        simulate(make_instance([1.0, 1.0]), Greedy())


def test_config_validation():
    with pytest.raises(ValueError):
        simulate(make_instance([1.0]), baseline_policy("srpt"), SimConfig(speed=0.5))
    with pytest.raises(ValueError):
        simulate(make_instance([0.0]), baseline_policy("srpt"))
