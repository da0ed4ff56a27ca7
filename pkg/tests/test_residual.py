from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdflow.bench.generate import GeneratorSpec, generate
from gdflow.envs import IdenticalMachines, Matroid, SingleMachine, UnrelatedMachines
from gdflow.residual import (IntervalGrid, RemainingState, ResidualConfig, _support_fn, build_interval_grid,
                             build_residual_lp, exact_fractional, grid_sequence, matching_residual,
                             per_machine_residual, polymatroid_fractional, residual_horizon,
                             residual_set_function, single_machine_fractional, single_machine_residual,
                             solve_interval_lp, solve_residual, time_indexed_lp, weighted_unrelated_residual)
from gdflow.verify import check_grid_decrease, check_rate_upper_bound


def state(x, w=None, p=None):
    x = np.asarray(x, float)
    return RemainingState(x, np.ones(len(x)) if w is None else w, x.copy() if p is None else p)


def brute_weighted_completion(x, w):
    best = np.inf
    for order in itertools.permutations(range(len(x))):
        t = f = 0.0
        for j in order:
            t += x[j]
            f += w[j] * t
        best = min(best, f)
    return best


def test_single_machine_residual_examples():
    f, plan = single_machine_residual([1, 2, 3], [1, 1, 1])
    assert f == 10.0 == brute_weighted_completion([1, 2, 3], [1, 1, 1])
    assert plan.breaks.tolist() == [0, 1, 3, 6]
    f, _ = single_machine_residual([2, 1], [3, 1])
    assert f == 9.0 == brute_weighted_completion([2, 1], [3, 1])
    assert single_machine_residual([5], [2])[0] == 10.0


@pytest.mark.parametrize("seed", range(10))
def test_smith_rule_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(1, 6, 5).astype(float)
    w = rng.integers(0, 4, 5).astype(float)
    assert single_machine_residual(x, w)[0] == brute_weighted_completion(x, w)


def test_interval_grid_sequences():
    assert grid_sequence(1, 80) == list(range(1, 11)) + [20, 40, 80]
    assert grid_sequence(0.5, 135) == list(range(1, 41)) + [60, 90, 135]
    g = build_interval_grid(1, 5)
    assert g.lengths.tolist() == [1.0] * 5 and g.lefts.tolist() == [1, 2, 3, 4, 5]
    with pytest.raises(ValueError):
        grid_sequence(0.3, 10)


@pytest.mark.parametrize("rho", [1, 0.5, 0.25])
def test_interval_grid_length_properties(rho):
    g = build_interval_grid(rho, 5000)
    L = g.lengths
    assert np.all(np.diff(L) >= 0)
    long = np.nonzero(L > 1)[0]
    for h in long[:-1]:
        assert L[h] >= L[h + 1] / (1 + 2 * rho) - 1e-12
    assert g.breakpoints[-1] - 1 >= 5000


def test_build_residual_lp_examples():
    lp, _ = build_residual_lp(SingleMachine(), state([1.0]), IntervalGrid.unit(1))
    assert lp.n_vars > 0
    assert solve_interval_lp(SingleMachine(), state([1.0]), IntervalGrid.unit(1))[0] == 0.0
    empty, layout = build_residual_lp(SingleMachine(), state([0.0, 0.0]), IntervalGrid.unit(1))
    assert empty.n_vars == 0 and layout[0] == 0
    # rank-2 uniform matroid, three unit jobs on unit slots: two units cost 0, one costs 1
    M = Matroid("uniform", rank=2)
    st3 = state([1.0, 1.0, 1.0])
    assert solve_interval_lp(M, st3, IntervalGrid.unit(2), offset=1)[0] == pytest.approx(1.0)
    assert solve_interval_lp(M, st3, IntervalGrid.unit(2), offset=0)[0] == pytest.approx(4.0)


def test_uniform_matroid_continuous_value():
    # W~ falls at rate at most 2 and equal sharing attains it throughout: 3^2 / (2 * 2)
    f, plan = exact_fractional(Matroid("uniform", rank=2), state([1.0, 1.0, 1.0]))
    assert f == pytest.approx(2.25, abs=1e-9)
    assert plan.work() == pytest.approx([1.0, 1.0, 1.0], abs=1e-9)


def test_unit_grid_matches_discrete_closed_form():
    # unit slot h costs (h - 1) c_j per unit; for integer sizes on one machine
    # that is the weighted completion time sum minus the per-unit triangle terms
    x = np.array([1.0, 2.0, 3.0])
    f, _ = solve_interval_lp(SingleMachine(), state(x), IntervalGrid.unit(6))
    # SPT order: slots {0}, {1,2}, {3,4,5}; c = 1/p
    assert f == pytest.approx(0 / 1 + (1 + 2) / 2 + (3 + 4 + 5) / 3)


def test_solve_residual_examples():
    cfg = ResidualConfig(mode="integral")
    assert solve_residual(SingleMachine(), state([1, 2, 3]), cfg)[0] == 10.0
    lam = UnrelatedMachines([[1.0, 0.5], [0.5, 1.0]])
    assert solve_residual(lam, state([1.0, 1.0]), cfg)[0] == pytest.approx(2.0)
    one = RemainingState([4.0], [2.0], [4.0])
    for env in (SingleMachine(), IdenticalMachines(2), Matroid("uniform", rank=1), UnrelatedMachines([[1.0]])):
        assert solve_residual(env, one)[0] == pytest.approx(4.0, abs=1e-9)


def test_integral_mode_rejects_unsupported():
    with pytest.raises(ValueError):
        solve_residual(Matroid("uniform", rank=1), state([1.0]), ResidualConfig(mode="integral"))
    with pytest.raises(ValueError):
        solve_residual(UnrelatedMachines([[1.0], [1.0]]), RemainingState([1.0, 1.0], [1.0, 2.0], [1.0, 1.0]),
                       ResidualConfig(mode="integral"))


def test_matching_residual_examples():
    f, plan = matching_residual(UnrelatedMachines(np.ones((3, 1))), state([1.0, 2.0, 3.0]))
    assert f == 10.0
    assert [plan.meta["assignment"][j][1] for j in range(3)] == [3, 2, 1]
    f, plan = matching_residual(UnrelatedMachines([[1.0, 0.5], [0.5, 1.0]]), state([1.0, 1.0]))
    assert f == pytest.approx(2.0)
    assert plan.meta["assignment"] == {0: (0, 1), 1: (1, 1)}
    assert matching_residual(UnrelatedMachines([[1.0]]), state([5.0]))[0] == 5.0
    with pytest.raises(ValueError):
        matching_residual(UnrelatedMachines([[0.0, 0.0]]), state([1.0]))


def test_weighted_unrelated_examples():
    one = RemainingState([2.0], [1.0], [2.0])
    assert weighted_unrelated_residual(UnrelatedMachines([[1.0]]), one)[0] == pytest.approx(3.0, abs=1e-9)
    assert weighted_unrelated_residual(UnrelatedMachines([[1.0]]), RemainingState([0.0], [1.0], [2.0]))[0] == 0.0
    f, plan = weighted_unrelated_residual(UnrelatedMachines([[1.0, 1.0]]), one)
    assert f == pytest.approx(2.5, abs=1e-9)
    # the job runs on both machines at once in this relaxation
    assert plan.u[0] == pytest.approx([1.0, 1.0], abs=1e-9)


def test_residual_set_function_examples():
    st3 = state([1, 2, 3])
    cfg = ResidualConfig(mode="integral")
    assert residual_set_function(SingleMachine(), st3, [], cfg) == 0.0
    assert residual_set_function(SingleMachine(), st3, [0, 2], cfg) == 5.0
    assert residual_set_function(SingleMachine(), st3, [0, 1, 2], cfg) == solve_residual(SingleMachine(), st3, cfg)[0]


def test_per_machine_residual_examples():
    assert per_machine_residual([1, 1], [10, 1], [1, 1]) == 12.0
    assert per_machine_residual([], [], []) == 0.0
    assert per_machine_residual([2.0], [1.0], [1.0]) == 0.5


@pytest.mark.parametrize("seed", range(8))
def test_matching_equals_closed_form_on_one_machine(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.1, 3, 5)
    lam = rng.uniform(0.5, 2)
    f, _ = matching_residual(UnrelatedMachines(np.full((5, 1), lam)), state(x))
    assert f == pytest.approx(single_machine_residual(x / lam, np.ones(5))[0], rel=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_continuous_lp_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    n = 4
    st_ = RemainingState(rng.uniform(0.1, 2, n), rng.uniform(0.2, 3, n), rng.uniform(2, 3, n))
    env = UnrelatedMachines(np.ones((n, 1)))  # one machine, but no rank oracle: the LP path
    f, plan = exact_fractional(env, st_)
    assert plan.meta.get("method") != "polymatroid"
    assert f == pytest.approx(single_machine_fractional(st_)[0], rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("kind", ["matroid_uniform", "matroid_partition", "matroid_graphic", "identical"])
@pytest.mark.parametrize("seed", range(4))
def test_polymatroid_greedy_matches_lp(kind, seed):
    inst = generate(GeneratorSpec(kind, 4, seed, {"weights": (0.5, 2.0)}))
    st_ = RemainingState.fresh(inst)
    greedy = polymatroid_fractional(inst.env, st_)
    model = inst.env.model(4)
    plan = time_indexed_lp(model, st_.x, st_.density, _support_fn(inst.env, model, 4))
    if greedy is not None:
        assert greedy[0] == pytest.approx(plan.value, rel=1e-8)
    assert exact_fractional(inst.env, st_)[0] == pytest.approx(plan.value, rel=1e-8)


@pytest.mark.parametrize("kind", ["single_machine", "identical", "unrelated", "matroid_partition",
                                  "matroid_graphic", "genflow_dag", "speedup"])
def test_plan_invariants(kind):
    inst = generate(GeneratorSpec(kind, 3, 11, {"weights": (0.5, 2.0)}))
    st_ = RemainingState.fresh(inst)
    f, plan = solve_residual(inst.env, st_)
    assert plan.work() == pytest.approx(st_.x, abs=1e-7)
    assert plan.objective(st_.density) == pytest.approx(f, abs=1e-7)
    for r in plan.rates:
        assert inst.env.is_feasible_rate(r, 1e-7)


@pytest.mark.parametrize("kind", ["single_machine", "unrelated", "matroid_uniform", "genflow_dag", "speedup"])
def test_residual_monotone(kind, rng):
    inst = generate(GeneratorSpec(kind, 3, 5, {"weights": (0.5, 2.0)}))
    for _ in range(4):
        x = inst.sizes * rng.uniform(0, 1, 3)
        x2 = x * rng.uniform(0, 1, 3)
        f = solve_residual(inst.env, RemainingState(x, inst.weights, inst.sizes))[0]
        f2 = solve_residual(inst.env, RemainingState(x2, inst.weights, inst.sizes))[0]
        assert f2 <= f + 1e-9 * (1 + f)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 4.0), min_size=1, max_size=5), st.data())
def test_integral_residual_monotone(x, data):
    x = np.array(x)
    shrink = np.array([data.draw(st.floats(0.0, 1.0)) for _ in x])
    w = np.ones(len(x))
    assert single_machine_residual(x * shrink, w)[0] <= single_machine_residual(x, w)[0] + 1e-9


def test_residual_horizon_covers_work():
    inst = generate(GeneratorSpec("unrelated", 3, 1))
    st_ = RemainingState.fresh(inst)
    H = residual_horizon(inst.env, st_)
    f, plan = solve_interval_lp(inst.env, st_, build_interval_grid(0.25, H))
    assert plan.work() == pytest.approx(st_.x, abs=1e-7)


@pytest.mark.parametrize("rho", [1, 0.5, 0.25])
def test_grid_lemmas_single_examples(rho):
    st_ = RemainingState([3.0, 1.0, 2.0], [1.0, 2.0, 1.0], [3.0, 2.0, 2.0])
    assert check_grid_decrease(SingleMachine(), st_, rho).ok
    assert check_rate_upper_bound(SingleMachine(), st_, rho, np.random.default_rng(0)).ok


def test_rate_upper_bound_needs_the_shift():
    # with zero-cost first slot the LP ignores a tiny step entirely; without it a
    # lone half-done job drops by more than delta W~
    st_ = RemainingState([0.5], [1.0], [1.0])
    rng = np.random.default_rng(0)
    assert check_rate_upper_bound(SingleMachine(), st_, 1, rng, offset=1).ok
    assert not check_rate_upper_bound(SingleMachine(), st_, 1, rng, offset=0).ok


def test_matching_residual_can_fall_faster_than_alive_count():
    # both jobs queue on machine 0 while machine 1 idles; running job 1 there and
    # job 0 on the idle machine lowers f at rate 2 + 0.5 with only two jobs alive
    env = UnrelatedMachines([[1.0, 0.5], [1.0, 0.5]])
    cfg = ResidualConfig(mode="integral")
    f0 = solve_residual(env, state([1.0, 0.1], p=np.ones(2)), cfg)[0]
    dt = 0.01
    f1 = solve_residual(env, state([1.0 - 0.5 * dt, 0.1 - dt], p=np.ones(2)), cfg)[0]
    assert f0 == pytest.approx(1.2)
    assert (f0 - f1) / dt == pytest.approx(2.5)
