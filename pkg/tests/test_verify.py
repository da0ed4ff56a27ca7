from __future__ import annotations

import math

import numpy as np
import pytest

from gdflow.bench.generate import GeneratorSpec, generate
from gdflow.residual import RemainingState, ResidualConfig
from gdflow.policies import GdPolicy
from gdflow.sim import SimConfig, offline_opt_fractional, simulate
from gdflow.verify import (PropertyReport, check_demand_scaling, check_gs, check_ls_demand, check_price_monotonicity,
                           check_set_supermodular, check_supermodularity, competitive_table, gd_rate_report,
                           matching_valuation, matroid_intersection_valuation, matroid_rank_valuation,
                           min_valuation_demand, potential_function, potential_monitor, speedup_demand_oracle,
                           symmetric_concave_valuation, TABLE_COLUMNS)
from gdflow.envs import Matroid, UnrelatedMachines

from _util import make_instance


def test_property_report_bookkeeping():
    a = PropertyReport("a")
    a.record(0.5, 1.0)
    a.record(2.0, 1.0, where=3)
    assert a.tested == 2 and not a.ok and a.violations == [{"residual": 2.0, "where": 3}]
    b = PropertyReport("b")
    b.record(-1.0, 0.0)
    a.merge(b)
    d = a.to_dict()
    assert d["tested"] == 3 and d["violations"] == 1 and d["max_residual"] == 2.0
    assert PropertyReport("empty").to_dict()["max_residual"] is None


def test_sqrt_cardinality_is_not_supermodular():
    rep = check_set_supermodular(lambda S: math.sqrt(len(S)), 3)
    assert not rep.ok
    w = rep.violations[0]
    assert len(w["Y"]) < len(w["X"])


def test_cardinality_square_is_supermodular():
    assert check_set_supermodular(lambda S: len(S) ** 2, 4).ok


def test_single_machine_integral_residual_supermodular():
    state = RemainingState(np.array([1.0, 2.0, 3.0]), np.ones(3), np.array([1.0, 2.0, 3.0]))
    rep = check_supermodularity(make_instance([1, 2, 3]).env, state, 1e-9, ResidualConfig(mode="integral"))
    assert rep.ok and rep.tested > 0


def test_unrelated_matching_residual_supermodular():
    inst = generate(GeneratorSpec("unrelated", 4, 11))
    rep = check_supermodularity(inst.env, RemainingState.fresh(inst), 1e-6, ResidualConfig(mode="integral"))
    assert rep.ok


def test_supermodularity_size_guard():
    inst = generate(GeneratorSpec("single_machine", 7, 0))
    with pytest.raises(ValueError):
        check_supermodularity(inst.env, RemainingState.fresh(inst))


def test_gs_examples():
    assert check_gs(lambda S: float(sum(S)), 4).ok
    assert check_gs(matroid_rank_valuation(Matroid("uniform", rank=1), [2.0, 1.0, 1.0]), 3).ok
    assert check_gs(matching_valuation(np.eye(3)), 3).ok
    assert check_gs(symmetric_concave_valuation([0.0, 1.0, 1.5, 1.75]), 3).ok
    rep = check_gs(matroid_intersection_valuation([0, 0, 1, 1], [0, 1, 0, 1]), 4)
    assert not rep.ok
    # S = {0}: adding 1 or 2 alone gains nothing, adding both gains 1
    assert any(v["condition"] == "submodular" and v["S"] == [0] and (v["a"], v["b"]) == (1, 2)
               for v in rep.violations)


def test_gs_rejects_convex_cardinality():
    rep = check_gs(symmetric_concave_valuation([0.0, 1.0, 3.0, 6.0]), 3)
    assert any(v["condition"] == "submodular" for v in rep.violations)


def test_matching_valuation_examples():
    v = matching_valuation([[3.0, 1.0], [2.0, 0.0], [0.0, 5.0]])
    assert v(frozenset()) == 0.0
    assert v(frozenset({0, 1})) == 3.0
    assert v(frozenset({0, 1, 2})) == 8.0


def test_ls_examples():
    c = np.array([1.0, 2.0])
    assert check_ls_demand(lambda q: (c > q).astype(float), 2).ok
    assert not check_ls_demand(min_valuation_demand, 2).ok
    with pytest.raises(ValueError):
        check_ls_demand(min_valuation_demand, 2, price_grid=[0.0, 1.0])


@pytest.mark.parametrize("seed", range(3))
def test_speedup_demand_claims(seed):
    env = generate(GeneratorSpec("speedup", 2, seed)).env
    grid = [0.2, 1.0, 5.0]
    assert check_ls_demand(speedup_demand_oracle(env, 0), env.D, grid).ok
    assert check_demand_scaling(env, 0, grid).ok
    assert check_price_monotonicity(env, 0, grid).ok


def single_job_runs():
    inst = make_instance([2.0])
    trA, _ = simulate(inst, GdPolicy("fractional"), SimConfig(speed=2.0))
    _, trO = offline_opt_fractional(inst)
    return inst, trA, trO


def test_potential_hand_values():
    # density 1/2: f(x) = x^2 / 4 and f(A || O) = (xA + xO)^2 / 4
    inst, trA, trO = single_job_runs()
    phi, copies = potential_function(trA, trO, inst, 1.0)
    assert copies == 1
    assert phi(0.0, "left") == pytest.approx(0.0, abs=1e-12)
    assert phi(0.0, "right") == pytest.approx(-2.0, abs=1e-9)
    assert phi(0.5) == pytest.approx(-1.0625, abs=1e-9)
    assert phi(1.5) == pytest.approx(-0.0625, abs=1e-9)


def test_potential_monitor_single_job():
    inst, trA, trO = single_job_runs()
    rep = potential_monitor(trA, trO, inst, 1.0)
    assert rep.ok
    assert rep.int_wA == pytest.approx(0.5) and rep.int_wO == pytest.approx(1.0)
    assert max(d for _, d in rep.event_deltas) <= 1e-9
    assert rep.margin == pytest.approx(3.0 - 0.5 + 1e-6)


def test_potential_against_itself_starts_and_ends_at_zero():
    inst = generate(GeneratorSpec("single_machine", 4, 2, {"weights": (0.5, 2.0)}))
    tr, _ = simulate(inst, GdPolicy("fractional"), SimConfig(speed=1.5))
    rep = potential_monitor(tr, tr, inst, 0.5, drift_constant=1.0)
    assert rep.phi_start == pytest.approx(0.0, abs=1e-12)
    assert rep.phi_end == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_potential_single_machine_speed_two(seed):
    inst = generate(GeneratorSpec("single_machine", 4, seed, {"weights": (0.5, 2.0)}))
    trA, _ = simulate(inst, GdPolicy("fractional"), SimConfig(speed=2.0))
    _, trO = offline_opt_fractional(inst)
    rep = potential_monitor(trA, trO, inst, 1.0)
    assert rep.ok, (rep.max_event_delta, rep.max_drift, rep.margin)


def test_potential_copies_mode():
    inst, trA, trO = single_job_runs()
    with pytest.raises(ValueError):
        potential_function(trA, trO, inst, 0.3, mode="copies")
    with pytest.raises(ValueError):
        potential_function(trA, trO, inst, 1.0, mode="thirds")
    with pytest.raises(ValueError):
        potential_function(trA, trO, inst, 1.0, mode="copies")
    inst = make_instance([2.0], env=UnrelatedMachines([[1.0]]))
    trA, _ = simulate(inst, GdPolicy("fractional"), SimConfig(speed=2.0))
    _, trO = offline_opt_fractional(inst)
    phi, copies = potential_function(trA, trO, inst, 1.0, mode="copies")
    # eps = 1: no copies of O, Phi = 2 (f(A) - f(A)) = 0
    assert copies == 0 and phi(0.5) == pytest.approx(0.0, abs=1e-12)
    phi, copies = potential_function(trA, trO, inst, 0.5, mode="copies")
    assert copies == 1


def test_rate_report_integral_unit_jobs():
    inst = make_instance([1.0, 1.0, 1.0])
    tr, _ = simulate(inst, GdPolicy("integral"))
    rep = gd_rate_report(tr, inst, "integral", tolerance=1e-9)
    assert rep.ok
    assert [(a, b) for a, b, _, _ in rep.segments] == [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]
    assert [round(d, 9) for _, _, d, _ in rep.segments] == [3.0, 2.0, 1.0]


def test_rate_report_fractional_single_job():
    inst = make_instance([2.0], weights=[5.0])
    tr, _ = simulate(inst, GdPolicy("fractional"))
    rep = gd_rate_report(tr, inst, "fractional", tolerance=1e-9)
    assert rep.ok
    (a, b, drop, target), = rep.segments
    assert drop == pytest.approx(5.0) and target == pytest.approx(5.0)


def test_rate_report_idle_gap():
    inst = make_instance([1.0, 1.0], releases=[0.0, 5.0])
    tr, _ = simulate(inst, GdPolicy("integral"))
    rep = gd_rate_report(tr, inst, "integral", tolerance=1e-9)
    assert rep.ok
    idle = [s for s in rep.segments if s[0] == 1.0]
    assert idle == [(1.0, 5.0, 0.0, 0.0)]
    with pytest.raises(ValueError):
        gd_rate_report(tr, inst, "weird")


def test_rate_report_matching_mode():
    inst = generate(GeneratorSpec("unrelated", 3, 4))
    tr, _ = simulate(inst, GdPolicy("integral"))
    assert gd_rate_report(tr, inst, "matching", tolerance=1e-6).ok


def test_competitive_table_examples():
    assert competitive_table([], ["gd"], [1.0]) == []
    inst = generate(GeneratorSpec("single_machine", 4, 1, {"integer": True, "sizes": (1, 4)}))
    rows = competitive_table([("a", inst)], ["gd_integral", "gd"], [1.0, 2.0])
    assert len(rows) == 4 and all(set(r) == set(TABLE_COLUMNS) for r in rows)
    by = {(r["policy"], r["speed"]): r for r in rows}
    assert by["gd_integral", 1.0]["ratio_integral_or_blank"] == pytest.approx(1.0, abs=1e-9)
    assert by["gd", 2.0]["ratio_fractional"] <= 3.0
    assert all(r["ratio_fractional"] >= 1 - 1e-9 for r in rows if r["speed"] == 1.0)


def test_competitive_table_blank_integral_opt():
    inst = generate(GeneratorSpec("unrelated", 3, 0))
    seen = []
    rows = competitive_table([inst], ["gd"], [1.5], on_trace=lambda i, t: seen.append(t))
    assert rows[0]["opt_integral_or_blank"] is None and rows[0]["instance_id"] == "0"
    assert len(seen) == 1
