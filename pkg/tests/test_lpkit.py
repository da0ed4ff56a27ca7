from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gdflow.lpkit import (GE, LE, birkhoff_decompose, duality_gap, from_dense, hungarian, primal_residual,
                          recompose, simplex_solve, solve)

from _util import brute_assignment, random_lp, vertex_enumeration_max


def test_simplex_trivial_examples():
    sol = simplex_solve(from_dense([1.0], [[1.0]], LE, [1.0], maximize=True))
    assert sol.ok and sol.x.tolist() == [1.0] and sol.objective == 1.0
    sol = simplex_solve(from_dense([1.0, 1.0], [[1.0, 1.0]], GE, [2.0], upper=[1.0, 1.0]))
    assert sol.ok and sol.objective == pytest.approx(2.0)


def test_simplex_status():
    infeasible = from_dense([1.0], [[1.0]], GE, [2.0], upper=[1.0])
    assert simplex_solve(infeasible).status == "infeasible"
    unbounded = from_dense([1.0, 0.0], [[1.0, -1.0]], LE, [1.0], maximize=True)
    assert simplex_solve(unbounded).status == "unbounded"


def test_simplex_degenerate_terminates():
    # a classic cycling example under the textbook largest-coefficient rule
    c = [0.75, -150.0, 0.02, -6.0]
    A = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
    sol = simplex_solve(from_dense(c, A, LE, [0.0, 0.0, 1.0], maximize=True))
    assert sol.ok and sol.objective == pytest.approx(0.05)
    assert duality_gap(from_dense(c, A, LE, [0.0, 0.0, 1.0], maximize=True), sol) <= 1e-7


@pytest.mark.parametrize("seed", range(20))
def test_simplex_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    c, A, b, u = random_lp(rng)
    lp = from_dense(c, A, LE, b, upper=u, maximize=True)
    sol = simplex_solve(lp)
    assert sol.ok
    assert sol.objective == pytest.approx(vertex_enumeration_max(c, A, b, u), abs=1e-7)
    assert primal_residual(lp, sol.x) <= 1e-8
    assert duality_gap(lp, sol) <= 1e-7 * (1 + abs(sol.objective))
    assert solve(lp, backend="highs").objective == pytest.approx(sol.objective, abs=1e-7)


def test_simplex_mixed_senses_and_bounds(rng):
    for _ in range(10):
        A = rng.uniform(-1, 2, (4, 3))
        x0 = rng.uniform(0.5, 1.5, 3)
        b = A @ x0
        senses = [LE, GE, "=", LE]
        lp = from_dense(rng.uniform(-1, 1, 3), A, senses, b, lower=[0.2, 0.0, 0.1], upper=[3.0, 3.0, np.inf])
        a, h = simplex_solve(lp), solve(lp, backend="highs")
        assert a.status == h.status
        if a.ok:
            assert a.objective == pytest.approx(h.objective, abs=1e-7)
            assert duality_gap(lp, a) <= 1e-7 * (1 + abs(a.objective))


def test_simplex_is_deterministic():
    rng = np.random.default_rng(3)
    c, A, b, u = random_lp(rng)
    lp = from_dense(c, A, LE, b, upper=u, maximize=True)
    assert simplex_solve(lp).x.tolist() == simplex_solve(lp).x.tolist()


def test_hungarian_examples():
    assign, cost = hungarian(np.array([[0.0, 9.0], [9.0, 0.0]]))
    assert list(assign) == [0, 1] and cost == 0.0
    assign, cost = hungarian(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert list(assign) == [0, 1] and cost == 2.0
    assert hungarian(np.array([[4.0]]))[1] == 4.0


def test_hungarian_rectangular():
    cost = np.array([[5.0, 1.0, 7.0], [2.0, 3.0, 0.5]])
    assign, total = hungarian(cost)
    assert total == 1.5 and list(assign) == [1, 2]


@st.composite
def cost_matrices(draw):
    n = draw(st.integers(1, 6))
    m = n + draw(st.integers(0, 1))
    return draw(arrays(np.int64, (n, m), elements=st.integers(0, 20)))


@settings(max_examples=60, deadline=None)
@given(cost_matrices())
def test_hungarian_equals_brute_force(cost):
    assign, total = hungarian(cost.astype(float))
    assert len(set(assign)) == cost.shape[0]
    assert total == cost[np.arange(cost.shape[0]), assign].sum()
    assert total == brute_assignment(cost)


def test_birkhoff_examples():
    comps = birkhoff_decompose(np.full((2, 2), 0.5))
    assert sorted((round(w, 12), tuple(p)) for w, p in comps) == [(0.5, (0, 1)), (0.5, (1, 0))]
    comps = birkhoff_decompose(np.eye(3))
    assert len(comps) == 1 and comps[0][0] == pytest.approx(1.0) and list(comps[0][1]) == [0, 1, 2]
    comps = birkhoff_decompose(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert sum(w for w, _ in comps) == pytest.approx(1.0)
    assert np.abs(recompose(comps, 2)[0] - [1.0, 0.0]).max() <= 1e-12


def test_birkhoff_rejects_excess_sums():
    with pytest.raises(ValueError):
        birkhoff_decompose(np.array([[0.7, 0.6], [0.0, 0.0]]))


@pytest.mark.parametrize("seed", range(15))
def test_birkhoff_recomposition(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    X = rng.uniform(0, 1, (n, n)) * (rng.random((n, n)) < 0.6)
    X /= max(X.sum(0).max(), X.sum(1).max(), 1e-9) * rng.uniform(1.0, 1.5)
    comps = birkhoff_decompose(X)
    assert all(w >= 0 for w, _ in comps)
    # padding doubles the side, so the component bound is taken at 2n
    assert len(comps) <= (2 * n) ** 2 - 4 * n + 2
    assert sum(w for w, _ in comps) == pytest.approx(max(X.sum(0).max(), X.sum(1).max()), abs=1e-9)
    R = recompose(comps, n)
    assert np.abs(R[X > 0] - X[X > 0]).max(initial=0) <= 1e-9
