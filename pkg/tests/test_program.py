import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from switchsim.model import ScheduleSet
from switchsim.program import (
    Decomposition,
    NotInHull,
    Objective,
    SolverError,
    caratheodory_decompose,
    linear_oracle,
    sample_schedule,
    solve_program,
)

from conftest import scaled_simplex


def _random_set(rng, n_links, n_atoms, top=2):
    atoms = rng.integers(0, top + 1, size=(n_atoms, n_links))
    atoms = np.vstack([np.zeros(n_links, dtype=int), np.eye(n_links, dtype=int), atoms])
    return ScheduleSet(tuple(f"l{i}" for i in range(n_links)), atoms)


def _slsqp_oracle(obj, S, q):
    """Independent optimum: maximize over convex weights with SLSQP from several starts."""
    A = S.atoms.astype(float)
    w = obj.weights(q)
    m = len(A)

    def neg(lam):
        s = np.maximum(lam @ A, 1e-300)
        return -float(np.sum(w * obj.utility(s)))

    best = np.inf
    for seed in range(3):
        lam0 = np.random.default_rng(seed).dirichlet(np.ones(m))
        res = minimize(
            neg, lam0, method="SLSQP", bounds=[(0, 1)] * m,
            constraints=[{"type": "eq", "fun": lambda l: l.sum() - 1}],
            options={"ftol": 1e-14, "maxiter": 2000},
        )
        best = min(best, res.fun)
    return -best


def test_objective_validation():
    with pytest.raises(ValueError):
        Objective(0.0)
    with pytest.raises(ValueError):
        Objective(1.0, "power", 1.0)
    with pytest.raises(ValueError):
        Objective(1.0, "cubic")
    assert Objective.alpha_fair(1.0) == Objective(1.0, "log")
    assert Objective.alpha_fair(2.0) == Objective(2.0, "power", 2.0)


def test_value_ignores_empty_links():
    obj = Objective()
    assert obj.value(np.array([0.5, 0.0]), np.array([2.0, 0.0])) == pytest.approx(2 * np.log(0.5))


@pytest.mark.parametrize("c", [1, 2, 5])
def test_proportional_fair_closed_form_on_scaled_simplex(c, rng):
    for _ in range(20):
        n = int(rng.integers(2, 6))
        q = rng.uniform(0.1, 10, n)
        res = solve_program(Objective(), scaled_simplex(n, c), q)
        np.testing.assert_allclose(res.s, c * q / q.sum(), atol=1e-6)


def test_alpha_fair_closed_form_on_simplex(rng):
    # maximize sum q^a s^(1-a)/(1-a) on the simplex: s proportional to q^(a/a) = q
    for alpha in (0.5, 2.0, 3.0):
        q = rng.uniform(0.5, 4, 3)
        res = solve_program(Objective.alpha_fair(alpha), scaled_simplex(3), q)
        np.testing.assert_allclose(res.s, q / q.sum(), atol=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_solver_matches_independent_optimizer(seed):
    rng = np.random.default_rng(seed)
    S = _random_set(rng, 3, 4)
    q = rng.uniform(0.2, 5, 3)
    obj = Objective(float(rng.choice([0.5, 1.0, 2.0])), "log")
    res = solve_program(obj, S, q, tol=1e-12)
    assert obj.value(res.s, q) >= _slsqp_oracle(obj, S, q) - 1e-7
    assert res.gap <= 1e-9 * obj.weights(q).sum() + 1e-12


def test_gap_certifies_suboptimality(rng):
    S = _random_set(rng, 4, 6)
    q = rng.uniform(0.1, 3, 4)
    obj = Objective()
    loose = solve_program(obj, S, q, tol=1e-3)
    tight = solve_program(obj, S, q, tol=1e-13)
    assert obj.value(tight.s, q) - obj.value(loose.s, q) <= loose.gap + 1e-12


def test_zero_queue_and_linear():
    S = scaled_simplex(2)
    zero = solve_program(Objective(), S, np.zeros(2))
    assert zero.s.tolist() == [0.0, 0.0]
    lin = solve_program(Objective(1.0, "linear"), S, np.array([1.0, 3.0]))
    assert lin.s.tolist() == [0.0, 1.0]


def test_unservable_positive_queue_raises():
    S = ScheduleSet(("a", "b"), np.array([[0, 0], [1, 0]]))
    with pytest.raises(SolverError, match="never served"):
        solve_program(Objective(), S, np.array([1.0, 1.0]))


def test_linear_oracle_tie_goes_to_smallest_atom():
    S = scaled_simplex(3)
    assert linear_oracle(np.array([1.0, 1.0, 0.0]), S).tolist() == [0, 1, 0]


def test_warm_start_reaches_same_optimum(rng):
    S = _random_set(rng, 4, 8)
    obj = Objective()
    q1 = rng.uniform(1, 3, 4)
    first = solve_program(obj, S, q1, tol=1e-12)
    q2 = q1 * rng.uniform(0.9, 1.1, 4)
    cold = solve_program(obj, S, q2, tol=1e-12)
    warm = solve_program(obj, S, q2, tol=1e-12, warm_start=first.lam)
    np.testing.assert_allclose(warm.s, cold.s, atol=1e-5)


@given(
    st.integers(2, 4).flatmap(
        lambda n: st.tuples(
            st.just(n),
            st.lists(st.floats(0.05, 10), min_size=n, max_size=n),
            st.integers(0, 2**31 - 1),
        )
    )
)
def test_decomposition_reproduces_mean(args):
    n, q, seed = args
    rng = np.random.default_rng(seed)
    S = _random_set(rng, n, 5)
    res = solve_program(Objective(), S, np.array(q))
    d = caratheodory_decompose(res, S)
    d.check()
    assert len(d) <= n + 1
    np.testing.assert_allclose(d.mean, res.s, atol=1e-9)
    assert all(any(np.array_equal(a, b) for b in S.atoms) for a in d.atoms)


@given(st.lists(st.floats(0.0, 1.0), min_size=8, max_size=8), st.integers(0, 1000))
def test_bare_point_decomposition(raw_w, seed):
    S = ScheduleSet(("a", "b", "c"), np.array(list(itertools.product([0, 1], repeat=3))))
    w = np.array(raw_w) + 1e-3
    w /= w.sum()
    point = w @ S.atoms
    d = caratheodory_decompose(point, S)
    assert len(d) <= 4
    np.testing.assert_allclose(d.mean, point, atol=1e-8)


def test_point_outside_hull_rejected():
    with pytest.raises(NotInHull):
        caratheodory_decompose(np.array([0.8, 0.8]), scaled_simplex(2))


def test_decomposition_check_rejects_bad_weights():
    with pytest.raises(ValueError):
        Decomposition(np.array([0.5, 0.6]), np.zeros((2, 2), dtype=int)).check()


def test_sampler_frequencies(rng):
    d = Decomposition(np.array([0.2, 0.5, 0.3]), np.array([[0, 0], [1, 0], [0, 1]]))
    draws = np.array([sample_schedule(d, rng) for _ in range(40_000)])
    np.testing.assert_allclose(draws.mean(axis=0), [0.5, 0.3], atol=0.015)
