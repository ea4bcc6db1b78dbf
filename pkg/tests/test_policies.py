import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from switchsim.model import MultiHopState, QueueState, ScheduleSet, truncate_schedules, validate_network
from switchsim.policies import (
    ServiceAction,
    alpha_g_decomposition,
    alpha_g_policy,
    backpressure,
    backpressure_weights,
    make_policy,
    maxweight_alpha,
    proportional_scheduler,
    split_uniform,
)
from switchsim.presets import iq_switch, simplex2, tandem2, tree
from switchsim.program import Objective


def _shared_link_net():
    """Two routes sharing link bc; node-exclusive schedules."""
    raw = {
        "nodes": ["a", "b", "c", "d"],
        "links": [
            {"id": "ab", "tail": "a", "head": "b"},
            {"id": "bc", "tail": "b", "head": "c"},
            {"id": "cd", "tail": "c", "head": "d"},
        ],
        "schedules": [[0, 0, 0], [1, 0, 0], [0, 2, 0], [0, 0, 1], [1, 0, 1]],
        "routes": [
            {"id": "r1", "links": ["ab", "bc", "cd"], "rate": 0.1},
            {"id": "r2", "links": ["bc"], "rate": 0.1},
        ],
    }
    return validate_network(raw)


@given(st.lists(st.integers(0, 6), min_size=4, max_size=4), st.sampled_from([0.5, 1.0, 2.0]))
def test_maxweight_matches_brute_force(q, alpha):
    S = ScheduleSet(tuple("abcd"), np.array(list(itertools.product([0, 1, 2], repeat=4))))
    q = np.array(q)
    act = maxweight_alpha(QueueState(q), alpha, S)
    w = np.where(q > 0, q.astype(float) ** alpha, 0.0)
    best = max(float(np.minimum(a, q) @ w) for a in S.atoms)
    assert act.sigma @ w == pytest.approx(best)
    assert np.all(act.sigma <= q)


def test_alpha_g_truncated_mean_optimal(rng):
    S = iq_switch(3).schedules
    q = np.array([3, 0, 1, 2, 5, 0, 0, 1, 4])
    d = alpha_g_decomposition(q, Objective(), S)
    St = truncate_schedules(S, q)
    assert all(any(np.array_equal(a, b) for b in St.atoms) for a in d.atoms)
    for _ in range(200):
        sigma = alpha_g_policy(q, Objective(), S, rng).sigma
        assert np.all(sigma <= q)


def test_alpha_g_linear_is_maxweight():
    S = simplex2().schedules
    q = np.array([3, 5])
    d = alpha_g_decomposition(q, Objective(1.0, "linear"), S)
    assert len(d) == 1 and d.atoms[0].tolist() == maxweight_alpha(q, 1.0, S).sigma.tolist()


def test_backpressure_weights_use_next_hop():
    net = tandem2()
    bp = backpressure_weights(MultiHopState(np.array([5, 2]), net))
    assert bp.w.tolist() == [3.0, 2.0]
    bp = backpressure_weights(MultiHopState(np.array([1, 4]), net))
    assert bp.w.tolist() == [0.0, 4.0] and bp.r_star == (None, "r1")


def test_backpressure_idles_links_without_positive_differential():
    net = _shared_link_net()
    x = np.zeros(len(net.stations), dtype=np.int64)
    x[net.station_index[("bc", "r1")]] = 3
    x[net.station_index[("cd", "r1")]] = 5
    act = backpressure(MultiHopState(x, net))
    assert act.sigma[net.link_index["bc"]] == 0  # r1 differential -2, r2 empty
    assert act.sigma[net.link_index["cd"]] == 1
    empty = backpressure(MultiHopState(np.zeros_like(x), net))
    assert not empty.sigma.any()


def test_backpressure_caps_and_picks_smallest_route_on_ties():
    net = _shared_link_net()
    x = np.zeros(len(net.stations), dtype=np.int64)
    x[net.station_index[("bc", "r1")]] = 1
    x[net.station_index[("bc", "r2")]] = 1
    act = backpressure(MultiHopState(x, net))
    j = net.link_index["bc"]
    assert act.sigma[j] == 1  # schedule offers 2, only one packet of r* present
    assert act.xi[net.station_index[("bc", "r1")]] == 1
    assert act.xi[net.station_index[("bc", "r2")]] == 0
    act.check(x, net)


@given(st.lists(st.integers(0, 4), min_size=2, max_size=2))
def test_backpressure_equals_maxweight_on_single_hop(q):
    net = simplex2()
    x = np.array(q)
    bp = backpressure(MultiHopState(x, net))
    mw = maxweight_alpha(QueueState(x), 1.0, net.schedules)
    assert bp.sigma.tolist() == mw.sigma.tolist()


def test_split_uniform_law_is_hypergeometric(rng):
    net = _shared_link_net()
    x = np.zeros(len(net.stations), dtype=np.int64)
    i1, i2 = net.station_index[("bc", "r1")], net.station_index[("bc", "r2")]
    x[i1], x[i2] = 3, 2
    sigma = np.array([0, 2, 0])
    counts = np.zeros(3)
    n = 30_000
    for _ in range(n):
        xi = split_uniform(sigma, x, net, rng)
        assert xi.sum() == 2
        counts[xi[i1]] += 1
    expected = np.array([comb(3, k) * comb(2, 2 - k) for k in range(3)]) / comb(5, 2)
    np.testing.assert_allclose(counts / n, expected, atol=0.012)


def test_split_uniform_refuses_overservice(rng):
    net = simplex2()
    with pytest.raises(AssertionError):
        split_uniform(np.array([1, 0]), np.array([0, 0]), net, rng)


def test_proportional_scheduler_action_valid(rng):
    net = tree(3, 4, n_routes=3)
    x = rng.integers(0, 4, len(net.stations))
    for _ in range(100):
        act = proportional_scheduler(MultiHopState(x, net), None, rng)
        act.check(x, net)
        assert any(np.array_equal(np.minimum(a, net.link_totals(x)), act.sigma) for a in net.schedules.atoms)


def test_service_action_check_catches_mismatch():
    net = simplex2()
    with pytest.raises(AssertionError):
        ServiceAction(np.array([1, 0]), np.array([0, 1])).check(np.array([1, 1]), net)


@pytest.mark.parametrize("kind", ["maxweight_alpha", "alpha_g", "backpressure", "proportional"])
def test_policy_objects_produce_valid_actions(kind, rng):
    net = tree(3, 4, n_routes=3)
    pol = make_policy(net, kind)
    for _ in range(50):
        x = rng.integers(0, 3, len(net.stations))
        act = pol.decide(x, rng, rng)
        act.check(x, net)


def test_make_policy_rejects_unknown():
    with pytest.raises(ValueError):
        make_policy(simplex2(), "fifo")
