import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from switchsim.model import (
    ArrivalProcess,
    DuplicateId,
    InvalidSchedule,
    LinkNeverServed,
    MultiHopState,
    NegativeRate,
    QueueState,
    RouteCycle,
    RouteNotChained,
    ScheduleSet,
    UnknownLink,
    UnknownNode,
    ZeroScheduleMissing,
    headroom_lp,
    load_headroom,
    overload_rate,
    truncate_schedules,
    validate_network,
)

from conftest import scaled_simplex, two_link_raw


def test_atoms_sorted_and_deduplicated():
    S = ScheduleSet(("a", "b"), np.array([[1, 0], [0, 0], [1, 0], [0, 1]]))
    assert S.atoms.tolist() == [[0, 0], [0, 1], [1, 0]]
    assert S.sigma_max == 1 and len(S) == 3


@pytest.mark.parametrize(
    "atoms, exc",
    [
        ([[1, 0], [0, 1]], ZeroScheduleMissing),
        ([[0, 0], [-1, 1]], InvalidSchedule),
        ([[0, 0], [0.5, 1]], InvalidSchedule),
        ([[0, 0, 0]], InvalidSchedule),
    ],
)
def test_schedule_set_rejects(atoms, exc):
    with pytest.raises(exc):
        ScheduleSet(("a", "b"), np.array(atoms))


def test_coverage_error_names_link():
    S = ScheduleSet(("a", "b"), np.array([[0, 0], [1, 0]]))
    with pytest.raises(LinkNeverServed, match="'b'"):
        S.check_coverage()


def test_truncation_caps_by_queue():
    S = ScheduleSet(("a", "b"), np.array([[0, 0], [2, 1], [0, 3]]))
    T = truncate_schedules(S, [1, 2])
    assert T.atoms.tolist() == [[0, 0], [0, 2], [1, 1]]
    assert truncate_schedules(S, [5, 5]) is S
    with pytest.raises(ValueError):
        truncate_schedules(S, [-1, 0])


@given(st.lists(st.integers(0, 4), min_size=3, max_size=3))
def test_truncated_atoms_never_exceed_queue(q):
    S = ScheduleSet(("a", "b", "c"), np.array(list(itertools.product(range(3), repeat=3))))
    T = truncate_schedules(S, q)
    assert np.all(T.atoms <= np.array(q))
    assert np.any(np.all(T.atoms == 0, axis=1))


def test_validate_network_builds_stations():
    net = validate_network(two_link_raw())
    assert net.stations == (("ab", "r"), ("bc", "r"))
    assert net.station_next.tolist() == [1, -1]
    assert net.station_prev.tolist() == [-1, 0]
    assert net.link_loads.tolist() == [0.3, 0.3]
    assert not net.is_single_hop


@pytest.mark.parametrize(
    "mutate, exc",
    [
        (lambda r: r["links"].append({"id": "ab", "tail": "a", "head": "c"}), DuplicateId),
        (lambda r: r["links"][0].update(head="z"), UnknownNode),
        (lambda r: r["routes"][0].update(links=["ab", "zz"]), UnknownLink),
        (lambda r: r["routes"][0].update(links=["bc", "ab"]), RouteNotChained),
        (lambda r: r["routes"][0].update(rate=-0.1), NegativeRate),
        (lambda r: r.update(schedules=[[0, 0], [1, 0]]), LinkNeverServed),
    ],
)
def test_validate_network_errors(mutate, exc):
    raw = two_link_raw()
    mutate(raw)
    with pytest.raises(exc):
        validate_network(raw)


def test_route_cycle_rejected():
    raw = {
        "nodes": ["a", "b"],
        "links": [{"id": "ab", "tail": "a", "head": "b"}, {"id": "ba", "tail": "b", "head": "a"}],
        "schedules": [[0, 0], [1, 0], [0, 1]],
        "routes": [{"id": "r", "links": ["ab", "ba"], "rate": 0.1}],
    }
    with pytest.raises(RouteCycle):
        validate_network(raw)


def test_states_reject_negative():
    with pytest.raises(ValueError):
        QueueState(np.array([1, -1]))
    net = validate_network(two_link_raw())
    with pytest.raises(ValueError):
        MultiHopState(np.array([0, -2]), net)
    assert MultiHopState(np.array([3, 1]), net).q.tolist() == [3, 1]


def test_arrival_process_kinds(rng):
    assert ArrivalProcess("bernoulli", np.array([0.2])).second_moment_bound() == 0.2
    with pytest.raises(ValueError):
        ArrivalProcess("bernoulli", np.array([1.5]))
    with pytest.raises(ValueError):
        ArrivalProcess("deterministic-batch", np.array([0.5]))
    det = ArrivalProcess("deterministic-batch", np.array([2.0, 0.0])).sample(rng, 5)
    assert det.tolist() == [[2, 0]] * 5
    poi = ArrivalProcess("poisson", np.array([3.0])).sample(rng, 200_000)
    assert abs(poi.mean() - 3.0) < 0.03


def _headroom_grid(a, S, steps=400):
    """Brute force over convex weights of a 3-atom set."""
    best = -np.inf
    for i in range(steps + 1):
        for k in range(steps + 1 - i):
            w = np.array([i, k, steps - i - k]) / steps
            s = w @ S.atoms
            best = max(best, np.min(s[a > 0] / a[a > 0]))
    return best


@pytest.mark.parametrize("a", [[0.3, 0.3], [0.45, 0.45], [0.1, 0.6], [0.7, 0.5]])
def test_headroom_matches_grid_search(a):
    S = scaled_simplex(2)
    a = np.array(a)
    theta, w = headroom_lp(a, S)
    assert abs(theta - _headroom_grid(a, S)) < 5e-3
    assert abs(theta - 1 / a.sum()) < 1e-9
    assert abs(w.sum() - 1) < 1e-9
    assert load_headroom(a, S) == pytest.approx(theta - 1)


def test_overload_rate_simplex():
    S = scaled_simplex(2)
    assert overload_rate([0.55, 0.55], S) == pytest.approx(0.1, abs=1e-9)
    assert overload_rate([0.3, 0.3], S) == 0.0
