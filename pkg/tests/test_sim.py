import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from switchsim.model import MultiHopState, QueueState, validate_network
from switchsim.policies import ServiceAction, make_policy
from switchsim.presets import iq_switch, simplex2, tandem2, tree
from switchsim.sim import (
    ConservationError,
    StabilityThresholds,
    Streams,
    _advance,
    run_experiment,
    stability_diagnostic,
    step_multihop,
    step_single_hop,
)

from conftest import two_link_raw


@pytest.mark.parametrize(
    "net_fn, kind",
    [
        (simplex2, "alpha_g"),
        (tandem2, "backpressure"),
        (lambda: tree(3, 4, n_routes=3), "proportional"),
        (lambda: tree(3, 4, n_routes=3), "maxweight_alpha"),
        (lambda: iq_switch(3), "alpha_g"),
    ],
)
def test_run_conserves_packets(net_fn, kind):
    net = net_fn()
    res = run_experiment(net, make_policy(net, kind), 3000, seed=5, stride=100)
    tr = res.trajectory
    assert tr.total[0] + tr.arrivals - tr.departures == tr.total[-1] == res.final.sum()
    assert tr.snapshots[-1].sum() == tr.total[-1]
    assert np.all(tr.total >= 0)


def test_identical_seed_identical_csv():
    net = tree(3, 4, n_routes=3)
    a = run_experiment(net, make_policy(net, "proportional"), 2000, seed=9, stride=50).trajectory.to_csv()
    b = run_experiment(net, make_policy(net, "proportional"), 2000, seed=9, stride=50).trajectory.to_csv()
    c = run_experiment(net, make_policy(net, "proportional"), 2000, seed=10, stride=50).trajectory.to_csv()
    assert a == b and a != c
    assert a.splitlines()[0] == "slot,total_queue," + ",".join(f"q_{j}" for j in net.links)


def test_deterministic_batch_arrivals_are_exact():
    raw = two_link_raw(rate=1.0)
    raw["schedules"] = [[0, 0], [1, 0], [0, 1], [1, 1]]
    raw["arrivals"] = {"kind": "deterministic-batch"}
    net = validate_network(raw)
    res = run_experiment(net, make_policy(net, "backpressure"), 500, seed=0, stride=500)
    assert res.trajectory.arrivals == 500


def test_advance_detects_violations():
    net = tandem2()
    x = np.array([2, 1])
    args = (np.zeros(1, dtype=np.int64), net.station_link, net.station_prev, net.ingress, 2)
    assert _advance(x, np.array([3, 0]), np.array([3, 0]), *args)[2] == 1
    assert _advance(x, np.array([1, 0]), np.array([0, 0]), *args)[2] == 2
    x_new, dep, err = _advance(x, np.array([1, 1]), np.array([1, 1]), *args)
    assert err == 0 and x_new.tolist() == [1, 1] and dep == 1


class _Cheater:
    """Claims service of a packet that is not there."""

    def decide(self, x, sched_rng, split_rng):
        return ServiceAction(np.array([1, 0]), np.array([x[0] + 1, 0]))


def test_conservation_error_raised():
    with pytest.raises(ConservationError, match="slot 1"):
        run_experiment(simplex2(), _Cheater(), 10, seed=0)


def test_step_functions_follow_balance_equations():
    net = simplex2()
    streams = Streams.from_seed(3)
    pol = make_policy(net, "maxweight_alpha")
    st1, act = step_single_hop(QueueState(np.array([2, 0])), net, pol, np.array([1, 1]), streams)
    assert st1.q.tolist() == [2, 1] and st1.time == 1 and act.sigma.tolist() == [1, 0]
    tnet = tandem2()
    bp = make_policy(tnet, "backpressure")
    st2, act2 = step_multihop(MultiHopState(np.array([3, 0]), tnet), bp, np.array([1]), streams)
    assert st2.x.tolist() == [3, 1] and act2.sigma.tolist() == [1, 0]


def test_step_single_hop_rejects_multihop():
    net = tandem2()
    with pytest.raises(ValueError):
        step_single_hop(QueueState(np.array([0, 0])), net, make_policy(net, "alpha_g"),
                        np.array([0]), Streams.from_seed(0))


def test_diagnostic_verdicts(rng):
    t = np.arange(200_000)
    assert stability_diagnostic(0.2 * t, 1.0).verdict == "growing"
    assert stability_diagnostic(0.2 * t, 1.0).slope == pytest.approx(0.2)
    flat = 50 + rng.normal(0, 5, t.size)
    assert stability_diagnostic(flat, 1.0).verdict == "stable-looking"
    assert stability_diagnostic(np.arange(4), 1.0).verdict == "inconclusive"


@given(st.floats(0.0, 2.0))
def test_diagnostic_threshold_is_explicit(frac):
    series = 0.05 * np.arange(10_000, dtype=float)
    th = StabilityThresholds(growth_fraction=frac)
    d = stability_diagnostic(series, 1.0, th)
    assert (d.verdict == "growing") == (0.05 > frac)


def test_run_rejects_bad_arguments():
    net = simplex2()
    pol = make_policy(net, "alpha_g")
    with pytest.raises(ValueError):
        run_experiment(net, pol, 0, seed=0)
    with pytest.raises(ValueError):
        run_experiment(net, pol, 10, seed=0, x0=np.array([-1, 0]))


def test_csv_write_error_is_readable(tmp_path):
    tr = run_experiment(simplex2(), make_policy(simplex2(), "alpha_g"), 10, seed=0).trajectory
    with pytest.raises(OSError, match="cannot write trajectory"):
        tr.write_csv(tmp_path / "missing" / "t.csv")
