import json

import pytest

from switchsim.cli import main, replica_seed
from switchsim.config import ConfigError, load_config, parse_config


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj), encoding="utf-8")
    return p


def test_malformed_json_exits_2_with_position(tmp_path, capsys):
    p = _write(tmp_path, "bad.json", '{\n  "preset": "simplex2",\n  "mode" "report"\n}')
    assert main(["run", str(p)]) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "column" in err


@pytest.mark.parametrize(
    "cfg, fragment",
    [
        ({"preset": "simplex2", "modes": "report"}, "modes"),
        ({"preset": "simplex2", "fluid": {"step": 1}}, "step"),
        ({"preset": "simplex2", "policy": {"kind": "fifo"}}, "fifo"),
        ({"preset": "simplex2", "discrete": {"horizon": 1.5}}, "integer"),
        ({"preset": "simplex2", "nodes": ["a"]}, "inline"),
        ({"nodes": ["a"], "links": [], "schedules": [[]], "routes": [], "load": 1}, "presets"),
        ({"preset": "tree(3,6)"}, "single"),
    ],
)
def test_strict_config_errors(cfg, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(cfg)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "none.json")


def test_report_mode(tmp_path, capsys):
    p = _write(tmp_path, "tree.json", {"preset": "tree(3,6,interference=single)", "mode": "report"})
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "tree_report.json").read_text())
    assert rep["queues"]["backpressure_route"]["c"] == 96
    assert rep["queues"]["backpressure_destination"]["c"] == 12
    assert rep["queues"]["proportional"]["c"] == 3
    assert rep["n_leaves"] == 12 and rep["n_routes"] == 132
    assert "c: backpressure_route=96" in capsys.readouterr().out


def test_certify_simplex_passes(tmp_path):
    p = _write(tmp_path, "cert.json", {"preset": "simplex2", "mode": "certify", "fluid": {"T": 15.0}})
    assert main(["run", str(p)]) == 0
    cert = json.loads((tmp_path / "cert_certificate.json").read_text())
    assert cert["L_envelope"] == "pass" and cert["verdict"] == "pass"
    head = (tmp_path / "cert_fluid.csv").read_text().splitlines()[0]
    assert head == "t,total_queue,L,q_l1,q_l2"


def test_certify_fails_with_nonzero_exit(tmp_path):
    # horizon too short to reach zero before the time bound is checked
    p = _write(tmp_path, "short.json", {"preset": "tandem2", "mode": "certify", "fluid": {"T": 0.5}})
    assert main(["run", str(p)]) == 1


def test_certify_refuses_overload(tmp_path):
    p = _write(tmp_path, "over.json", {"preset": "simplex2", "load": 1.2, "mode": "certify"})
    assert main(["run", str(p)]) == 2


def test_multihop_fluid_csv_has_H(tmp_path):
    p = _write(tmp_path, "mh.json", {"preset": "tandem2", "mode": "fluid", "fluid": {"T": 2.0, "stride": 100}})
    assert main(["run", str(p)]) == 0
    rows = (tmp_path / "mh_fluid.csv").read_text().splitlines()
    assert rows[0] == "t,total_queue,H,dH_estimate,q_l1,q_l2" and len(rows) == 22


def test_reduce_mode(tmp_path):
    p = _write(tmp_path, "red.json", {"preset": "tandem2", "mode": "reduce", "fluid": {"T": 2.0}})
    assert main(["run", str(p)]) == 0
    assert json.loads((tmp_path / "red_reduction.json").read_text())["verdict"] == "pass"


def test_discrete_is_byte_reproducible(tmp_path):
    cfg = {"preset": "tandem2", "policy": {"kind": "backpressure"}, "discrete": {"horizon": 3000, "stride": 100}}
    p = _write(tmp_path, "d.json", cfg)
    for out in ("a", "b"):
        assert main(["run", str(p), "--out", str(tmp_path / out), "--seed", "4"]) == 0
    for f in ("d_trajectory.csv", "d_experiment.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert json.loads((tmp_path / "a" / "d_experiment.json").read_text())["seed"] == 4


def test_replicas_write_per_replica_files_and_summary(tmp_path):
    p = _write(tmp_path, "r.json", {"preset": "simplex2", "discrete": {"horizon": 2000, "stride": 500}})
    assert main(["run", str(p), "--replicas", "2"]) == 0
    summary = json.loads((tmp_path / "r_summary.json").read_text())
    assert summary["seeds"] == [replica_seed(0, 0, 2), replica_seed(0, 1, 2)]
    assert (tmp_path / "r_r0_trajectory.csv").exists() and (tmp_path / "r_r1_experiment.json").exists()


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "iq-switch(n)" in out and "tree(d,D" in out


def test_bad_log_level_does_not_abort(monkeypatch, capsys):
    monkeypatch.setenv("SWITCHSIM_LOG", "loud")
    assert main(["presets"]) == 0
