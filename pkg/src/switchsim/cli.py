"""Command-line entry point: ``switchsim run <config>`` and ``switchsim presets``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import MODES, Config, ConfigError, PolicyConfig, load_config
from .fluid.multihop import certify_H_drift, integrate_multihop, lyapunov_H
from .fluid.reduction import reduction_equivalence
from .fluid.single import certify_L_drift, integrate_single_hop, lyapunov_L
from .model import Network, load_headroom, overload_rate
from .policies import make_policy
from .presets import PRESETS
from .program import Objective, SolverError
from .report import REPORT_KINDS, summarize
from .sim import ConservationError, StabilityThresholds, run_experiment

log = logging.getLogger("switchsim")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    name = os.environ.get("SWITCHSIM_LOG", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(name, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    if name not in LOG_LEVELS:
        log.error("SWITCHSIM_LOG=%s not recognised; using 'error'", name)


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return v


def _write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("wrote %s", path)
    return path


def _objective(pc: PolicyConfig) -> Objective:
    if pc.kind == "proportional":
        return Objective(1.0, "log")
    if pc.kind == "maxweight_alpha":
        return Objective(pc.alpha, "linear")
    if pc.kind == "backpressure":
        raise ConfigError("the fluid model has no backpressure variant; use alpha_g or proportional", "policy")
    return Objective(pc.alpha, pc.g, pc.beta)


def _single_hop(net: Network) -> bool:
    return net.is_single_hop and net.one_class_per_link


def replica_seed(seed: int, k: int, replicas: int) -> int:
    if replicas == 1:
        return seed
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def _discrete_job(job: tuple) -> tuple[dict, str]:
    net, pc, dc, seed = job
    policy = make_policy(net, pc.kind, pc.alpha, pc.g, pc.beta)
    thresholds = StabilityThresholds(dc.growth_fraction, dc.noise_multiplier, dc.n_batches)
    res = run_experiment(net, policy, dc.horizon, seed, dc.stride, thresholds=thresholds)
    tr, dg = res.trajectory, res.diagnostic
    summary = {
        "seed": seed,
        "horizon": dc.horizon,
        "stride": dc.stride,
        "policy": pc.kind,
        "verdict": dg.verdict,
        "slope": dg.slope,
        "slope_stderr": dg.stderr,
        "arrival_rate": dg.arrival_rate,
        "thresholds": {"growth_fraction": dc.growth_fraction, "noise_multiplier": dc.noise_multiplier,
                       "n_batches": dc.n_batches},
        "arrivals": tr.arrivals,
        "served": tr.served,
        "departures": tr.departures,
        "final_total": int(tr.total[-1]),
        "load_headroom": load_headroom(net.link_loads, net.schedules),
        "overload_rate": overload_rate(net.link_loads, net.schedules),
        "conservation": "checked every slot",
    }
    return summary, tr.to_csv(dc.full_csv)


def run_discrete(cfg: Config, out: Path, stem: str, replicas: int) -> int:
    dc = cfg.discrete
    seeds = [replica_seed(dc.seed, k, replicas) for k in range(replicas)]
    jobs = [(cfg.network, cfg.policy, dc, s) for s in seeds]
    if replicas == 1:
        results = [_discrete_job(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=min(replicas, os.cpu_count() or 1)) as pool:
            results = list(pool.map(_discrete_job, jobs))
    per = []
    for k, (summary, csv_text) in enumerate(results):
        tag = stem if replicas == 1 else f"{stem}_r{k}"
        (out / f"{tag}_trajectory.csv").write_text(csv_text, encoding="utf-8")
        _write_json(out / f"{tag}_experiment.json", summary)
        per.append(summary)
        print(f"{tag}: {summary['verdict']} (slope {summary['slope']:.4g} +/- {summary['slope_stderr']:.2g})")
    if replicas > 1:
        verdicts = [p["verdict"] for p in per]
        _write_json(out / f"{stem}_summary.json", {
            "replicas": replicas,
            "base_seed": dc.seed,
            "seeds": seeds,
            "verdicts": verdicts,
            "mean_slope": float(np.mean([p["slope"] for p in per])),
        })
    return EXIT_OK


def _initial(cfg: Config, single: bool) -> np.ndarray:
    net, fc = cfg.network, cfg.fluid
    n = len(net.links) if single else len(net.stations)
    if fc.initial is not None:
        x0 = np.asarray(fc.initial, dtype=float)
        if x0.shape != (n,) or np.any(x0 < 0):
            what = "link" if single else "(link, route) station"
            raise ConfigError(f"'initial' needs {n} nonnegative values, one per {what}", "fluid")
        return x0
    if single:
        return np.full(n, fc.initial_mass / n)
    carries = net.station_route_rate > 0
    x0 = np.where(carries, 1.0, 0.0)
    return fc.initial_mass * x0 / max(x0.sum(), 1.0)


def run_fluid(cfg: Config, out: Path, stem: str, certify: bool) -> int:
    net, fc = cfg.network, cfg.fluid
    single = _single_hop(net)
    x0 = _initial(cfg, single)
    if single:
        obj = _objective(cfg.policy)
        a_bar = net.link_loads
        traj = integrate_single_hop(x0, a_bar, obj, net.schedules, fc.T, fc.dt)
        interior = load_headroom(a_bar, net.schedules) > 0
        if interior and np.all(a_bar > 0):
            rho = (1 + load_headroom(a_bar, net.schedules)) * a_bar
            traj.monitors["L"] = lyapunov_L(traj.q, rho, obj)
        cert = certify_L_drift(traj, obj, a_bar, net.schedules) if certify else None
    else:
        if cfg.policy.kind not in ("proportional", "alpha_g") or (
            cfg.policy.kind == "alpha_g" and (cfg.policy.alpha, cfg.policy.g) != (1.0, "log")
        ):
            log.info("multihop fluid uses the proportionally fair program regardless of policy")
        traj = integrate_multihop(x0, net, fc.T, fc.dt)
        if load_headroom(net.link_loads, net.schedules) > 0:
            H = np.array([lyapunov_H(traj.state[k], net, sigma=traj.sigma[k]) for k in range(len(traj.t))])
            traj.monitors["H"] = H
            traj.monitors["dH_estimate"] = np.append(np.diff(H) / fc.dt, 0.0)
        cert = certify_H_drift(traj, net, fc.epsilon_hat) if certify else None
    traj.write_csv(out / f"{stem}_fluid.csv", fc.stride)
    hit = traj.hitting_time()
    print(f"{stem}: fluid path to T={fc.T:g}, total mass {traj.total[0]:.6g} -> {traj.total[-1]:.6g}, "
          f"hitting time {hit:.6g}")
    if cert is None:
        return EXIT_OK
    report = cert.as_dict()
    _write_json(out / f"{stem}_certificate.json", report)
    lines = [f"{k}: {v}" for k, v in sorted(_clean(report).items())]
    (out / f"{stem}_certificate.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK if cert.passed else EXIT_FAIL


def run_reduce(cfg: Config, out: Path, stem: str) -> int:
    net, fc = cfg.network, cfg.fluid
    x0 = _initial(cfg, single=False)
    rep = reduction_equivalence(net, x0, fc.T, fc.dt, fc.refine)
    d = rep.as_dict()
    _write_json(out / f"{stem}_reduction.json", d)
    msg = f"{stem}: sup |x_link - x_station| = {rep.sup_diff:.3g} at dt={fc.dt:g}"
    if rep.ratio is not None:
        msg += f"; cross-resolution {rep.cross:.3g} -> {rep.cross_half:.3g} (ratio {rep.ratio:.3f})"
    print(f"{msg} -> {d['verdict']}")
    return EXIT_OK if rep.passed() else EXIT_FAIL


def run_report(cfg: Config, out: Path, stem: str) -> int:
    s = summarize(cfg.network)
    d = s.as_dict(cfg.report.node)
    _write_json(out / f"{stem}_report.json", d)
    print(f"nodes {d['n_nodes']}, links {d['n_links']}, routes {d['n_routes']}, leaves {d['n_leaves']}")
    nodes = [cfg.report.node] if cfg.report.node else list(cfg.network.nodes)
    for n in nodes:
        print(f"{n}: " + ", ".join(f"{k}={s.counts[k][n]}" for k in REPORT_KINDS))
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    mode = args.mode or cfg.mode
    if args.seed is not None:
        cfg = replace(cfg, discrete=replace(cfg.discrete, seed=args.seed))
    replicas = args.replicas if args.replicas is not None else cfg.discrete.replicas
    if replicas < 1:
        raise ConfigError("--replicas must be at least 1")
    config_path = Path(args.config)
    out = Path(args.out) if args.out else config_path.resolve().parent
    out.mkdir(parents=True, exist_ok=True)
    stem = config_path.stem
    log.info("mode %s, network with %d links and %d routes", mode, len(cfg.network.links), len(cfg.network.routes))
    if mode == "discrete":
        return run_discrete(cfg, out, stem, replicas)
    if mode in ("fluid", "certify"):
        if mode == "certify" and load_headroom(cfg.network.link_loads, cfg.network.schedules) <= 0:
            raise ConfigError("certification needs a load strictly inside the capacity region")
        return run_fluid(cfg, out, stem, certify=mode == "certify")
    if mode == "reduce":
        return run_reduce(cfg, out, stem)
    return run_report(cfg, out, stem)


def _cmd_presets(args: argparse.Namespace) -> int:
    for p in PRESETS:
        print(f"{p.signature:<42} {p.summary}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchsim", description="Switched queueing network experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a JSON config")
    run.add_argument("config")
    run.add_argument("--mode", choices=MODES, help="override the config's mode")
    run.add_argument("--out", help="output directory (default: beside the config)")
    run.add_argument("--seed", type=int, help="override the discrete seed")
    run.add_argument("--replicas", type=int, help="independent seeded replicas (discrete mode)")
    run.set_defaults(func=_cmd_run)
    pre = sub.add_parser("presets", help="list built-in networks")
    pre.set_defaults(func=_cmd_presets)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"switchsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, ConservationError) as exc:
        print(f"switchsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"switchsim: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
