"""Strict JSON experiment configuration.

A config names a network, either through ``preset`` (plus ``load``) or with
the network keys inline, and carries one block per run mode.  Unknown keys
anywhere are errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .model import Network, validate_network
from .policies import POLICY_KINDS
from .presets import make_preset

MODES = ("discrete", "fluid", "certify", "reduce", "report")
NETWORK_KEYS = ("nodes", "links", "schedules", "routes", "arrivals")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; ``where`` locates it."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "alpha_g"
    alpha: float = 1.0
    g: str = "log"
    beta: float | None = None


@dataclass(frozen=True)
class DiscreteConfig:
    horizon: int = 100_000
    stride: int = 1000
    seed: int = 0
    replicas: int = 1
    growth_fraction: float = 0.01
    noise_multiplier: float = 3.0
    n_batches: int = 50
    full_csv: bool = True


@dataclass(frozen=True)
class FluidConfig:
    T: float = 20.0
    dt: float = 1e-3
    initial: list[float] | None = None  # q0 (single hop) or x0 per station
    initial_mass: float = 1.0
    stride: int = 10
    refine: bool = True
    epsilon_hat: float | None = None


@dataclass(frozen=True)
class ReportConfig:
    node: str | None = None


@dataclass(frozen=True)
class Config:
    network: Network
    mode: str = "discrete"
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    discrete: DiscreteConfig = field(default_factory=DiscreteConfig)
    fluid: FluidConfig = field(default_factory=FluidConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    source: str = ""


def _block(cls, raw: Any, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError("expected an object", where)
    names = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(names))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(map(repr, unknown))}; allowed: {', '.join(names)}", where)
    out = {}
    for k, v in raw.items():
        default = names[k].default
        if isinstance(default, bool) and not isinstance(v, bool):
            raise ConfigError(f"{k!r} must be true or false", where)
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{k!r} must be an integer", where)
        if isinstance(default, float) and (isinstance(v, bool) or not isinstance(v, (int, float))):
            raise ConfigError(f"{k!r} must be a number", where)
        out[k] = float(v) if isinstance(default, float) else v
    try:
        return cls(**out)
    except TypeError as exc:
        raise ConfigError(str(exc), where) from exc


def parse_config(data: dict[str, Any], source: str = "<config>") -> Config:
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", source)
    allowed = {"preset", "load", "mode", "policy", "discrete", "fluid", "report", *NETWORK_KEYS}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(map(repr, unknown))}", source)
    inline = [k for k in NETWORK_KEYS if k in data]
    if "preset" in data:
        if inline:
            raise ConfigError(f"'preset' cannot be combined with inline network keys {inline}", source)
        load = data.get("load", 0.9)
        if isinstance(load, bool) or not isinstance(load, (int, float)):
            raise ConfigError("'load' must be a number", source)
        try:
            net = make_preset(str(data["preset"]), float(load))
        except ValueError as exc:
            raise ConfigError(str(exc), f"{source}: preset") from exc
    else:
        if "load" in data:
            raise ConfigError("'load' only applies to presets", source)
        try:
            net = validate_network({k: data[k] for k in inline})
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), f"{source}: network") from exc
    mode = data.get("mode", "discrete")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}", source)
    policy = _block(PolicyConfig, data.get("policy"), f"{source}: policy")
    if policy.kind not in POLICY_KINDS:
        raise ConfigError(f"unknown policy {policy.kind!r}; expected one of {POLICY_KINDS}", f"{source}: policy")
    disc = _block(DiscreteConfig, data.get("discrete"), f"{source}: discrete")
    if disc.horizon < 1 or disc.stride < 1 or disc.replicas < 1:
        raise ConfigError("horizon, stride and replicas must be positive", f"{source}: discrete")
    fl = _block(FluidConfig, data.get("fluid"), f"{source}: fluid")
    if not (fl.T > 0 and fl.dt > 0 and fl.stride >= 1 and fl.initial_mass >= 0):
        raise ConfigError("T, dt and stride must be positive, initial_mass nonnegative", f"{source}: fluid")
    rep = _block(ReportConfig, data.get("report"), f"{source}: report")
    if rep.node is not None and rep.node not in net.nodes:
        raise ConfigError(f"unknown node {rep.node!r}", f"{source}: report")
    return Config(net, mode, policy, disc, fl, rep, source)


def load_config(path: str | Path) -> Config:
    """Read and validate a config file; JSON syntax errors report line and column."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}", str(path)) from exc
    return parse_config(data, str(path))
