"""Scenario configuration files (TOML).

Sections and keys::

    [network]     graphs, schedule, repeat, dwell_time, epsilon
    [leader]      S, C, v0, allow_unstable
    [plants]      model, g, theta
    [gains]       mu1, mu2, alpha, K, Lambda, torque_limit
    [initial]     seed, scale, q, dq, S, eta, theta_hat
    [integrator]  h, method, horizon, record_every
    [analysis]    tracking_tol, observer_tol, lyapunov_tol, rate_window,
                  check_tracking, check_observer, check_lyapunov

``network.graphs`` is a list with one entry per graph, each a list of
``[from, to, weight]`` triples (node 0 is the leader). ``network.schedule``
is a list of ``[duration, graph_index]`` pairs with 1-based indices.
``K`` and ``Lambda`` accept a scalar (times identity), one matrix shared by
all followers, or one matrix per follower. Matrices are row-major nested
arrays. Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import sys
from pathlib import Path
from typing import Any

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .controller import ControllerGains
from .errors import ConfigError
from .graph import SwitchingNetwork, SwitchingSignal, WeightedDigraph
from .leader import LeaderSystem
from .observer import ObserverGains
from .plant import GRAVITY, make_plant
from .scenario import (
    DEFAULT_SEED,
    EXAMPLE_C,
    EXAMPLE_EDGES,
    EXAMPLE_PERIOD,
    EXAMPLE_S,
    EXAMPLE_THETAS,
    AnalysisConfig,
    InitialConditions,
    IntegratorConfig,
    Scenario,
    random_initial_conditions,
)

SCHEMA: dict[str, set[str]] = {
    "network": {"graphs", "schedule", "repeat", "dwell_time", "epsilon"},
    "leader": {"S", "C", "v0", "allow_unstable"},
    "plants": {"model", "g", "theta"},
    "gains": {"mu1", "mu2", "alpha", "K", "Lambda", "torque_limit"},
    "initial": {"seed", "scale", "q", "dq", "S", "eta", "theta_hat"},
    "integrator": {"h", "method", "horizon", "record_every"},
    "analysis": {
        "tracking_tol", "observer_tol", "lyapunov_tol", "rate_window",
        "check_tracking", "check_observer", "check_lyapunov",
    },
}
REQUIRED = {
    "network": ("graphs", "schedule"),
    "leader": ("S", "C", "v0"),
    "plants": ("theta",),
}


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def parse_config(text: str, source: str = "<config>") -> dict:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        if line is None:
            raise ConfigError(f"{source}: {exc}") from exc
        raise ConfigError(f"{source}: line {line}, column {col}: {getattr(exc, 'msg', exc)}") from exc
    check_keys(doc, source)
    return doc


def check_keys(doc: dict, source: str = "<config>") -> None:
    for section, body in doc.items():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"{source}: [{section}] must be a table")
        for key in body:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
    for section, keys in REQUIRED.items():
        for key in keys:
            if key not in doc.get(section, {}):
                raise ConfigError(f"{source}: missing required key {section}.{key}")


def dump_config(doc: dict) -> str:
    return tomli_w.dumps(doc)


def _parse_value(raw: str) -> Any:
    try:
        return tomllib.loads(f"x = {raw}")["x"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Return a copy of ``doc`` with ``section.key=value`` overrides applied.

    Values are parsed as TOML literals (numbers, booleans, arrays); anything
    else is taken as a bare string.
    """
    out = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        path, raw = item.split("=", 1)
        parts = path.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {path!r} must be section.key")
        section, key = parts
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown override key {path!r}")
        out.setdefault(section, {})[key] = _parse_value(raw.strip())
    return out


def builtin_config(seed: int = DEFAULT_SEED) -> dict:
    """Config document for the built-in example.

    The four network graphs are stand-ins: one edge per phase forming the chain
    0 -> 1 -> 2 -> 3 -> 4, so every graph is disconnected but each period's
    union is connected. Joint positions and velocities come from ``seed``.
    """
    quarter = EXAMPLE_PERIOD / 4
    return {
        "network": {
            "graphs": [[list(e) for e in edges] for edges in EXAMPLE_EDGES],
            "schedule": [[quarter, k] for k in range(1, 5)],
            "repeat": True,
            "dwell_time": quarter,
            "epsilon": EXAMPLE_PERIOD,
        },
        "leader": {
            "S": [[float(x) for x in row] for row in EXAMPLE_S],
            "C": [[float(x) for x in row] for row in EXAMPLE_C],
            "v0": [1.0] * 4,
        },
        "plants": {"model": "two_link", "g": GRAVITY, "theta": [list(t) for t in EXAMPLE_THETAS]},
        "gains": {"mu1": 10.0, "mu2": 10.0, "alpha": 10.0, "K": 20.0, "Lambda": 0.2},
        "initial": {"seed": seed},
        "integrator": {"h": 1e-3, "method": "rk4", "horizon": 60.0, "record_every": 10},
    }


def _array(doc: dict, section: str, key: str, ndim: int | None = None) -> np.ndarray:
    try:
        arr = np.array(doc[section][key], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key} must be a numeric array: {exc}") from exc
    if ndim is not None and arr.ndim != ndim:
        raise ConfigError(f"{section}.{key} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def _number(body: dict, section: str, key: str, default, kind=float):
    val = body.get(key, default)
    if val is None:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {val!r}")
    if kind is int and int(val) != val:
        raise ConfigError(f"{section}.{key} must be an integer, got {val!r}")
    return kind(val)


def _flag(body: dict, section: str, key: str, default: bool) -> bool:
    val = body.get(key, default)
    if not isinstance(val, bool):
        raise ConfigError(f"{section}.{key} must be true or false, got {val!r}")
    return val


def _per_follower_matrix(value, N: int, dim: int, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.stack([arr * np.eye(dim)] * N)
    if arr.ndim == 2:
        return np.stack([arr] * N)
    if arr.ndim == 3:
        return arr
    raise ConfigError(f"gains.{name} must be a scalar, a matrix or a list of matrices")


def scenario_from_config(doc: dict) -> Scenario:
    check_keys(doc)
    try:
        return _build(doc)
    except ConfigError:
        raise
    except (ValueError, TypeError, IndexError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _build(doc: dict) -> Scenario:
    net_doc = doc["network"]
    pl_doc = doc["plants"]
    gains = doc.get("gains", {})
    init = doc.get("initial", {})
    integ = doc.get("integrator", {})
    an = doc.get("analysis", {})

    thetas = _array(doc, "plants", "theta", 2)
    N = thetas.shape[0]
    model = pl_doc.get("model", "two_link")
    g = _number(pl_doc, "plants", "g", GRAVITY)
    plants = tuple(make_plant(model, th, g=g) for th in thetas)
    n, p = plants[0].n, plants[0].p

    graphs = tuple(WeightedDigraph.from_edges(N + 1, edges) for edges in net_doc["graphs"])
    signal = SwitchingSignal(
        tuple((d, int(k)) for d, k in net_doc["schedule"]),
        repeat=_flag(net_doc, "network", "repeat", True),
        dwell_time=_number(net_doc, "network", "dwell_time", None),
    )
    network = SwitchingNetwork(graphs, signal)
    epsilon = _number(net_doc, "network", "epsilon", signal.period)

    leader = LeaderSystem(
        _array(doc, "leader", "S", 2),
        _array(doc, "leader", "C", 2),
        _array(doc, "leader", "v0", 1),
        allow_unstable=_flag(doc["leader"], "leader", "allow_unstable", False),
    )
    m = leader.m

    seed = _number(init, "initial", "seed", DEFAULT_SEED, int)
    scale = _number(init, "initial", "scale", 1.0)
    rnd = random_initial_conditions(N, n, m, p, seed, scale)
    ic = InitialConditions(
        *(
            _array(doc, "initial", key) if key in init else getattr(rnd, attr)
            for key, attr in (("q", "q"), ("dq", "dq"), ("S", "S_est"), ("eta", "eta"), ("theta_hat", "theta_hat"))
        )
    )

    cg = ControllerGains(
        _number(gains, "gains", "alpha", 10.0),
        _per_follower_matrix(gains.get("K", 20.0), N, n, "K"),
        _per_follower_matrix(gains.get("Lambda", 0.2), N, p, "Lambda"),
    )
    og = ObserverGains(_number(gains, "gains", "mu1", 10.0), _number(gains, "gains", "mu2", 10.0))

    defaults = IntegratorConfig()
    ic_cfg = IntegratorConfig(
        h=_number(integ, "integrator", "h", defaults.h),
        method=str(integ.get("method", defaults.method)),
        horizon=_number(integ, "integrator", "horizon", defaults.horizon),
        record_every=_number(integ, "integrator", "record_every", defaults.record_every, int),
    )
    ad = AnalysisConfig()
    window = an.get("rate_window", list(ad.rate_window))
    if not (isinstance(window, list) and len(window) == 2):
        raise ConfigError("analysis.rate_window must be [start, end]")
    an_cfg = AnalysisConfig(
        tracking_tol=_number(an, "analysis", "tracking_tol", ad.tracking_tol),
        observer_tol=_number(an, "analysis", "observer_tol", ad.observer_tol),
        lyapunov_tol=_number(an, "analysis", "lyapunov_tol", ad.lyapunov_tol),
        rate_window=(float(window[0]), float(window[1])),
        check_tracking=_flag(an, "analysis", "check_tracking", ad.check_tracking),
        check_observer=_flag(an, "analysis", "check_observer", ad.check_observer),
        check_lyapunov=_flag(an, "analysis", "check_lyapunov", ad.check_lyapunov),
    )
    return Scenario(
        network=network,
        leader=leader,
        plants=plants,
        observer_gains=og,
        controller_gains=cg,
        initial=ic,
        integrator=ic_cfg,
        analysis=an_cfg,
        epsilon=epsilon,
        seed=seed,
        torque_limit=_number(gains, "gains", "torque_limit", None),
    )


def _tolist(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def scenario_to_config(sc: Scenario) -> dict:
    """Config document that rebuilds ``sc`` exactly, initial conditions included."""
    net = sc.network
    first = sc.plants[0]
    doc = {
        "network": {
            "graphs": [[[j, i, w] for j, i, w in g.edges()] for g in net.graphs],
            "schedule": [[d, k] for d, k in net.signal.pieces],
            "repeat": net.signal.repeat,
            "dwell_time": net.signal.dwell_time,
            "epsilon": sc.epsilon,
        },
        "leader": {
            "S": _tolist(sc.leader.S),
            "C": _tolist(sc.leader.C),
            "v0": _tolist(sc.leader.v0),
            "allow_unstable": sc.leader.allow_unstable,
        },
        "plants": {"model": first.name, "theta": _tolist(sc.true_thetas()), **first.options()},
        "gains": {
            "mu1": sc.observer_gains.mu1,
            "mu2": sc.observer_gains.mu2,
            "alpha": sc.controller_gains.alpha,
            "K": _tolist(sc.controller_gains.K),
            "Lambda": _tolist(sc.controller_gains.Lambda),
        },
        "initial": {
            "seed": sc.seed,
            "q": _tolist(sc.initial.q),
            "dq": _tolist(sc.initial.dq),
            "S": _tolist(sc.initial.S_est),
            "eta": _tolist(sc.initial.eta),
            "theta_hat": _tolist(sc.initial.theta_hat),
        },
        "integrator": {
            "h": sc.integrator.h,
            "method": sc.integrator.method,
            "horizon": sc.integrator.horizon,
            "record_every": sc.integrator.record_every,
        },
        "analysis": {
            "tracking_tol": sc.analysis.tracking_tol,
            "observer_tol": sc.analysis.observer_tol,
            "lyapunov_tol": sc.analysis.lyapunov_tol,
            "rate_window": list(sc.analysis.rate_window),
            "check_tracking": sc.analysis.check_tracking,
            "check_observer": sc.analysis.check_observer,
            "check_lyapunov": sc.analysis.check_lyapunov,
        },
    }
    if sc.torque_limit is not None:
        doc["gains"]["torque_limit"] = sc.torque_limit
    return doc
