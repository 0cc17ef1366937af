"""Scenario assembly and validation, plus the built-in four-manipulator example."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import ControllerGains
from .graph import SwitchingNetwork, SwitchingSignal, WeightedDigraph, check_jointly_connected
from .leader import LeaderSystem, check_assumptions
from .observer import ObserverGains
from .plant import PlantModel, TwoLinkArm, stack_plants

log = logging.getLogger(__name__)

DEFAULT_SEED = 42

EXAMPLE_THETAS = (
    (0.64, 1.10, 0.08, 0.64, 0.32),
    (0.76, 1.17, 0.14, 0.93, 0.44),
    (0.91, 1.26, 0.22, 1.27, 0.58),
    (1.10, 1.36, 0.32, 1.67, 0.73),
)
EXAMPLE_S = ((0, 1, 0, 0), (0, 0, 0, 0), (0, 0, 0, 1), (0, 0, -1, 0))
EXAMPLE_C = ((1, 0, 1, 0), (1, 0, 0, 1))
EXAMPLE_PERIOD = 2.0
# Stand-in topology: one edge per phase, chained 0 -> 1 -> 2 -> 3 -> 4.
# Each graph alone is disconnected; their union over a period is not.
EXAMPLE_EDGES = (((0, 1, 1.0),), ((1, 2, 1.0),), ((2, 3, 1.0),), ((3, 4, 1.0),))


@dataclass(frozen=True)
class IntegratorConfig:
    h: float = 1e-3
    method: str = "rk4"
    horizon: float = 60.0
    record_every: int = 10

    def violations(self) -> list[str]:
        out = []
        if not self.h > 0:
            out.append(f"integrator step h must be > 0, got {self.h}")
        if self.method not in ("rk4", "euler"):
            out.append(f"integrator method must be 'rk4' or 'euler', got {self.method!r}")
        if not self.horizon >= 0:
            out.append(f"integrator horizon must be >= 0, got {self.horizon}")
        if not (isinstance(self.record_every, int) and self.record_every >= 1):
            out.append(f"record_every must be a positive integer, got {self.record_every!r}")
        return out


@dataclass(frozen=True)
class AnalysisConfig:
    tracking_tol: float = 1e-2
    observer_tol: float = 1e-3
    lyapunov_tol: float = 1e-6
    rate_window: tuple[float, float] = (2.0, 20.0)
    check_tracking: bool = True
    check_observer: bool = True
    check_lyapunov: bool = True


@dataclass(frozen=True)
class InitialConditions:
    """Per-follower initial values; arrays have a leading follower axis."""

    q: np.ndarray
    dq: np.ndarray
    S_est: np.ndarray
    eta: np.ndarray
    theta_hat: np.ndarray


@dataclass(frozen=True)
class Scenario:
    network: SwitchingNetwork
    leader: LeaderSystem
    plants: tuple[PlantModel, ...]
    observer_gains: ObserverGains
    controller_gains: ControllerGains
    initial: InitialConditions
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    epsilon: float = EXAMPLE_PERIOD
    seed: int = DEFAULT_SEED
    torque_limit: float | None = None

    @property
    def N(self) -> int:
        return len(self.plants)

    @property
    def n(self) -> int:
        return self.leader.n

    @property
    def m(self) -> int:
        return self.leader.m

    @property
    def p(self) -> int:
        return self.plants[0].p

    def true_thetas(self) -> np.ndarray:
        return np.stack([pl.theta for pl in self.plants])

    def stacked_plant(self) -> PlantModel:
        return stack_plants(self.plants)

    def with_network(self, network: SwitchingNetwork) -> "Scenario":
        return replace(self, network=network)


def random_initial_conditions(
    N: int, n: int, m: int, p: int, seed: int, scale: float = 1.0
) -> InitialConditions:
    """Joint positions and velocities drawn uniformly from ``[-scale, scale]``.

    Observer and parameter estimates start at zero.
    """
    rng = np.random.default_rng(seed)
    q = rng.uniform(-scale, scale, (N, n))
    dq = rng.uniform(-scale, scale, (N, n))
    return InitialConditions(q, dq, np.zeros((N, m, m)), np.zeros((N, m)), np.zeros((N, p)))


def builtin_example(seed: int = DEFAULT_SEED) -> Scenario:
    """Four two-link manipulators tracking a ramp-plus-sinusoid leader."""
    N, n, m, p = 4, 2, 4, 5
    graphs = tuple(WeightedDigraph.from_edges(N + 1, e) for e in EXAMPLE_EDGES)
    quarter = EXAMPLE_PERIOD / 4
    signal = SwitchingSignal(tuple((quarter, k) for k in range(1, 5)), repeat=True, dwell_time=quarter)
    leader = LeaderSystem(np.array(EXAMPLE_S, float), np.array(EXAMPLE_C, float), np.ones(m))
    return Scenario(
        network=SwitchingNetwork(graphs, signal),
        leader=leader,
        plants=tuple(TwoLinkArm(th) for th in EXAMPLE_THETAS),
        observer_gains=ObserverGains(10.0, 10.0),
        controller_gains=ControllerGains(10.0, np.stack([20.0 * np.eye(n)] * N), np.stack([0.2 * np.eye(p)] * N)),
        initial=random_initial_conditions(N, n, m, p, seed),
        epsilon=EXAMPLE_PERIOD,
        seed=seed,
    )


def validate(scenario: Scenario, connectivity_horizon: float | None = None) -> list[str]:
    """Every reason the scenario cannot be run; an empty list means runnable.

    A joint-connectivity failure is only logged as a warning because
    deliberately disconnected networks are legitimate negative controls.
    """
    out: list[str] = []
    sc = scenario
    N, n, m = sc.N, sc.n, sc.m
    if N < 1:
        return ["scenario needs at least one follower"]
    if sc.network.num_nodes != N + 1:
        out.append(f"network has {sc.network.num_nodes} nodes but there are {N} followers (+1 leader)")
    if len({type(pl) for pl in sc.plants}) != 1 or len({tuple(sorted(pl.options().items())) for pl in sc.plants}) != 1:
        out.append("all followers must use the same plant model and options")
    p = sc.p
    for pl in sc.plants:
        if pl.n != n:
            out.append(f"plant dimension {pl.n} does not match leader output dimension {n}")
            break
    ic = sc.initial
    expected = {
        "q": (N, n), "dq": (N, n), "S_est": (N, m, m), "eta": (N, m), "theta_hat": (N, p),
    }
    for name, shape in expected.items():
        got = np.shape(getattr(ic, name))
        if got != shape:
            out.append(f"initial {name} has shape {got}, expected {shape}")
        elif not np.all(np.isfinite(getattr(ic, name))):
            out.append(f"initial {name} must be finite")
    cg = sc.controller_gains
    if cg.K.shape != (N, n, n):
        out.append(f"K has shape {cg.K.shape}, expected {(N, n, n)}")
    if cg.Lambda.shape != (N, p, p):
        out.append(f"Lambda has shape {cg.Lambda.shape}, expected {(N, p, p)}")
    if not out:
        out.extend(cg.violations())
    out.extend(sc.observer_gains.violations())
    out.extend(sc.integrator.violations())
    if sc.torque_limit is not None and not sc.torque_limit > 0:
        out.append(f"torque_limit must be > 0 when set, got {sc.torque_limit}")
    if not sc.epsilon > 0:
        out.append(f"connectivity epsilon must be > 0, got {sc.epsilon}")

    rep = check_assumptions(sc.leader)
    if not rep.observable:
        out.append("leader pair (C, S) is not observable")
    if sc.leader.allow_unstable:
        if not (rep.stable_modes and rep.bounded_velocity):
            log.warning("leader violates its growth assumptions (allowed by allow_unstable)")
    else:
        if not rep.stable_modes:
            out.append(f"leader matrix S has an eigenvalue with positive real part {rep.max_real_eig:.3g}")
        if not rep.bounded_velocity:
            out.append("leader velocity C S e^{St} v0 grows without bound")

    if not out and sc.epsilon > 0:
        horizon = connectivity_horizon
        if horizon is None:
            horizon = max(sc.integrator.horizon, 4 * sc.epsilon)
        conn = check_jointly_connected(sc.network, horizon, sc.epsilon)
        if not conn.passed:
            log.warning("network is not jointly connected: %s", conn.summary())
    return out
