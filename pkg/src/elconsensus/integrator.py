"""Fixed-step integration of the coupled leader/observer/plant/controller ODE.

Flat state layout (stable across versions)::

    v (m)
    then for each follower i = 1..N, contiguous:
        q_i (n), dq_i (n), S_i (m*m, row-major), eta_i (m), theta_hat_i (p)

Steps never straddle a switching instant: each piece of the switching
schedule is integrated with its own step, the largest not exceeding ``h``
that divides the piece evenly.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .controller import ControlTerms, follower_control
from .errors import DivergenceError, ScheduleExhaustedError
from .graph import evaluate_signal
from .observer import observer_rates
from .scenario import IntegratorConfig, Scenario

log = logging.getLogger(__name__)


class StateLayout:
    def __init__(self, N: int, n: int, m: int, p: int) -> None:
        self.N, self.n, self.m, self.p = N, n, m, p
        self.block = 2 * n + m * m + m + p
        self.size = m + N * self.block
        o = np.cumsum([0, n, n, m * m, m, p])
        self._slices = [slice(int(a), int(b)) for a, b in zip(o[:-1], o[1:])]

    def views(self, x: np.ndarray):
        """``(v, q, dq, S_est, eta, theta_hat)`` as views into ``x`` (..., size)."""
        lead = x.shape[:-1]
        blk = x[..., self.m:].reshape(lead + (self.N, self.block))
        sq, sdq, sS, se, st = self._slices
        S = blk[..., sS].reshape(lead + (self.N, self.m, self.m))
        return x[..., :self.m], blk[..., sq], blk[..., sdq], S, blk[..., se], blk[..., st]

    def labels(self) -> list[str]:
        out = [f"v_{k}" for k in range(self.m)]
        for i in range(1, self.N + 1):
            out += [f"q{i}_{k}" for k in range(self.n)]
            out += [f"dq{i}_{k}" for k in range(self.n)]
            out += [f"S{i}_{r}{c}" for r in range(self.m) for c in range(self.m)]
            out += [f"eta{i}_{k}" for k in range(self.m)]
            out += [f"thetahat{i}_{k}" for k in range(self.p)]
        return out


@dataclass
class FullState:
    v: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    S_est: np.ndarray
    eta: np.ndarray
    theta_hat: np.ndarray

    def flatten(self) -> np.ndarray:
        N = self.q.shape[0]
        per = [self.q, self.dq, self.S_est.reshape(N, -1), self.eta, self.theta_hat]
        return np.concatenate([self.v, np.concatenate(per, axis=1).ravel()])

    @classmethod
    def unflatten(cls, x: np.ndarray, layout: StateLayout) -> "FullState":
        return cls(*(np.array(a) for a in layout.views(np.asarray(x, dtype=np.float64))))

    @classmethod
    def initial(cls, scenario: Scenario) -> "FullState":
        ic = scenario.initial
        return cls(scenario.leader.v0.copy(), *(np.array(a, dtype=np.float64) for a in
                   (ic.q, ic.dq, ic.S_est, ic.eta, ic.theta_hat)))


def layout_for(scenario: Scenario) -> StateLayout:
    return StateLayout(scenario.N, scenario.n, scenario.m, scenario.p)


class LoopTerms(NamedTuple):
    dv: np.ndarray
    dS_est: np.ndarray
    deta: np.ndarray
    eta_d: np.ndarray
    control: ControlTerms
    ddq: np.ndarray


class ClosedLoop:
    """Right-hand side of the full closed loop for one scenario.

    Works on flat states with arbitrary leading axes, so the same code serves
    the integrator (one state) and log analysis (many samples at once).
    """

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.layout = layout_for(scenario)
        self.S = scenario.leader.S
        self.C = scenario.leader.C
        self.ST = self.S.T.copy()
        # Holds the true parameters; used only to advance the plant.
        self.plant = scenario.stacked_plant()
        self.gains = scenario.controller_gains
        self.mu1 = scenario.observer_gains.mu1
        self.mu2 = scenario.observer_gains.mu2
        self.torque_limit = scenario.torque_limit
        self._advance = getattr(self.plant, "_forward_unchecked", self.plant.forward_dynamics)

    def terms(self, x: np.ndarray, weights: np.ndarray) -> LoopTerms:
        v, q, dq, S_est, eta, th = self.layout.views(x)
        dv = v @ self.ST
        dS, deta, eta_d = observer_rates(S_est, eta, self.S, v, weights, self.mu1, self.mu2)
        ct = follower_control(
            self.C, q, dq, S_est, eta, dS, deta, th, self.gains,
            self.plant.regression_matrix, self.torque_limit,
        )
        ddq = self._advance(q, dq, ct.tau)
        return LoopTerms(dv, dS, deta, eta_d, ct, ddq)

    def rates(self, x: np.ndarray, weights: np.ndarray) -> np.ndarray:
        t = self.terms(x, weights)
        out = np.empty_like(x)
        v, q, dq, S_est, eta, th = self.layout.views(out)
        v[...] = t.dv
        q[...] = self.layout.views(x)[2]
        dq[...] = t.ddq
        S_est[...] = t.dS_est
        eta[...] = t.deta
        th[...] = t.control.dtheta_hat
        return out


def full_derivative(state: FullState, t: float, scenario: Scenario) -> FullState:
    """Time derivative of the full state at ``t`` using the graph active then."""
    loop = ClosedLoop(scenario)
    weights = scenario.network.graph_at(t).weights
    dx = loop.rates(state.flatten(), weights)
    return FullState.unflatten(dx, loop.layout)


@dataclass
class TrajectoryLog:
    """Sampled trajectory.

    ``segments`` lists the ``(t_start, t_end, graph_index)`` pieces actually
    integrated; sample times at piece boundaries belong to the later piece.
    """

    times: np.ndarray
    states: np.ndarray
    layout: StateLayout
    segments: list[tuple[float, float, int]]
    scenario: Scenario

    def __len__(self) -> int:
        return len(self.times)

    def graph_indices(self) -> np.ndarray:
        if not self.segments:
            return np.full(len(self.times), evaluate_signal(self.scenario.network.signal, 0.0))
        starts = [s[0] for s in self.segments]
        idx = [min(bisect.bisect_right(starts, t), len(starts)) - 1 for t in self.times]
        return np.array([self.segments[max(k, 0)][2] for k in idx])

    def switching_instants(self) -> np.ndarray:
        return np.array([s[0] for s in self.segments[1:]])

    def views(self):
        return self.layout.views(self.states)


def _rk4(f, x, w, h):
    k1 = f(x, w)
    k2 = f(x + (0.5 * h) * k1, w)
    k3 = f(x + (0.5 * h) * k2, w)
    k4 = f(x + h * k3, w)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _euler(f, x, w, h):
    return x + h * f(x, w)


def integrate(scenario: Scenario, config: IntegratorConfig | None = None) -> TrajectoryLog:
    """Integrate from the scenario's initial conditions up to ``config.horizon``."""
    cfg = config or scenario.integrator
    loop = ClosedLoop(scenario)
    # Overflow is reported as DivergenceError, not as numpy warnings.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return integrate_rhs(
            loop.rates, FullState.initial(scenario).flatten(), scenario, cfg, loop.layout
        )


def integrate_rhs(rhs, x0, scenario: Scenario, cfg: IntegratorConfig, layout: StateLayout) -> TrajectoryLog:
    """Integrate ``x' = rhs(x, weights)`` over the scenario's switching schedule."""
    step = {"rk4": _rk4, "euler": _euler}[cfg.method]
    net = scenario.network
    x = np.array(x0, dtype=np.float64)
    times, states = [0.0], [x.copy()]
    segments: list[tuple[float, float, int]] = []
    count = 0
    last_t = 0.0
    if cfg.horizon > 0:
        for t0, t1, p in net.signal.iter_pieces():
            if t0 >= cfg.horizon:
                break
            end = min(t1, cfg.horizon)
            n_steps = max(1, math.ceil((end - t0) / cfg.h - 1e-9))
            h = (end - t0) / n_steps
            segments.append((t0, end, p))
            w = net.graph(p).weights
            for k in range(1, n_steps + 1):
                x = step(rhs, x, w, h)
                t = end if k == n_steps else t0 + k * h
                if not np.isfinite(x).all():
                    bad = int(np.flatnonzero(~np.isfinite(x))[0])
                    raise DivergenceError(t, layout.labels()[bad])
                count += 1
                last_t = t
                if count % cfg.record_every == 0:
                    times.append(t)
                    states.append(x.copy())
        if last_t < cfg.horizon:
            raise ScheduleExhaustedError(
                f"switching schedule ends at t={last_t:g} before the horizon {cfg.horizon:g}"
            )
        if times[-1] != last_t:
            times.append(last_t)
            states.append(x.copy())
    log.debug("integrated %d steps over %d pieces", count, len(segments))
    return TrajectoryLog(np.array(times), np.array(states), layout, segments, scenario)


def integrate_leader(S, v0, h: float, horizon: float, method: str = "rk4") -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``v' = S v`` alone with a fixed step; returns ``(times, states)``."""
    S = np.asarray(S, dtype=np.float64)
    ST = S.T.copy()
    step = {"rk4": _rk4, "euler": _euler}[method]
    n_steps = max(0, math.ceil(horizon / h - 1e-9)) if horizon > 0 else 0
    h = horizon / n_steps if n_steps else h
    x = np.array(v0, dtype=np.float64)
    times = np.arange(n_steps + 1) * h
    states = np.empty((n_steps + 1, x.size))
    states[0] = x
    for k in range(1, n_steps + 1):
        x = step(lambda y, _: y @ ST, x, None, h)
        states[k] = x
    return times, states
