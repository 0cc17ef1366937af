"""Post-run diagnostics on trajectory logs.

Channels are arrays with a leading sample axis aligned with ``log.times``.
True plant parameters enter only here (for the Lyapunov function and the
certainty-equivalence error), never in the controller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controller import ControllerGains, ControlTerms, reference_velocity, sliding_variable
from .integrator import ClosedLoop, LoopTerms, TrajectoryLog
from .leader import leader_output
from .plant import PlantModel
from .scenario import AnalysisConfig

RATE_FLOOR = 1e-14


def _mv(m, x):
    return (m @ x[..., None])[..., 0]


def tracking_errors(log: TrajectoryLog) -> tuple[np.ndarray, np.ndarray]:
    """``|q_i - q0|`` and ``|dq_i - dq0|``, each of shape (K, N)."""
    v, q, dq, *_ = log.views()
    q0, dq0 = leader_output(log.scenario.leader, v)
    return (
        np.linalg.norm(q - q0[:, None, :], axis=-1),
        np.linalg.norm(dq - dq0[:, None, :], axis=-1),
    )


def observer_errors(log: TrajectoryLog) -> tuple[np.ndarray, np.ndarray]:
    """``|S_i - S|_F`` and ``|eta_i - v|``, each of shape (K, N)."""
    v, _, _, S_est, eta, _ = log.views()
    S = log.scenario.leader.S
    return (
        np.linalg.norm(S_est - S, axis=(-2, -1)),
        np.linalg.norm(eta - v[:, None, :], axis=-1),
    )


def stacked_observer_errors(log: TrajectoryLog) -> tuple[np.ndarray, np.ndarray]:
    """Norms of the stacked errors ``col(S_i - S)`` (Frobenius) and ``eta - 1 (x) v``."""
    eS, eeta = observer_errors(log)
    return np.sqrt((eS**2).sum(axis=1)), np.sqrt((eeta**2).sum(axis=1))


def sliding_variables(log: TrajectoryLog) -> np.ndarray:
    """``s_i`` for every sample, shape (K, N, n)."""
    _, q, dq, S_est, eta, _ = log.views()
    dq_r, _ = reference_velocity(log.scenario.leader.C, S_est, eta, q, log.scenario.controller_gains.alpha)
    return sliding_variable(dq, dq_r)


def lyapunov_v(
    log: TrajectoryLog, plant: PlantModel, gains: ControllerGains
) -> np.ndarray:
    """``V = 1/2 (s^T M(q) s + theta_err^T Lambda theta_err)`` summed over followers.

    ``plant`` must carry the stacked true parameters, shape (N, p).
    """
    _, q, _, _, _, th = log.views()
    s = sliding_variables(log)
    M = plant.mass_matrix(q)
    err = th - plant.theta
    kinetic = np.einsum("kni,knij,knj->k", s, M, s)
    param = np.einsum("kni,nij,knj->k", err, gains.Lambda, err)
    return 0.5 * (kinetic + param)


@dataclass(frozen=True)
class RateFit:
    rate: float
    r2: float
    residual: float
    samples: int


def fit_exponential_rate(times, channel, window: tuple[float, float]) -> RateFit:
    """Least-squares fit of ``log(channel)`` against time over ``window``.

    The rate is minus the fitted slope. Values are floored at ``RATE_FLOOR``
    first; a channel that sits at the floor throughout reports an infinite rate.
    """
    times = np.asarray(times, dtype=np.float64)
    channel = np.asarray(channel, dtype=np.float64)
    mask = (times >= window[0]) & (times <= window[1])
    if mask.sum() < 2:
        raise ValueError(f"window {window} holds fewer than two samples")
    t = times[mask]
    floored = np.maximum(channel[mask], RATE_FLOOR)
    if np.all(floored == RATE_FLOOR):
        return RateFit(float("inf"), 1.0, 0.0, int(mask.sum()))
    y = np.log(floored)
    A = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(-coef[0]), r2, ss_res, int(mask.sum()))


def settle_time(times, channel, tol: float) -> float | None:
    """First time after which ``channel`` stays below ``tol``; ``None`` if it never does."""
    channel = np.asarray(channel)
    above = np.flatnonzero(~(channel < tol))
    if above.size == 0:
        return float(times[0])
    last = above[-1]
    if last == len(channel) - 1:
        return None
    return float(times[last + 1])


def sample_terms(log: TrajectoryLog) -> LoopTerms:
    """Closed-loop intermediate quantities at every logged sample.

    Samples are grouped by their active graph so each group is evaluated in
    one vectorized call.
    """
    loop = ClosedLoop(log.scenario)
    gidx = log.graph_indices()
    out = None
    for p in np.unique(gidx):
        mask = gidx == p
        part = loop.terms(log.states[mask], log.scenario.network.graph(int(p)).weights)
        flat_part = _flatten_terms(part)
        if out is None:
            out = [np.empty((len(log),) + a.shape[1:]) for a in flat_part]
        for dst, src in zip(out, flat_part):
            dst[mask] = src
    return _unflatten_terms(out)


def _flatten_terms(t: LoopTerms) -> list[np.ndarray]:
    return [t.dv, t.dS_est, t.deta, t.eta_d, *t.control, t.ddq]


def _unflatten_terms(arrs: list[np.ndarray]) -> LoopTerms:
    k = len(ControlTerms._fields)
    return LoopTerms(arrs[0], arrs[1], arrs[2], arrs[3], ControlTerms(*arrs[4:4 + k]), arrs[4 + k])


def input_decomposition(log: TrajectoryLog, terms: LoopTerms | None = None) -> tuple[np.ndarray, float]:
    """Filter input ``u_i = s_i - C eta_d,i`` and the identity residual.

    ``(dq_i - dxi_i) + alpha (q_i - xi_i)`` must equal ``u_i``, with ``dxi_i``
    taken from the observer rate at each sample. Returns ``(u, max_residual)``.
    """
    terms = terms or sample_terms(log)
    sc = log.scenario
    C = sc.leader.C
    _, q, dq, _, _, _ = log.views()
    ct = terms.control
    u = ct.s - _mv(C, terms.eta_d)
    lhs = (dq - _mv(C, terms.deta)) + sc.controller_gains.alpha * (q - ct.xi)
    return u, float(np.max(np.abs(lhs - u), initial=0.0))


def _fd_interior(log: TrajectoryLog) -> np.ndarray:
    """Indices where a central difference is valid: even spacing, no switch inside."""
    t = log.times
    if len(t) < 3:
        return np.array([], dtype=int)
    k = np.arange(1, len(t) - 1)
    left, right = t[k] - t[k - 1], t[k + 1] - t[k]
    ok = np.abs(left - right) <= 1e-9 * np.maximum(left, right)
    sw = log.switching_instants()
    if sw.size:
        # A switch strictly inside (t[k-1], t[k+1]) breaks the derivative.
        lo = np.searchsorted(sw, t[k - 1], side="right")
        hi = np.searchsorted(sw, t[k + 1], side="left")
        ok &= hi <= lo
    return k[ok]


def error_form_residual(
    log: TrajectoryLog, plant: PlantModel, terms: LoopTerms | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Residual ``|M s' + C s + K s - Y theta_err|`` per interior sample and follower.

    ``s'`` is a central finite difference of logged samples. Returns
    ``(times, residual)`` with residual shape (K', N).
    """
    terms = terms or sample_terms(log)
    sc = log.scenario
    _, q, dq, _, _, th = log.views()
    s = terms.control.s
    k = _fd_interior(log)
    ds = (s[k + 1] - s[k - 1]) / (log.times[k + 1] - log.times[k - 1])[:, None, None]
    lhs = (
        _mv(plant.mass_matrix(q[k]), ds)
        + _mv(plant.coriolis_matrix(q[k], dq[k]), s[k])
        + _mv(sc.controller_gains.K, s[k])
    )
    rhs = _mv(terms.control.Y[k], th[k] - plant.theta)
    return log.times[k], np.linalg.norm(lhs - rhs, axis=-1)


def lyapunov_increase(V: np.ndarray) -> float:
    """Largest increase of ``V`` between consecutive samples (<= 0 when monotone)."""
    if len(V) < 2:
        return 0.0
    return float(np.max(np.diff(V)))


@dataclass
class ChannelReport:
    name: str
    final_value: float
    tolerance: float
    settle_time: float | None
    rate: float | None = None
    r2: float | None = None

    @property
    def passed(self) -> bool:
        return self.settle_time is not None


@dataclass
class ConvergenceReport:
    horizon: float
    channels: list[ChannelReport] = field(default_factory=list)
    criteria: dict[str, bool] = field(default_factory=dict)
    values: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.criteria.values())

    def to_text(self) -> str:
        lines = [f"convergence report (horizon {self.horizon:g} s)", ""]
        head = f"{'channel':<16}{'final':>12}{'tol':>10}{'settled at':>12}{'rate':>10}"
        lines += [head, "-" * len(head)]
        for ch in self.channels:
            st = "never" if ch.settle_time is None else f"{ch.settle_time:.3f}"
            rate = "" if ch.rate is None else f"{ch.rate:.4g}"
            lines.append(f"{ch.name:<16}{ch.final_value:>12.3e}{ch.tolerance:>10.1e}{st:>12}{rate:>10}")
        lines.append("")
        for key, val in self.values.items():
            lines.append(f"{key} = {val:.6g}")
        lines.append("")
        for key, ok in self.criteria.items():
            lines.append(f"[{'PASS' if ok else 'FAIL'}] {key}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        out = [f"horizon={self.horizon!r}"]
        for ch in self.channels:
            out.append(f"{ch.name}.final={ch.final_value!r}")
            out.append(f"{ch.name}.settle_time={'none' if ch.settle_time is None else repr(ch.settle_time)}")
            if ch.rate is not None:
                out.append(f"{ch.name}.rate={ch.rate!r}")
                out.append(f"{ch.name}.r2={ch.r2!r}")
        out += [f"{k}={v!r}" for k, v in self.values.items()]
        out += [f"criterion.{k}={'pass' if ok else 'fail'}" for k, ok in self.criteria.items()]
        out.append(f"passed={'true' if self.passed else 'false'}")
        return "\n".join(out) + "\n"


def convergence_report(log: TrajectoryLog, cfg: AnalysisConfig | None = None) -> ConvergenceReport:
    sc = log.scenario
    cfg = cfg or sc.analysis
    t = log.times
    rep = ConvergenceReport(horizon=float(t[-1]))

    eq, edq = tracking_errors(log)
    for i in range(sc.N):
        for name, ch in ((f"q{i + 1}_err", eq[:, i]), (f"dq{i + 1}_err", edq[:, i])):
            rep.channels.append(ChannelReport(name, float(ch[-1]), cfg.tracking_tol, settle_time(t, ch, cfg.tracking_tol)))
    S_norm, eta_norm = stacked_observer_errors(log)
    s_ch = ChannelReport("S_hat", float(S_norm[-1]), cfg.observer_tol, settle_time(t, S_norm, cfg.observer_tol))
    lo, hi = cfg.rate_window
    if ((t >= lo) & (t <= hi)).sum() >= 2:
        fit = fit_exponential_rate(t, S_norm, cfg.rate_window)
        s_ch.rate, s_ch.r2 = fit.rate, fit.r2
    rep.channels.append(s_ch)
    rep.channels.append(
        ChannelReport("eta_hat", float(eta_norm[-1]), cfg.observer_tol, settle_time(t, eta_norm, cfg.observer_tol))
    )

    if cfg.check_tracking:
        rep.criteria["tracking_settled"] = all(c.passed for c in rep.channels if c.name.endswith("_err"))
    if cfg.check_observer:
        rep.criteria["observer_settled"] = s_ch.passed and rep.channels[-1].passed
    if cfg.check_lyapunov:
        V = lyapunov_v(log, sc.stacked_plant(), sc.controller_gains)
        inc = lyapunov_increase(V)
        rep.values["lyapunov_max_increase"] = inc
        rep.values["lyapunov_final"] = float(V[-1])
        rep.criteria["lyapunov_nonincreasing"] = inc <= cfg.lyapunov_tol
    return rep
