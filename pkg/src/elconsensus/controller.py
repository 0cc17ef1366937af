"""Adaptive control law driven by the distributed observer.

All functions broadcast over leading axes so one call can serve every
follower (and every logged sample during analysis).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np


def _mv(m, x):
    return (m @ x[..., None])[..., 0]


def _is_spd(m: np.ndarray) -> bool:
    return bool(np.allclose(m, np.swapaxes(m, -1, -2)) and np.all(np.linalg.eigvalsh(m) > 0))


@dataclass(frozen=True)
class ControllerGains:
    """``alpha`` scalar, ``K`` (N, n, n), ``Lambda`` (N, p, p)."""

    alpha: float
    K: np.ndarray
    Lambda: np.ndarray
    Lambda_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        K = np.array(self.K, dtype=np.float64)
        Lam = np.array(self.Lambda, dtype=np.float64)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "Lambda", Lam)
        try:
            inv = np.linalg.inv(Lam)
        except np.linalg.LinAlgError:
            inv = np.full_like(Lam, np.nan)
        object.__setattr__(self, "Lambda_inv", inv)

    def violations(self) -> list[str]:
        out = []
        if not self.alpha > 0:
            out.append(f"controller gain alpha must be > 0, got {self.alpha}")
        for i, k in enumerate(self.K, start=1):
            if not _is_spd(k):
                out.append(f"K for follower {i} must be symmetric positive definite")
        for i, lam in enumerate(self.Lambda, start=1):
            if not _is_spd(lam):
                out.append(f"Lambda for follower {i} must be symmetric positive definite")
        return out


def reference_velocity(C, S_i, eta_i, q_i, alpha):
    """Return ``(dq_r, xi)`` with ``xi = C eta`` and ``dq_r = C S_i eta_i - alpha (q_i - xi)``."""
    xi = _mv(C, eta_i)
    return _mv(C, _mv(S_i, eta_i)) - alpha * (q_i - xi), xi


def reference_acceleration(C, dS_i, S_i, eta_i, deta_i, dq_i, dxi_i, alpha):
    return _mv(C, _mv(dS_i, eta_i) + _mv(S_i, deta_i)) - alpha * (dq_i - dxi_i)


def sliding_variable(dq_i, dq_r):
    return dq_i - dq_r


def control_torque(K_i, s_i, Y_i, theta_hat_i):
    return -_mv(K_i, s_i) + _mv(Y_i, theta_hat_i)


def adaptation_derivative(Lambda_i, Y_i, s_i):
    """Parameter update ``-Lambda^{-1} Y^T s``."""
    ys = _mv(np.swapaxes(Y_i, -1, -2), s_i)
    return -np.linalg.solve(Lambda_i, ys[..., None])[..., 0]


class ControlTerms(NamedTuple):
    xi: np.ndarray
    dq_r: np.ndarray
    ddq_r: np.ndarray
    s: np.ndarray
    Y: np.ndarray
    tau: np.ndarray
    dtheta_hat: np.ndarray


Regressor = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def follower_control(
    C: np.ndarray,
    q: np.ndarray,
    dq: np.ndarray,
    S_est: np.ndarray,
    eta: np.ndarray,
    dS_est: np.ndarray,
    deta: np.ndarray,
    theta_hat: np.ndarray,
    gains: ControllerGains,
    regressor: Regressor,
    torque_limit: float | None = None,
) -> ControlTerms:
    """Torque and adaptation rate from local state plus observer quantities.

    ``dS_est`` and ``deta`` are the observer rates at the same instant; they
    carry the only neighbour information the law consumes.
    """
    dq_r, xi = reference_velocity(C, S_est, eta, q, gains.alpha)
    dxi = _mv(C, deta)
    ddq_r = reference_acceleration(C, dS_est, S_est, eta, deta, dq, dxi, gains.alpha)
    s = sliding_variable(dq, dq_r)
    Y = regressor(q, dq, ddq_r, dq_r)
    tau = control_torque(gains.K, s, Y, theta_hat)
    if torque_limit is not None:
        tau = np.clip(tau, -torque_limit, torque_limit)
    dtheta = -_mv(gains.Lambda_inv, _mv(np.swapaxes(Y, -1, -2), s))
    return ControlTerms(xi, dq_r, ddq_r, s, Y, tau, dtheta)
