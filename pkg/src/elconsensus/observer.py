"""Adaptive distributed observer of the leader's system matrix and state.

Follower ``i`` keeps estimates ``S_i`` and ``eta_i`` and updates them from the
neighbours visible in the active graph, with node 0 contributing the true
``S`` and ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .graph import WeightedDigraph, h_matrix


@dataclass(frozen=True)
class ObserverGains:
    mu1: float
    mu2: float

    def violations(self) -> list[str]:
        return [f"observer gain {k} must be > 0, got {getattr(self, k)}"
                for k in ("mu1", "mu2") if not getattr(self, k) > 0]


@dataclass
class ObserverState:
    """Per-follower estimates: ``S_est`` is (N, m, m), ``eta`` is (N, m)."""

    S_est: np.ndarray
    eta: np.ndarray

    def __post_init__(self) -> None:
        self.S_est = np.asarray(self.S_est, dtype=np.float64)
        self.eta = np.asarray(self.eta, dtype=np.float64)
        N, m = self.eta.shape[-2:]
        if self.S_est.shape[-3:] != (N, m, m):
            raise DimensionError(f"S_est shape {self.S_est.shape} does not match eta {self.eta.shape}")

    @classmethod
    def zeros(cls, N: int, m: int) -> "ObserverState":
        return cls(np.zeros((N, m, m)), np.zeros((N, m)))

    @classmethod
    def random(cls, N: int, m: int, rng: np.random.Generator, scale: float = 1.0) -> "ObserverState":
        return cls(rng.uniform(-scale, scale, (N, m, m)), rng.uniform(-scale, scale, (N, m)))


def _diffusion(weights: np.ndarray, own: np.ndarray, leader: np.ndarray) -> np.ndarray:
    """``sum_j a_ij (x_j - x_i)`` for each follower, node 0 supplying ``leader``.

    ``own`` is (..., N, k) and ``leader`` is (..., k); leading axes broadcast.
    """
    a0 = weights[1:, 0]
    af = weights[1:, 1:]
    deg = weights[1:].sum(axis=1)
    return af @ own + a0[:, None] * leader[..., None, :] - deg[:, None] * own


def observer_rates(S_est, eta, S, v, weights, mu1, mu2):
    """Array-level observer right-hand side.

    Returns ``(dS_est, deta, eta_d)``, where ``eta_d`` is the diffusive part of
    ``deta``. Broadcasts over leading axes of ``S_est``, ``eta`` and ``v``.
    """
    m = S.shape[0]
    flat = S_est.reshape(S_est.shape[:-2] + (m * m,))
    dS = (mu1 * _diffusion(weights, flat, S.reshape(m * m))).reshape(S_est.shape)
    eta_d = mu2 * _diffusion(weights, eta, v)
    deta = (S_est @ eta[..., None])[..., 0] + eta_d
    return dS, deta, eta_d


def observer_derivative(
    state: ObserverState,
    leader: tuple[np.ndarray, np.ndarray],
    g: WeightedDigraph,
    gains: ObserverGains,
) -> tuple[np.ndarray, np.ndarray]:
    """Time derivatives ``(dS_i, deta_i)`` for all followers."""
    S, v = (np.asarray(x, dtype=np.float64) for x in leader)
    N, m = state.eta.shape[-2:]
    if S.shape != (m, m) or v.shape[-1] != m:
        raise DimensionError(f"leader dims S{S.shape}, v{v.shape} do not match observer m={m}")
    if g.num_nodes != N + 1:
        raise DimensionError(f"graph has {g.num_nodes} nodes, expected {N + 1}")
    dS, deta, _ = observer_rates(state.S_est, state.eta, S, v, g.weights, gains.mu1, gains.mu2)
    return dS, deta


def eta_di(state: ObserverState, leader, g: WeightedDigraph, mu2: float) -> np.ndarray:
    """Diffusive coupling ``mu2 * sum_j a_ij (eta_j - eta_i)`` per follower."""
    _, v = leader
    return mu2 * _diffusion(g.weights, state.eta, np.asarray(v, dtype=np.float64))


@dataclass(frozen=True)
class CompactErrors:
    """Stacked observer errors.

    ``S_hat`` is ``col(S_1 - S, ..., S_N - S)`` with shape (N m, m), ``eta_hat``
    is ``eta - 1_N (x) v`` and ``S_d`` is ``blockdiag(S_hat_i)``. ``residual`` is
    the largest disagreement between the per-agent and the stacked forms of the
    error derivative.
    """

    S_hat: np.ndarray
    eta_hat: np.ndarray
    S_d: np.ndarray
    dS_hat: np.ndarray
    deta_hat: np.ndarray
    residual: float


def compact_errors(
    state: ObserverState,
    leader: tuple[np.ndarray, np.ndarray],
    g: WeightedDigraph,
    gains: ObserverGains,
) -> CompactErrors:
    S, v = (np.asarray(x, dtype=np.float64) for x in leader)
    N, m = state.eta.shape
    S_hat_i = state.S_est - S
    S_hat = S_hat_i.reshape(N * m, m)
    eta_hat = (state.eta - v).reshape(N * m)
    S_d = np.zeros((N * m, N * m))
    for i in range(N):
        S_d[i * m:(i + 1) * m, i * m:(i + 1) * m] = S_hat_i[i]

    H = np.kron(h_matrix(g), np.eye(m))
    dS_hat = -gains.mu1 * H @ S_hat
    deta_hat = (np.kron(np.eye(N), S) - gains.mu2 * H) @ eta_hat + S_d @ state.eta.reshape(N * m)

    dS, deta = observer_derivative(state, (S, v), g, gains)
    direct_dS_hat = dS.reshape(N * m, m)
    direct_deta_hat = (deta - S @ v).reshape(N * m)
    residual = max(
        float(np.max(np.abs(direct_dS_hat - dS_hat), initial=0.0)),
        float(np.max(np.abs(direct_deta_hat - deta_hat), initial=0.0)),
    )
    return CompactErrors(S_hat, eta_hat, S_d, dS_hat, deta_hat, residual)
