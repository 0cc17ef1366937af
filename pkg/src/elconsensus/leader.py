"""Leader exosystem ``v' = S v``, ``q0 = C v`` and its structural checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import DimensionError

EIG_TOL = 1e-9


@dataclass(frozen=True)
class LeaderSystem:
    """Autonomous linear leader.

    Parameters:
        S: (m, m) system matrix.
        C: (n, m) output matrix.
        v0: (m,) initial state.
        allow_unstable: accept an ``S`` with eigenvalues in the open right half-plane.
    """

    S: np.ndarray
    C: np.ndarray
    v0: np.ndarray
    allow_unstable: bool = False

    def __post_init__(self) -> None:
        S = _frozen(self.S, 2)
        C = _frozen(self.C, 2)
        v0 = _frozen(self.v0, 1)
        m = S.shape[0]
        if S.shape != (m, m):
            raise DimensionError(f"S must be square, got {S.shape}")
        if C.shape[1] != m:
            raise DimensionError(f"C has {C.shape[1]} columns, S is {m}x{m}")
        if v0.shape != (m,):
            raise DimensionError(f"v0 has shape {v0.shape}, expected ({m},)")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "v0", v0)

    @property
    def m(self) -> int:
        return self.S.shape[0]

    @property
    def n(self) -> int:
        return self.C.shape[0]

    def state_at(self, t: float) -> np.ndarray:
        """Exact state ``e^{St} v0``."""
        return expm(self.S * t) @ self.v0


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def leader_derivative(sys: LeaderSystem, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != sys.m:
        raise DimensionError(f"v has {v.shape[-1]} entries, expected {sys.m}")
    return v @ sys.S.T


def leader_output(sys: LeaderSystem, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(q0, dq0) = (C v, C S v)``; broadcasts over leading axes of ``v``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != sys.m:
        raise DimensionError(f"v has {v.shape[-1]} entries, expected {sys.m}")
    return v @ sys.C.T, v @ (sys.C @ sys.S).T


def observability_matrix(S: np.ndarray, C: np.ndarray) -> np.ndarray:
    blocks = [C]
    for _ in range(S.shape[0] - 1):
        blocks.append(blocks[-1] @ S)
    return np.vstack(blocks)


@dataclass(frozen=True)
class LeaderReport:
    observable: bool
    stable_modes: bool
    bounded_velocity: bool
    max_real_eig: float
    dq0_peak: float
    dq0_bound: float


def check_assumptions(
    sys: LeaderSystem,
    horizon: float = 100.0,
    bound_multiplier: float = 10.0,
    samples: int = 2001,
) -> LeaderReport:
    """Structural checks on the leader: observability plus stable, bounded velocity output.

    Boundedness of ``dq0(t) = C S e^{St} v0`` is judged numerically: it must
    stay under ``bound_multiplier`` times the reference magnitude
    ``max(|C S v0|, |C S| |v0|)`` over ``[0, horizon]``.
    """
    obs = np.linalg.matrix_rank(observability_matrix(sys.S, sys.C)) == sys.m
    max_re = float(np.max(np.linalg.eigvals(sys.S).real))
    stable = max_re <= EIG_TOL

    CS = sys.C @ sys.S
    ref = max(np.linalg.norm(CS @ sys.v0), np.linalg.norm(CS, 2) * np.linalg.norm(sys.v0))
    bound = bound_multiplier * ref
    # Propagate with a fixed one-step transition to keep the sweep cheap.
    dt = horizon / (samples - 1)
    step = expm(sys.S * dt)
    v = sys.v0.copy()
    peak = 0.0
    for _ in range(samples):
        peak = max(peak, float(np.linalg.norm(CS @ v)))
        if not np.isfinite(peak) or peak > bound:
            break
        v = step @ v
    bounded = ref == 0.0 or peak <= bound
    return LeaderReport(bool(obs), bool(stable), bool(bounded), max_re, peak, bound)
