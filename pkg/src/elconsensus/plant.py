"""Euler-Lagrange plants ``M(q) q'' + C(q, q') q' + G(q) = tau``.

Every plant method broadcasts over leading axes of its arguments, including
``theta``. The integrator relies on this to evaluate all followers at once by
stacking their parameter vectors (see :func:`stack_plants`).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import ClassVar, Sequence

import numpy as np

from .errors import CapabilityError, DimensionError

GRAVITY = 9.8


class PlantModel(ABC):
    """Base class for plants whose dynamics are evaluated from a parameter vector.

    ``theta`` holds the true parameters. Only the simulator reads it; the
    controller works from its own estimates passed explicitly as ``theta=``.
    """

    name: ClassVar[str]
    n: ClassVar[int]
    p: ClassVar[int]
    linear_in_parameters: ClassVar[bool] = True

    def __init__(self, theta) -> None:
        theta = np.array(theta, dtype=np.float64)
        if theta.shape[-1] != self.p:
            raise DimensionError(f"{self.name} expects {self.p} parameters, got {theta.shape[-1]}")
        theta.setflags(write=False)
        self.theta = theta

    def options(self) -> dict:
        """Constructor keyword arguments other than ``theta``."""
        return {}

    def with_theta(self, theta) -> "PlantModel":
        return type(self)(theta, **self.options())

    def _theta(self, theta):
        return self.theta if theta is None else np.asarray(theta, dtype=np.float64)

    @abstractmethod
    def mass_matrix(self, q, theta=None) -> np.ndarray: ...

    @abstractmethod
    def coriolis_matrix(self, q, dq, theta=None) -> np.ndarray: ...

    @abstractmethod
    def gravity_vector(self, q, theta=None) -> np.ndarray: ...

    def inverse_dynamics(self, q, dq, ddq, theta=None) -> np.ndarray:
        return (
            _matvec(self.mass_matrix(q, theta), ddq)
            + _matvec(self.coriolis_matrix(q, dq, theta), dq)
            + self.gravity_vector(q, theta)
        )

    def forward_dynamics(self, q, dq, tau, theta=None) -> np.ndarray:
        """Joint accelerations ``M^{-1} (tau - C q' - G)``."""
        for name, arr in (("q", q), ("dq", dq), ("tau", tau)):
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"non-finite {name} passed to forward_dynamics")
        return self._forward_unchecked(q, dq, tau, theta)

    def _forward_unchecked(self, q, dq, tau, theta=None) -> np.ndarray:
        rhs = (
            np.asarray(tau, dtype=np.float64)
            - _matvec(self.coriolis_matrix(q, dq, theta), dq)
            - self.gravity_vector(q, theta)
        )
        return np.linalg.solve(self.mass_matrix(q, theta), rhs[..., None])[..., 0]

    def regression_matrix(self, q, dq, x, y) -> np.ndarray:
        """Regressor ``Y`` with ``Y @ theta == M(q) x + C(q, dq) y + G(q)``.

        Column k is the dynamics expression evaluated at ``theta = e_k``. That is
        exact for models linear in their parameters with no parameter-free term.
        """
        if not self.linear_in_parameters:
            raise CapabilityError(f"{self.name} is not linear in its parameters")
        basis = np.eye(self.p)
        q, dq = np.asarray(q)[..., None, :], np.asarray(dq)[..., None, :]
        x, y = np.asarray(x)[..., None, :], np.asarray(y)[..., None, :]
        cols = (
            _matvec(self.mass_matrix(q, basis), x)
            + _matvec(self.coriolis_matrix(q, dq, basis), y)
            + self.gravity_vector(q, basis)
        )
        return np.swapaxes(cols, -1, -2)

    def bound_samples(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Configurations used to certify the inertia bounds."""
        return rng.uniform(-np.pi, np.pi, size=(count, self.n))


def _matvec(m: np.ndarray, x) -> np.ndarray:
    return (m @ np.asarray(x)[..., None])[..., 0]


class TwoLinkArm(PlantModel):
    """Planar two-link manipulator, ``theta = (a1, a2, a3, a4, a5)``."""

    name = "two_link"
    n = 2
    p = 5

    def __init__(self, theta, g: float = GRAVITY) -> None:
        super().__init__(theta)
        a = self.theta
        if np.any(a <= 0):
            raise ValueError("two-link parameters a1..a5 must be positive")
        if np.any(a[..., 0] * a[..., 1] <= a[..., 2] ** 2):
            raise ValueError("two-link parameters need a1*a2 > a3**2 for a positive definite inertia")
        self.g = float(g)

    def options(self) -> dict:
        return {"g": self.g}

    def mass_matrix(self, q, theta=None):
        a = self._theta(theta)
        c2 = np.cos(np.asarray(q)[..., 1])
        m12 = a[..., 1] + a[..., 2] * c2
        out = np.empty(m12.shape + (2, 2))
        out[..., 0, 0] = a[..., 0] + a[..., 1] + 2 * a[..., 2] * c2
        out[..., 0, 1] = m12
        out[..., 1, 0] = m12
        out[..., 1, 1] = a[..., 1]
        return out

    def coriolis_matrix(self, q, dq, theta=None):
        a = self._theta(theta)
        dq = np.asarray(dq)
        h = a[..., 2] * np.sin(np.asarray(q)[..., 1])
        c12 = -h * (dq[..., 0] + dq[..., 1])
        out = np.empty(c12.shape + (2, 2))
        out[..., 0, 0] = -h * dq[..., 1]
        out[..., 0, 1] = c12
        out[..., 1, 0] = h * dq[..., 0]
        out[..., 1, 1] = 0.0
        return out

    def gravity_vector(self, q, theta=None):
        a = self._theta(theta)
        q = np.asarray(q)
        g2 = a[..., 4] * (self.g * np.cos(q[..., 0] + q[..., 1]))
        out = np.empty(g2.shape + (2,))
        out[..., 0] = a[..., 3] * (self.g * np.cos(q[..., 0])) + g2
        out[..., 1] = g2
        return out

    def _forward_unchecked(self, q, dq, tau, theta=None):
        # Closed-form 2x2 inverse; much cheaper than a batched solve.
        rhs = (
            np.asarray(tau)
            - _matvec(self.coriolis_matrix(q, dq, theta), dq)
            - self.gravity_vector(q, theta)
        )
        m = self.mass_matrix(q, theta)
        det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
        out = np.empty_like(rhs)
        out[..., 0] = (m[..., 1, 1] * rhs[..., 0] - m[..., 0, 1] * rhs[..., 1]) / det
        out[..., 1] = (m[..., 0, 0] * rhs[..., 1] - m[..., 1, 0] * rhs[..., 0]) / det
        return out

    def bound_samples(self, count, rng):
        # Inertia depends on the elbow angle alone.
        q = np.zeros((count, 2))
        q[:, 1] = np.linspace(-np.pi, np.pi, count)
        return q

    def gravity_bound(self) -> np.ndarray:
        """Closed-form witness ``(a4 + 2 a5) g`` for ``|G(q)|``."""
        return (self.theta[..., 3] + 2 * self.theta[..., 4]) * self.g


PLANT_MODELS: dict[str, type[PlantModel]] = {}


def register_plant(cls: type[PlantModel]) -> type[PlantModel]:
    """Make a plant class available to scenario configs under ``cls.name``."""
    PLANT_MODELS[cls.name] = cls
    return cls


register_plant(TwoLinkArm)


def make_plant(model: str, theta, **options) -> PlantModel:
    try:
        cls = PLANT_MODELS[model]
    except KeyError:
        raise ValueError(f"unknown plant model {model!r}; known: {sorted(PLANT_MODELS)}") from None
    return cls(theta, **options)


def stack_plants(plants: Sequence[PlantModel]) -> PlantModel:
    """One plant instance whose ``theta`` stacks every follower's parameters."""
    first = plants[0]
    for pl in plants[1:]:
        if type(pl) is not type(first) or pl.options() != first.options():
            raise ValueError("all followers must share one plant model and its options")
    return first.with_theta(np.stack([pl.theta for pl in plants]))


def model_bounds(
    plant: PlantModel, samples: int = 10_000, seed: int = 0
) -> dict[str, float]:
    """Empirical constants ``k_m <= eig(M) <= k_M``, ``|C| <= k_c |q'|``, ``|G| <= k_g``."""
    rng = np.random.default_rng(seed)
    q_grid = plant.bound_samples(samples, rng)
    eig = np.linalg.eigvalsh(plant.mass_matrix(q_grid))
    q = rng.uniform(-np.pi, np.pi, size=(samples, plant.n))
    dq = rng.normal(size=(samples, plant.n))
    dq /= np.linalg.norm(dq, axis=-1, keepdims=True)
    k_c = np.linalg.norm(plant.coriolis_matrix(q, dq), ord=2, axis=(-2, -1)).max()
    k_g = np.linalg.norm(plant.gravity_vector(q), axis=-1).max()
    return {
        "k_m": float(eig.min()),
        "k_M": float(eig.max()),
        "k_c": float(k_c),
        "k_g": float(k_g),
    }

