"""Randomized property checks for plants and the observer.

Each check returns a :class:`CheckResult`; :func:`run_suite` bundles the ones
that apply to a scenario. They back the ``verify`` CLI verb.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import WeightedDigraph
from .observer import ObserverState, compact_errors
from .plant import PlantModel, _matvec, model_bounds
from .scenario import Scenario

SKEW_TOL = 1e-6
REGRESSION_TOL = 1e-10
DUAL_FORM_TOL = 1e-10
FD_STEP = 1e-5


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tol: float
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{flag}] {self.name}: {self.value:.3e} (tol {self.tol:g}){extra}"


def _random_states(plant: PlantModel, samples: int, rng: np.random.Generator, velocity_scale: float):
    q = rng.uniform(-np.pi, np.pi, (samples, plant.n))
    dq = velocity_scale * rng.normal(size=(samples, plant.n))
    return q, dq


def skewness_residual(
    plant: PlantModel,
    samples: int = 10_000,
    seed: int = 0,
    velocity_scale: float = 1.0,
    step: float = FD_STEP,
) -> float:
    """Largest ``|x^T (dM/dt - 2C) x|`` over random states.

    ``dM/dt`` is a central difference of ``M`` along ``q + t dq``.
    """
    rng = np.random.default_rng(seed)
    q, dq = _random_states(plant, samples, rng, velocity_scale)
    x = rng.normal(size=(samples, plant.n))
    dM = (plant.mass_matrix(q + step * dq) - plant.mass_matrix(q - step * dq)) / (2 * step)
    N = dM - 2 * plant.coriolis_matrix(q, dq)
    return float(np.max(np.abs(np.einsum("ki,kij,kj->k", x, N, x))))


def regression_residual(plant: PlantModel, samples: int = 10_000, seed: int = 0) -> float:
    """Largest ``|Y theta - (M x + C y + G)|`` over random arguments."""
    rng = np.random.default_rng(seed)
    q, dq = _random_states(plant, samples, rng, 1.0)
    x = rng.normal(size=(samples, plant.n))
    y = rng.normal(size=(samples, plant.n))
    direct = (
        _matvec(plant.mass_matrix(q), x)
        + _matvec(plant.coriolis_matrix(q, dq), y)
        + plant.gravity_vector(q)
    )
    Y = plant.regression_matrix(q, dq, x, y)
    return float(np.max(np.linalg.norm(_matvec(Y, plant.theta) - direct, axis=-1)))


def random_digraph(num_nodes: int, rng: np.random.Generator, density: float = 0.4) -> WeightedDigraph:
    w = np.where(rng.random((num_nodes, num_nodes)) < density, rng.uniform(0.1, 2.0, (num_nodes, num_nodes)), 0.0)
    np.fill_diagonal(w, 0.0)
    return WeightedDigraph(w)


def dual_form_residual(scenario: Scenario, trials: int = 50, seed: int = 0) -> float:
    """Per-agent vs stacked observer error derivatives at random states and graphs."""
    rng = np.random.default_rng(seed)
    N, m = scenario.N, scenario.m
    S = scenario.leader.S
    worst = 0.0
    for _ in range(trials):
        state = ObserverState.random(N, m, rng)
        v = rng.normal(size=m)
        g = random_digraph(N + 1, rng)
        worst = max(worst, compact_errors(state, (S, v), g, scenario.observer_gains).residual)
    return worst


def run_suite(scenario: Scenario, samples: int = 10_000, seed: int = 0) -> list[CheckResult]:
    out: list[CheckResult] = []
    for i, plant in enumerate(scenario.plants, start=1):
        skew = skewness_residual(plant, samples, seed)
        out.append(CheckResult(f"follower {i} skewness", skew < SKEW_TOL, skew, SKEW_TOL))
        reg = regression_residual(plant, samples, seed)
        out.append(CheckResult(f"follower {i} regression identity", reg < REGRESSION_TOL, reg, REGRESSION_TOL))
        b = model_bounds(plant, samples, seed)
        M = plant.mass_matrix(plant.bound_samples(100, np.random.default_rng(seed)))
        sym = float(np.max(np.abs(M - np.swapaxes(M, -1, -2))))
        detail = ", ".join(f"{k}={v:.4g}" for k, v in b.items())
        out.append(CheckResult(f"follower {i} inertia bounds", b["k_m"] > 0 and sym == 0.0, b["k_m"], 0.0, detail))
    dual = dual_form_residual(scenario, seed=seed)
    out.append(CheckResult("observer dual form", dual < DUAL_FORM_TOL, dual, DUAL_FORM_TOL))
    return out
