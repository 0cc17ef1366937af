from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from elconsensus.controller import (
    ControllerGains,
    adaptation_derivative,
    control_torque,
    follower_control,
    reference_acceleration,
    reference_velocity,
    sliding_variable,
)
from elconsensus.graph import WeightedDigraph
from elconsensus.integrator import ClosedLoop, FullState, integrate
from elconsensus.leader import leader_output
from elconsensus.plant import TwoLinkArm
from elconsensus.scenario import EXAMPLE_THETAS


@pytest.fixture
def parts(builtin, rng):
    return builtin.leader.S, builtin.leader.C, rng.normal(size=4), TwoLinkArm(EXAMPLE_THETAS[1])


def test_reference_velocity_on_observer_output(parts, rng):
    S, C, v, _ = parts
    S_i = S + 0.1 * rng.normal(size=(4, 4))
    dq_r, xi = reference_velocity(C, S_i, v, C @ v, 10.0)
    np.testing.assert_allclose(xi, C @ v)
    np.testing.assert_allclose(dq_r, C @ S_i @ v)


def test_reference_velocity_perfect_observer(builtin, parts):
    S, C, v, _ = parts
    q0, dq0 = leader_output(builtin.leader, v)
    dq_r, _ = reference_velocity(C, S, v, q0, 10.0)
    np.testing.assert_allclose(dq_r, dq0, atol=1e-14)


def test_reference_velocity_example_start(builtin):
    # Zero observer state, q(0) = (0.5, -0.2): dq_r = -alpha q.
    dq_r, xi = reference_velocity(builtin.leader.C, np.zeros((4, 4)), np.zeros(4), np.array([0.5, -0.2]), 10.0)
    np.testing.assert_array_equal(xi, 0.0)
    np.testing.assert_allclose(dq_r, [-5.0, 2.0])


def test_reference_acceleration_at_consensus(parts):
    S, C, v, _ = parts
    deta = S @ v
    ddq_r = reference_acceleration(C, np.zeros((4, 4)), S, v, deta, C @ S @ v, C @ deta, 10.0)
    np.testing.assert_allclose(ddq_r, C @ S @ S @ v, atol=1e-13)


def test_reference_acceleration_isolated_terms(parts, rng):
    S, C, v, _ = parts
    deta = rng.normal(size=4)
    ddq_r = reference_acceleration(C, np.zeros((4, 4)), S, v, deta, rng.normal(size=2), rng.normal(size=2), 0.0)
    np.testing.assert_allclose(ddq_r, C @ S @ deta)


def test_reference_acceleration_matches_flow_difference(builtin):
    """Central difference of dq_r along the closed-loop flow."""
    loop = ClosedLoop(builtin)
    # Start from a later state so observer and parameter estimates are nonzero.
    x = integrate(replace(builtin, integrator=replace(builtin.integrator, horizon=0.3))).states[-1]
    w = builtin.network.graph(1).weights
    h = 1e-5
    dx = loop.rates(x, w)
    fwd = loop.terms(x + h * dx, w).control.dq_r
    bwd = loop.terms(x - h * dx, w).control.dq_r
    fd = (fwd - bwd) / (2 * h)
    exact = loop.terms(x, w).control.ddq_r
    np.testing.assert_allclose(fd, exact, rtol=1e-6, atol=1e-5 * np.abs(exact).max())


def test_sliding_variable(rng):
    a, b = rng.normal(size=(2, 3))
    np.testing.assert_array_equal(sliding_variable(a, a), 0.0)
    np.testing.assert_array_equal(sliding_variable(a, b), a - b)


def test_torque_is_inverse_dynamics_on_manifold(parts, rng):
    _, _, _, plant = parts
    q, dq, x, y = rng.normal(size=(4, 2))
    Y = plant.regression_matrix(q, dq, x, y)
    tau = control_torque(20 * np.eye(2), np.zeros(2), Y, plant.theta)
    expected = plant.mass_matrix(q) @ x + plant.coriolis_matrix(q, dq) @ y + plant.gravity_vector(q)
    np.testing.assert_allclose(tau, expected, atol=1e-12)


def test_torque_zero_without_estimate_or_error(rng):
    assert not control_torque(np.eye(2), np.zeros(2), rng.normal(size=(2, 5)), np.zeros(5)).any()


def test_torque_expansion(rng):
    K = rng.normal(size=(2, 2))
    s, th = rng.normal(size=2), rng.normal(size=5)
    Y = rng.normal(size=(2, 5))
    np.testing.assert_allclose(control_torque(K, s, Y, th), -K @ s + Y @ th)


def test_adaptation_scalar():
    assert adaptation_derivative(np.array([[2.0]]), np.array([[3.0]]), np.array([4.0]))[0] == -6.0


def test_adaptation_example_gain(rng):
    Y, s = rng.normal(size=(2, 5)), rng.normal(size=2)
    np.testing.assert_allclose(adaptation_derivative(0.2 * np.eye(5), Y, s), -5 * Y.T @ s)
    assert not adaptation_derivative(0.2 * np.eye(5), Y, np.zeros(2)).any()


@pytest.mark.parametrize(
    "alpha, K, Lam, count",
    [
        (10.0, np.eye(2), np.eye(5), 0),
        (-1.0, np.eye(2), np.eye(5), 1),
        (10.0, np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(5), 1),
        (10.0, -np.eye(2), np.eye(5), 1),
        (10.0, np.eye(2), np.zeros((5, 5)), 1),
    ],
)
def test_gain_violations(alpha, K, Lam, count):
    assert len(ControllerGains(alpha, K[None], Lam[None]).violations()) == count


def _torques(scenario, x, weights):
    return ClosedLoop(scenario).terms(x, weights).control.tau


def test_torque_ignores_leader_state_without_leader_edge(builtin, rng):
    """Follower 2 never hears node 0 in graph 2, so v cannot reach its torque."""
    x = FullState.initial(builtin)
    x.S_est, x.eta, x.theta_hat = rng.normal(size=(4, 4, 4)), rng.normal(size=(4, 4)), rng.uniform(0, 1, (4, 5))
    w = builtin.network.graph(2).weights
    base = _torques(builtin, x.flatten(), w)
    x.v = x.v + rng.normal(size=4)
    moved = _torques(builtin, x.flatten(), w)
    np.testing.assert_array_equal(moved, base)


def test_torque_ignores_true_parameters(builtin, rng):
    x = FullState.initial(builtin).flatten() + 0.1 * rng.normal(size=FullState.initial(builtin).flatten().size)
    w = builtin.network.graph(1).weights
    base = _torques(builtin, x, w)
    plants = (builtin.plants[0], TwoLinkArm((2.0, 2.0, 0.1, 2.0, 2.0)), *builtin.plants[2:])
    np.testing.assert_array_equal(_torques(replace(builtin, plants=plants), x, w), base)


def test_torque_depends_on_leader_through_edge(builtin, rng):
    x = FullState.initial(builtin)
    x.theta_hat = np.ones((4, 5))
    w = WeightedDigraph.from_edges(5, [(0, 1)]).weights
    base = _torques(builtin, x.flatten(), w)
    x.v = x.v + 1.0
    moved = _torques(builtin, x.flatten(), w)
    assert not np.array_equal(moved[0], base[0])
    np.testing.assert_array_equal(moved[1:], base[1:])


def test_torque_limit_clips(builtin):
    C = builtin.leader.C
    gains = ControllerGains(10.0, 20 * np.eye(2)[None], np.eye(5)[None])
    plant = TwoLinkArm(EXAMPLE_THETAS[0])
    args = (C, np.array([[3.0, -3.0]]), np.zeros((1, 2)), np.zeros((1, 4, 4)), np.zeros((1, 4)),
            np.zeros((1, 4, 4)), np.zeros((1, 4)), np.zeros((1, 5)), gains, plant.regression_matrix)
    free = follower_control(*args)
    clipped = follower_control(*args, torque_limit=1.0)
    assert np.abs(free.tau).max() > 1.0
    np.testing.assert_array_equal(clipped.tau, np.clip(free.tau, -1, 1))
