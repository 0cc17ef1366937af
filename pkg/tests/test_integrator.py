from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elconsensus.errors import DivergenceError, ScheduleExhaustedError
from elconsensus.graph import SwitchingNetwork, SwitchingSignal, evaluate_signal
from elconsensus.integrator import (
    ClosedLoop,
    FullState,
    StateLayout,
    full_derivative,
    integrate,
    integrate_leader,
    layout_for,
)
from elconsensus.scenario import EXAMPLE_S, IntegratorConfig


def leader_error(h, horizon=20.0):
    t, v = integrate_leader(np.array(EXAMPLE_S, float), np.ones(4), h, horizon)
    exact = np.column_stack([1 + t, np.ones_like(t), np.cos(t) + np.sin(t), np.cos(t) - np.sin(t)])
    return np.abs(v - exact).max()


def short(sc, horizon=1.0, **kw):
    return replace(sc, integrator=replace(sc.integrator, horizon=horizon, **kw))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_layout_round_trip(N, n, m, p, seed):
    rng = np.random.default_rng(seed)
    layout = StateLayout(N, n, m, p)
    x = rng.normal(size=layout.size)
    fs = FullState.unflatten(x, layout)
    assert fs.S_est.shape == (N, m, m)
    np.testing.assert_array_equal(fs.flatten(), x)
    assert len(layout.labels()) == layout.size


def test_layout_order(builtin):
    layout = layout_for(builtin)
    labels = layout.labels()
    assert labels[:5] == ["v_0", "v_1", "v_2", "v_3", "q1_0"]
    assert labels.index("S1_01") == labels.index("S1_00") + 1
    assert labels[4 + layout.block] == "q2_0"
    assert labels[-1] == "thetahat4_4"


def test_views_broadcast(builtin, rng):
    layout = layout_for(builtin)
    xs = rng.normal(size=(7, layout.size))
    v, q, dq, S, eta, th = layout.views(xs)
    assert q.shape == (7, 4, 2) and S.shape == (7, 4, 4, 4) and th.shape == (7, 4, 5)
    np.testing.assert_array_equal(S[3, 2], FullState.unflatten(xs[3], layout).S_est[2])


def test_leader_rk4_accuracy():
    assert leader_error(1e-3) < 1e-8


def test_leader_rk4_order():
    # Coarse steps keep truncation error well above roundoff.
    ratio = leader_error(0.05) / leader_error(0.025)
    assert 12 <= ratio <= 20
    assert np.log2(ratio) >= 3.9


def test_leader_euler_is_first_order():
    t, v = integrate_leader(np.array(EXAMPLE_S, float), np.ones(4), 0.01, 2.0, method="euler")
    t2, v2 = integrate_leader(np.array(EXAMPLE_S, float), np.ones(4), 0.005, 2.0, method="euler")
    exact = np.array([3.0, 1.0, np.cos(2) + np.sin(2), np.cos(2) - np.sin(2)])
    ratio = np.abs(v[-1] - exact).max() / np.abs(v2[-1] - exact).max()
    assert 1.8 < ratio < 2.2


def test_zero_horizon(builtin):
    log = integrate(short(builtin, 0.0))
    assert len(log) == 1
    np.testing.assert_array_equal(log.states[0], FullState.initial(builtin).flatten())


def test_record_every_and_final_sample(builtin):
    log = integrate(short(builtin, 0.25, record_every=30))
    assert log.times[-1] == 0.25
    np.testing.assert_allclose(np.diff(log.times[:-1]), 0.03)
    assert np.all(np.diff(log.times) > 0)


def test_no_step_straddles_a_switch(builtin):
    # 0.5 s pieces are not a multiple of h, so every piece gets its own step.
    sc = short(builtin, 3.3, h=0.0013, record_every=1)
    log = integrate(sc)
    instants = set(sc.network.signal.switching_instants(3.3))
    assert instants <= set(log.times.tolist()) | {0.0}
    for t0, t1, p in log.segments:
        inside = log.times[(log.times > t0) & (log.times < t1)]
        assert all(evaluate_signal(sc.network.signal, t) == p for t in inside)
    steps = np.diff(log.times)
    assert steps.max() <= 0.0013 + 1e-15
    mids = 0.5 * (log.times[1:] + log.times[:-1])
    for a, b, mid in zip(log.times[:-1], log.times[1:], mids):
        assert evaluate_signal(sc.network.signal, a) == evaluate_signal(sc.network.signal, mid)


def test_graph_indices_follow_segments(builtin):
    log = integrate(short(builtin, 2.0, record_every=50))
    idx = log.graph_indices()
    assert idx[0] == 1 and idx[-1] == 4
    np.testing.assert_array_equal(log.switching_instants(), [0.5, 1.0, 1.5])


def test_determinism(builtin):
    a = integrate(short(builtin, 1.0))
    b = integrate(short(builtin, 1.0))
    assert a.states.tobytes() == b.states.tobytes()
    assert a.times.tobytes() == b.times.tobytes()


def test_fixed_point_of_error_system(builtin):
    S, C, v = builtin.leader.S, builtin.leader.C, builtin.leader.v0
    state = FullState(
        v.copy(), np.stack([C @ v] * 4), np.stack([C @ S @ v] * 4),
        np.stack([S] * 4), np.stack([v] * 4), builtin.true_thetas(),
    )
    d = full_derivative(state, 0.3, builtin)
    np.testing.assert_allclose(d.v, S @ v)
    np.testing.assert_array_equal(d.S_est, 0.0)
    np.testing.assert_allclose(d.eta, np.stack([S @ v] * 4), atol=1e-14)
    np.testing.assert_allclose(d.theta_hat, 0.0, atol=1e-12)
    np.testing.assert_allclose(d.dq, np.stack([C @ S @ S @ v] * 4), atol=1e-12)


def test_example_start_derivative_is_finite(builtin):
    loop = ClosedLoop(builtin)
    x = FullState.initial(builtin).flatten()
    w = builtin.network.graph(1).weights
    assert np.isfinite(loop.rates(x, w)).all()
    c = loop.terms(x, w).control
    q, dq = builtin.initial.q[0], builtin.initial.dq[0]
    p1 = builtin.plants[0]
    expected = p1.mass_matrix(q) @ c.ddq_r[0] + p1.coriolis_matrix(q, dq) @ c.dq_r[0] + p1.gravity_vector(q)
    np.testing.assert_allclose(c.Y[0] @ p1.theta, expected, atol=1e-12)


def test_divergence_reported(builtin):
    sc = replace(builtin, integrator=IntegratorConfig(h=0.05, method="euler", horizon=20.0))
    with pytest.raises(DivergenceError) as info:
        integrate(sc)
    assert 0 < info.value.t <= 20.0
    assert info.value.component in layout_for(sc).labels()


def test_schedule_exhaustion(builtin):
    sig = SwitchingSignal(builtin.network.signal.pieces, repeat=False)
    sc = short(builtin.with_network(SwitchingNetwork(builtin.network.graphs, sig)), 3.0)
    with pytest.raises(ScheduleExhaustedError):
        integrate(sc)


def test_step_refined_to_fit_piece(builtin):
    log = integrate(short(builtin, 0.5, h=0.0013, record_every=1))
    assert len(log) == 386
    np.testing.assert_allclose(np.diff(log.times), 0.5 / 385, rtol=1e-9)
