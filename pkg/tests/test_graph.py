from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elconsensus.errors import DimensionError, ScheduleExhaustedError
from elconsensus.graph import (
    SwitchingNetwork,
    SwitchingSignal,
    WeightedDigraph,
    check_jointly_connected,
    evaluate_signal,
    h_matrix,
    is_reachable,
    laplacian,
    leader_reaches_all,
    reachable_set,
    union,
)


@st.composite
def digraphs(draw, min_nodes=1, max_nodes=6):
    n = draw(st.integers(min_nodes, max_nodes))
    mask = draw(st.lists(st.booleans(), min_size=n * n, max_size=n * n))
    w = np.array(mask, dtype=float).reshape(n, n)
    np.fill_diagonal(w, 0.0)
    return WeightedDigraph(w)


def path_exists(g: WeightedDigraph, source: int, target: int) -> bool:
    """Enumerate every simple path explicitly."""
    if source == target:
        return True
    others = [k for k in range(g.num_nodes) if k not in (source, target)]
    for length in range(len(others) + 1):
        for mid in itertools.permutations(others, length):
            nodes = (source, *mid, target)
            if all(g.weights[b, a] > 0 for a, b in zip(nodes, nodes[1:])):
                return True
    return False


def test_edge_orientation():
    g = WeightedDigraph.from_edges(3, [(0, 1, 2.0), (1, 2)])
    assert g.weights[1, 0] == 2.0
    assert g.weights[2, 1] == 1.0
    assert g.edges() == [(0, 1, 2.0), (1, 2, 1.0)]
    assert g.edge_set() == {(0, 1), (1, 2)}


def test_chain_laplacian_and_h():
    g = WeightedDigraph.from_edges(3, [(0, 1), (1, 2)])
    np.testing.assert_array_equal(laplacian(g, follower_only=True), [[0, 0], [-1, 1]])
    np.testing.assert_array_equal(h_matrix(g), [[1, 0], [-1, 1]])
    np.testing.assert_array_equal(laplacian(g).sum(axis=1), 0)


@pytest.mark.parametrize(
    "weights, exc",
    [
        ([[0, 1, 0], [0, 0, 0]], DimensionError),
        ([[0, -1], [0, 0]], ValueError),
        ([[1, 0], [0, 0]], ValueError),
        ([[0, np.nan], [0, 0]], ValueError),
    ],
)
def test_invalid_weights(weights, exc):
    with pytest.raises(exc):
        WeightedDigraph(np.array(weights, dtype=float))


def test_weights_are_read_only():
    g = WeightedDigraph.empty(3)
    with pytest.raises(ValueError):
        g.weights[0, 1] = 1.0


def test_from_edges_rejects_bad_node():
    with pytest.raises(IndexError):
        WeightedDigraph.from_edges(2, [(0, 5)])


@settings(max_examples=500, deadline=None)
@given(digraphs(), st.data())
def test_reachability_matches_path_enumeration(g, data):
    s = data.draw(st.integers(0, g.num_nodes - 1))
    t = data.draw(st.integers(0, g.num_nodes - 1))
    assert is_reachable(g, s, t) == path_exists(g, s, t)


def test_reachable_set_chain():
    g = WeightedDigraph.from_edges(4, [(0, 1), (1, 2)])
    assert reachable_set(g, 0) == {0, 1, 2}
    assert reachable_set(g, 2) == {2}
    assert not leader_reaches_all(g)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5).flatmap(lambda n: st.tuples(*(digraphs(n, n) for _ in range(3)))))
def test_union_algebra(gs):
    a, b, c = gs
    assert union([a, b]) == union([b, a])
    assert union([union([a, b]), c]) == union([a, union([b, c])])
    assert union([a, a]) == a
    assert union([a, b]).edge_set() == a.edge_set() | b.edge_set()


def test_union_size_mismatch():
    with pytest.raises(DimensionError):
        union([WeightedDigraph.empty(2), WeightedDigraph.empty(3)])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0.1, 3.0), st.integers(1, 3)), min_size=1, max_size=5), st.integers(0, 4))
def test_signal_right_continuous_at_switches(pieces, cycle):
    sig = SwitchingSignal(tuple(pieces), dwell_time=0.1)
    horizon = (cycle + 1) * sig.period
    for t0, t1, p in sig.iter_pieces():
        if t0 >= horizon:
            break
        assert evaluate_signal(sig, t0) == p
        assert evaluate_signal(sig, 0.5 * (t0 + t1)) == p


def test_signal_non_repeating_exhausts():
    sig = SwitchingSignal(((1.0, 1), (1.0, 2)), repeat=False)
    assert evaluate_signal(sig, 1.999) == 2
    with pytest.raises(ScheduleExhaustedError):
        evaluate_signal(sig, 2.5)
    with pytest.raises(ValueError):
        evaluate_signal(sig, -1.0)


def test_dwell_time_enforced():
    with pytest.raises(ValueError):
        SwitchingSignal(((0.1, 1), (1.0, 2)), dwell_time=0.5)


def test_switching_instants():
    sig = SwitchingSignal(((0.5, 1), (0.5, 2)))
    assert sig.switching_instants(2.0) == [0.0, 0.5, 1.0, 1.5, 2.0]


def test_network_rejects_unknown_index():
    with pytest.raises(ValueError):
        SwitchingNetwork((WeightedDigraph.empty(2),), SwitchingSignal(((1.0, 2),)))


@pytest.mark.parametrize("eps, passed", [(2.0, True), (2.5, True), (1.9, False), (0.5, False)])
def test_builtin_joint_connectivity(builtin, eps, passed):
    rep = check_jointly_connected(builtin.network, 60.0, eps)
    assert rep.passed is passed
    if not passed:
        assert rep.failing_window == (0.0, eps)
        assert "window" in rep.summary()


def test_empty_network_not_connected():
    net = SwitchingNetwork((WeightedDigraph.empty(5),), SwitchingSignal.constant())
    assert not check_jointly_connected(net, 10.0, 2.0).passed


def test_connected_single_graph_windows():
    g = WeightedDigraph.from_edges(3, [(0, 1), (0, 2)])
    net = SwitchingNetwork((g,), SwitchingSignal.constant(duration=1.0))
    rep = check_jointly_connected(net, 5.0, 1.0)
    assert rep.passed
    assert len(rep.windows) == 5
