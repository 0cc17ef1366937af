"""Weighted digraphs over the leader+followers node set and switching signals.

Node 0 is the leader; nodes 1..N are followers. ``weights[i, j] > 0`` means
node ``i`` receives information from node ``j`` (the edge ``(j, i)``).
"""

from __future__ import annotations

import bisect
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DimensionError, ScheduleExhaustedError


@dataclass(frozen=True, eq=False)
class WeightedDigraph:
    """Immutable weighted digraph stored as its adjacency matrix.

    Parameters:
        weights: (N+1, N+1) nonnegative matrix; entry ``[i, j]`` weights edge ``(j, i)``.
    """

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
            raise DimensionError(f"adjacency must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("adjacency weights must be finite")
        if np.any(w < 0):
            raise ValueError("adjacency weights must be nonnegative")
        if np.any(np.diag(w) != 0):
            raise ValueError("adjacency diagonal must be zero (no self-loops)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightedDigraph):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self) -> int:
        return hash((self.weights.shape, self.weights.tobytes()))

    @property
    def num_nodes(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_edges(
        cls, num_nodes: int, edges: Iterable[Sequence[float]]
    ) -> "WeightedDigraph":
        """Build from ``(from, to, weight)`` triples."""
        w = np.zeros((num_nodes, num_nodes))
        for edge in edges:
            if len(edge) == 2:
                src, dst, weight = edge[0], edge[1], 1.0
            elif len(edge) == 3:
                src, dst, weight = edge
            else:
                raise ValueError(f"edge must be (from, to[, weight]), got {edge!r}")
            src, dst = _node_index(src, num_nodes), _node_index(dst, num_nodes)
            w[dst, src] = float(weight)
        return cls(w)

    @classmethod
    def empty(cls, num_nodes: int) -> "WeightedDigraph":
        return cls(np.zeros((num_nodes, num_nodes)))

    def edges(self) -> list[tuple[int, int, float]]:
        """Edge list as ``(from, to, weight)`` triples, sorted by (from, to)."""
        dst, src = np.nonzero(self.weights)
        out = [(int(j), int(i), float(self.weights[i, j])) for i, j in zip(dst, src)]
        return sorted(out)

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset((j, i) for j, i, _ in self.edges())


def _node_index(node: float, num_nodes: int) -> int:
    if int(node) != node or not 0 <= int(node) < num_nodes:
        raise IndexError(f"node {node!r} out of range for {num_nodes} nodes")
    return int(node)


@dataclass(frozen=True)
class SwitchingSignal:
    """Piecewise-constant signal given as an ordered list of pieces.

    ``pieces`` holds ``(duration, graph_index)`` with 1-based graph indices.
    When ``repeat`` is set the piece list is replayed periodically.
    """

    pieces: tuple[tuple[float, int], ...]
    repeat: bool = True
    dwell_time: float | None = None
    _ends: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pieces = tuple((float(d), int(p)) for d, p in self.pieces)
        if not pieces:
            raise ValueError("switching signal needs at least one piece")
        dwell = self.dwell_time
        if dwell is None:
            dwell = min(d for d, _ in pieces)
        dwell = float(dwell)
        if not dwell > 0:
            raise ValueError("dwell time must be positive")
        for d, p in pieces:
            if not (d > 0 and math.isfinite(d)):
                raise ValueError(f"piece duration must be positive and finite, got {d}")
            if d < dwell:
                raise ValueError(f"piece duration {d} is shorter than dwell time {dwell}")
            if p < 1:
                raise ValueError(f"graph indices are 1-based, got {p}")
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "dwell_time", dwell)
        object.__setattr__(self, "_ends", tuple(np.cumsum([d for d, _ in pieces])))

    @property
    def period(self) -> float:
        return self._ends[-1]

    @classmethod
    def constant(cls, index: int = 1, duration: float = 1.0) -> "SwitchingSignal":
        return cls(((duration, index),), repeat=True)

    def iter_pieces(self, start: float = 0.0) -> Iterator[tuple[float, float, int]]:
        """Yield ``(t_start, t_end, graph_index)`` for every piece overlapping ``[start, inf)``.

        Instants are computed as ``cycle * period + offset`` so they do not
        accumulate rounding error over many periods.
        """
        starts = (0.0,) + self._ends[:-1]
        cycle = 0
        while True:
            base = cycle * self.period
            for t0, t1, (_, p) in zip(starts, self._ends, self.pieces):
                if base + t1 > start:
                    yield base + t0, base + t1, p
            if not self.repeat:
                return
            cycle += 1

    def switching_instants(self, horizon: float) -> list[float]:
        """All switching instants in ``[0, horizon]``, starting with 0."""
        out = []
        for t0, _, _ in self.iter_pieces():
            if t0 > horizon:
                break
            out.append(t0)
        return out


@dataclass(frozen=True)
class SwitchingNetwork:
    graphs: tuple[WeightedDigraph, ...]
    signal: SwitchingSignal

    def __post_init__(self) -> None:
        graphs = tuple(self.graphs)
        if not graphs:
            raise ValueError("switching network needs at least one graph")
        sizes = {g.num_nodes for g in graphs}
        if len(sizes) != 1:
            raise DimensionError(f"graphs disagree on node count: {sorted(sizes)}")
        for _, p in self.signal.pieces:
            if p > len(graphs):
                raise ValueError(f"signal references graph {p} but only {len(graphs)} exist")
        object.__setattr__(self, "graphs", graphs)

    @property
    def num_nodes(self) -> int:
        return self.graphs[0].num_nodes

    @property
    def num_followers(self) -> int:
        return self.num_nodes - 1

    def graph(self, index: int) -> WeightedDigraph:
        """Graph for a 1-based index."""
        return self.graphs[index - 1]

    def graph_at(self, t: float) -> WeightedDigraph:
        return self.graph(evaluate_signal(self.signal, t))


def evaluate_signal(signal: SwitchingSignal, t: float) -> int:
    """Active 1-based graph index at time ``t`` (right-continuous)."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    period = signal.period
    if t >= period and not signal.repeat:
        raise ScheduleExhaustedError(f"t={t} is past the schedule end {period}")
    # Compare against instants built exactly as iter_pieces builds them.
    base = math.floor(t / period) * period if signal.repeat else 0.0
    k = bisect.bisect_right([base + e for e in signal._ends], t)
    if k == len(signal.pieces):
        return signal.pieces[0][1]
    return signal.pieces[k][1]


def laplacian(g: WeightedDigraph, follower_only: bool = False) -> np.ndarray:
    """Graph Laplacian ``diag(row sums) - A``.

    With ``follower_only`` the leader row and column are dropped first, giving
    the N x N Laplacian of the follower subgraph.
    """
    a = g.weights[1:, 1:] if follower_only else g.weights
    return np.diag(a.sum(axis=1)) - a


def h_matrix(g: WeightedDigraph) -> np.ndarray:
    """Follower Laplacian plus the diagonal of leader-edge weights."""
    return laplacian(g, follower_only=True) + np.diag(g.weights[1:, 0])


def union(graphs: Sequence[WeightedDigraph]) -> WeightedDigraph:
    """Edge-set union; weights are the entrywise maximum."""
    if not graphs:
        raise ValueError("union of an empty collection is undefined")
    sizes = {g.num_nodes for g in graphs}
    if len(sizes) != 1:
        raise DimensionError(f"graphs disagree on node count: {sorted(sizes)}")
    return WeightedDigraph(np.maximum.reduce([g.weights for g in graphs]))


def reachable_set(g: WeightedDigraph, source: int) -> set[int]:
    source = _node_index(source, g.num_nodes)
    seen = {source}
    queue = deque([source])
    while queue:
        j = queue.popleft()
        for i in np.flatnonzero(g.weights[:, j] > 0):
            if int(i) not in seen:
                seen.add(int(i))
                queue.append(int(i))
    return seen


def is_reachable(g: WeightedDigraph, source: int, target: int) -> bool:
    """True iff a directed path leads from ``source`` to ``target``."""
    target = _node_index(target, g.num_nodes)
    return target in reachable_set(g, source)


def leader_reaches_all(g: WeightedDigraph) -> bool:
    return len(reachable_set(g, 0)) == g.num_nodes


@dataclass(frozen=True)
class ConnectivityReport:
    passed: bool
    epsilon: float
    horizon: float
    windows: tuple[tuple[float, float], ...]
    failing_window: tuple[float, float] | None = None

    def summary(self) -> str:
        if self.passed:
            return (
                f"PASS: jointly connected with eps={self.epsilon:g} over "
                f"[0, {self.horizon:g}] ({len(self.windows)} windows)"
            )
        a, b = self.failing_window
        return (
            f"FAIL: followers not all reachable from node 0 within window "
            f"[{a:g}, {b:g}) (eps={self.epsilon:g})"
        )


def check_jointly_connected(
    net: SwitchingNetwork, horizon: float, epsilon: float
) -> ConnectivityReport:
    """Check joint connectivity over ``[0, horizon]``.

    Windows start at switching instants and grow greedily piece by piece until
    the union graph lets node 0 reach every follower. A window may span at most
    ``epsilon`` seconds; a trailing window cut off by the horizon before that
    budget is spent is not counted as a failure.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    # Absorbs rounding in instants built from decimal durations.
    slack = 1e-9 * max(1.0, epsilon)
    windows: list[tuple[float, float]] = []
    pieces = net.signal.iter_pieces()
    start: float | None = None
    members: list[WeightedDigraph] = []
    for t0, t1, p in pieces:
        if start is None:
            if t0 >= horizon:
                break
            start, members = t0, []
        members.append(net.graph(p))
        if t1 - start > epsilon + slack:
            return ConnectivityReport(
                False, epsilon, horizon, tuple(windows), (start, start + epsilon)
            )
        if leader_reaches_all(union(members)):
            windows.append((start, t1))
            start = None
        elif t1 >= horizon:
            break
    return ConnectivityReport(True, epsilon, horizon, tuple(windows))
