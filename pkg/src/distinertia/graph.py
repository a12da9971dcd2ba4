"""Time-varying undirected communication graph between control areas."""

from __future__ import annotations

import bisect
import threading
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigurationError


def _edge(a: int, b: int) -> tuple[int, int]:
    a, b = int(a), int(b)
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class CommGraph:
    """Nodes 1..n and a right-continuous schedule of edge sets.

    ``schedule`` is a tuple of ``(t_switch, edges)`` with strictly increasing
    switch times; ``edges`` is a sorted tuple of ``(i, k)`` pairs, ``i < k``.
    """

    n: int
    schedule: tuple

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("graph needs at least one node")
        sched = []
        last = -np.inf
        for t, edges in self.schedule:
            t = float(t)
            if not t > last:
                raise ConfigurationError("schedule times must be strictly increasing")
            last = t
            norm = set()
            for a, b in edges:
                if a == b:
                    raise ConfigurationError(f"self-loop on node {a}")
                if not (1 <= a <= self.n and 1 <= b <= self.n):
                    raise ConfigurationError(f"edge ({a}, {b}) refers to unknown node")
                e = _edge(a, b)
                if e in norm:
                    raise ConfigurationError(f"duplicate edge {e}")
                norm.add(e)
            sched.append((t, tuple(sorted(norm))))
        if not sched:
            raise ConfigurationError("empty schedule")
        object.__setattr__(self, "schedule", tuple(sched))
        object.__setattr__(self, "_times", [t for t, _ in sched])

    @classmethod
    def static(cls, n: int, edges: Iterable, t0: float = 0.0) -> "CommGraph":
        return cls(n, ((t0, tuple(edges)),))

    @classmethod
    def complete(cls, n: int, t0: float = 0.0) -> "CommGraph":
        return cls.static(n, [(i, k) for i in range(1, n + 1) for k in range(i + 1, n + 1)], t0)

    @property
    def start(self) -> float:
        return self.schedule[0][0]

    @property
    def switch_times(self) -> list[float]:
        return list(self._times)

    def edges_at(self, t: float) -> tuple:
        i = bisect.bisect_right(self._times, t) - 1
        if i < 0:
            raise ConfigurationError(f"t={t} precedes the schedule start {self.start}")
        return self.schedule[i][1]

    def n_edges(self, t: float) -> int:
        return len(self.edges_at(t))


@dataclass(frozen=True)
class GraphMatrices:
    D: np.ndarray
    L: np.ndarray


def incidence(n: int, edges) -> np.ndarray:
    """Oriented incidence matrix; the lower-index node is each edge's source."""
    D = np.zeros((n, len(edges)))
    for l, (a, b) in enumerate(edges):
        D[a - 1, l] = 1.0
        D[b - 1, l] = -1.0
    return D


def incidence_and_laplacian(graph: CommGraph, t: float) -> GraphMatrices:
    D = incidence(graph.n, graph.edges_at(t))
    return GraphMatrices(D, D @ D.T)


def neighbors(graph: CommGraph, j: int, t: float) -> set[int]:
    if not 1 <= j <= graph.n:
        raise IndexError(f"node {j} outside 1..{graph.n}")
    out = set()
    for a, b in graph.edges_at(t):
        if a == j:
            out.add(b)
        elif b == j:
            out.add(a)
    return out


@dataclass(frozen=True)
class ConnectivityReport:
    window: float
    eigenvalues: np.ndarray
    lambda2_lower: float
    connected_on_average: bool
    laplacian_norm_bound: float


def integrated_laplacian(graph: CommGraph, t0: float, t1: float) -> np.ndarray:
    """Exact integral of the piecewise-constant Laplacian over [t0, t1]."""
    cuts = [t0] + [s for s in graph.switch_times if t0 < s < t1] + [t1]
    acc = np.zeros((graph.n, graph.n))
    for a, b in zip(cuts[:-1], cuts[1:]):
        acc += (b - a) * incidence_and_laplacian(graph, a).L
    return acc


def connectivity_report(graph: CommGraph, t0: float, t1: float,
                        rel_tol: float = 1e-9) -> ConnectivityReport:
    """Connected-on-average check over the window [t0, t1].

    An eigenvalue of the integrated Laplacian counts as positive when it
    exceeds ``rel_tol * T``.
    """
    T = t1 - t0
    if not T > 0:
        raise ValueError("window length must be positive")
    if t0 < graph.start:
        raise ValueError(f"window starts at {t0} before the schedule start {graph.start}")
    ev = np.linalg.eigvalsh(integrated_laplacian(graph, t0, t1))
    lam2 = float(ev[1]) if graph.n > 1 else 0.0
    cuts = [t0] + [s for s in graph.switch_times if t0 < s < t1]
    r3 = max(np.linalg.norm(incidence_and_laplacian(graph, s).L, 2) for s in cuts)
    connected = graph.n == 1 or lam2 > rel_tol * T
    return ConnectivityReport(T, ev, lam2, bool(connected), float(r3))


def parse_edges(text: str) -> tuple:
    """``"1-2, 1-3"`` -> ((1, 2), (1, 3)); empty text or ``none`` is no edges."""
    text = text.strip()
    if not text or text.lower() == "none":
        return ()
    out = []
    for tok in text.replace(",", " ").split():
        a, b = tok.split("-")
        out.append((int(a), int(b)))
    return tuple(out)


class Mailbox:
    """In-process estimate exchange over the active edges.

    Each area posts its estimate once per round; ``collect(j)`` returns the
    estimates of ``j``'s current neighbours that are due this round, in
    ascending sender order. With ``delay`` rounds the value received is the
    one posted ``delay`` rounds earlier (none while the history is short).
    """

    def __init__(self, graph: CommGraph, delay: int = 0):
        if delay < 0:
            raise ConfigurationError("delay must be nonnegative")
        self.graph = graph
        self.delay = delay
        self._lock = threading.Lock()
        self._posted: dict[int, dict[int, np.ndarray]] = defaultdict(dict)
        self.round = 0
        self.t = graph.start

    def begin(self, round_index: int, t: float) -> None:
        self.round = round_index
        self.t = t
        with self._lock:
            for r in [r for r in self._posted if r < round_index - self.delay]:
                del self._posted[r]

    def post(self, sender: int, estimate: np.ndarray) -> None:
        with self._lock:
            self._posted[self.round][sender] = np.array(estimate, dtype=float)

    def collect(self, j: int) -> list[tuple[int, np.ndarray]]:
        src = self._posted.get(self.round - self.delay, {})
        return [(k, src[k]) for k in sorted(neighbors(self.graph, j, self.t)) if k in src]
