"""Discrete-event network: topology, link delays and the event queue."""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import SimpleNamespace

import numpy as np

DEFAULT_BANDWIDTH = 100_000.0  # bits per second per link


class TopologyError(Exception):
    pass


class HistogramFormatError(ValueError):
    pass


@dataclass
class LatencyHistogram:
    """Discrete latency distribution: ``buckets`` is a list of
    ``(latency_seconds, probability_mass)``."""

    buckets: list

    def __post_init__(self):
        if not self.buckets:
            raise HistogramFormatError("empty histogram")
        lat = np.array([b[0] for b in self.buckets], dtype=float)
        mass = np.array([b[1] for b in self.buckets], dtype=float)
        if (lat < 0).any() or (mass < 0).any():
            raise HistogramFormatError("latencies and masses must be non-negative")
        if mass.sum() <= 0:
            raise HistogramFormatError("total mass must be positive")
        # files carry rounded masses; renormalise
        self._lat = lat
        self._p = mass / mass.sum()

    @property
    def latencies(self):
        return self._lat

    @property
    def probabilities(self):
        return self._p

    def sample(self, rng, size=None):
        return rng.choice(self._lat, size=size, p=self._p)

    def median(self) -> float:
        order = np.argsort(self._lat)
        cdf = np.cumsum(self._p[order])
        return float(self._lat[order][np.searchsorted(cdf, 0.5)])

    @classmethod
    def from_file(cls, path) -> "LatencyHistogram":
        return cls.parse(Path(path).read_text(), source=str(path))

    @classmethod
    def parse(cls, text: str, source: str = "<string>") -> "LatencyHistogram":
        buckets = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise HistogramFormatError(f"{source}:{lineno}: expected 'latency probability'")
            try:
                buckets.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise HistogramFormatError(f"{source}:{lineno}: not a number") from None
        return cls(buckets)

    def dumps(self) -> str:
        lines = ["# latency_seconds probability"]
        lines += [f"{float(l)!r} {float(p)!r}" for l, p in zip(self._lat, self._p)]
        return "\n".join(lines) + "\n"

    @classmethod
    def default(cls) -> "LatencyHistogram":
        text = resources.files("ngsim.data").joinpath("latency_histogram.txt").read_text()
        return cls.parse(text, source="latency_histogram.txt")


@dataclass
class Topology:
    n: int
    adjacency: list  # list of sorted neighbour lists
    pair_latency: dict  # (min(u,v), max(u,v)) -> seconds
    link_bandwidth: float = DEFAULT_BANDWIDTH

    def latency(self, u: int, v: int) -> float:
        return self.pair_latency[(u, v) if u < v else (v, u)]

    def edges(self):
        return sorted(self.pair_latency)

    def degree(self, u: int) -> int:
        return len(self.adjacency[u])

    def is_connected(self) -> bool:
        seen = {0}
        todo = deque([0])
        while todo:
            u = todo.popleft()
            for v in self.adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
        return len(seen) == self.n

    def dumps(self) -> str:
        lines = [f"# n={self.n} bandwidth_bits_per_sec={float(self.link_bandwidth)!r}",
                 "# u v latency_seconds"]
        lines += [f"{u} {v} {float(self.pair_latency[(u, v)])!r}" for u, v in self.edges()]
        return "\n".join(lines) + "\n"


def generate_topology(n: int, min_degree: int = 5, histogram: LatencyHistogram | None = None,
                      bandwidth: float = DEFAULT_BANDWIDTH, seed=0,
                      max_attempts: int = 100) -> Topology:
    """Random graph where every node links to at least ``min_degree`` others
    chosen uniformly at random; edge latencies are i.i.d. histogram draws."""
    if n <= min_degree:
        raise TopologyError(f"need n > min_degree (n={n}, min_degree={min_degree})")
    histogram = histogram or LatencyHistogram.default()
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        adj = [set() for _ in range(n)]
        for u in range(n):
            while len(adj[u]) < min_degree:
                v = int(rng.integers(n))
                if v != u and v not in adj[u]:
                    adj[u].add(v)
                    adj[v].add(u)
        edges = sorted((u, v) for u in range(n) for v in adj[u] if u < v)
        lat = histogram.sample(rng, size=len(edges))
        topo = Topology(n, [sorted(a) for a in adj],
                        {e: float(l) for e, l in zip(edges, lat)}, float(bandwidth))
        if topo.is_connected():
            return topo
    raise TopologyError(f"no connected topology after {max_attempts} attempts")


def line_topology(latencies, bandwidth: float = DEFAULT_BANDWIDTH) -> Topology:
    n = len(latencies) + 1
    adj = [[] for _ in range(n)]
    pl = {}
    for i, l in enumerate(latencies):
        adj[i].append(i + 1)
        adj[i + 1].append(i)
        pl[(i, i + 1)] = float(l)
    return Topology(n, adj, pl, float(bandwidth))


def transfer_delay(size_bytes: int, topology: Topology, u: int, v: int,
                   verify_per_byte: float = 0.0) -> float:
    """Latency plus serialisation at link bandwidth plus receiver verification."""
    return (topology.latency(u, v) + 8.0 * size_bytes / topology.link_bandwidth
            + verify_per_byte * size_bytes)


class EventQueue:
    """Min-queue of ``(time, seq, kind, payload)``; FIFO among equal times."""

    def __init__(self):
        self._heap = []
        self._seq = itertools.count()
        self.now = 0.0

    def push(self, time: float, kind: str, payload) -> None:
        if time < self.now:
            raise ValueError(f"event at {time} is before current time {self.now}")
        heapq.heappush(self._heap, (time, next(self._seq), kind, payload))

    def pop(self):
        ev = heapq.heappop(self._heap)
        self.now = ev[0]
        return ev

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


class Network:
    """Gossip flooding over a topology.

    ``send`` schedules one ``arrive`` event per neighbour except the sender.
    In queued mode a directed link carries one transfer at a time.
    """

    def __init__(self, topology: Topology, queue: EventQueue,
                 verify_per_byte: float = 0.0, queued_links: bool = False):
        self.topology = topology
        self.queue = queue
        self.verify_per_byte = verify_per_byte
        self.queued_links = queued_links
        self._busy: dict = {}
        self.sent = 0

    def send(self, origin: int, block, now: float, exclude=None) -> None:
        for v in self.topology.adjacency[origin]:
            if v == exclude:
                continue
            self.queue.push(self.arrival_time(origin, v, block.size_bytes, now),
                            "arrive", (origin, v, block))
            self.sent += 1

    def send_to(self, origin: int, targets, block, now: float) -> None:
        for v in targets:
            self.queue.push(self.arrival_time(origin, v, block.size_bytes, now),
                            "arrive", (origin, v, block))
            self.sent += 1

    def arrival_time(self, u: int, v: int, size_bytes: int, now: float) -> float:
        topo = self.topology
        serial = 8.0 * size_bytes / topo.link_bandwidth
        start = now
        if self.queued_links:
            start = max(now, self._busy.get((u, v), now))
            self._busy[(u, v)] = start + serial
        return start + serial + topo.latency(u, v) + self.verify_per_byte * size_bytes


def gossip(topology: Topology, origin: int, size_bytes: int,
           verify_per_byte: float = 0.0) -> dict:
    """Flood one block from ``origin`` and return first-arrival time per node
    (relative to generation).  Standalone driver over :class:`EventQueue`."""
    q = EventQueue()
    net = Network(topology, q, verify_per_byte)

    msg = SimpleNamespace(size_bytes=size_bytes)
    arrival = {origin: 0.0}
    net.send(origin, msg, 0.0)
    while q:
        t, _, _, (u, v, m) = q.pop()
        if v in arrival:
            continue
        arrival[v] = t
        net.send(v, m, t, exclude=u)
    return arrival
