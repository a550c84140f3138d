import heapq

import numpy as np
import pytest

from ngsim.network import (EventQueue, HistogramFormatError, LatencyHistogram, Network,
                           TopologyError, generate_topology, gossip, line_topology,
                           transfer_delay)


def test_forced_complete_graph():
    t = generate_topology(6, 5, seed=1)
    assert all(t.degree(u) == 5 for u in range(6))


def test_topology_deterministic_connected_min_degree():
    a = generate_topology(100, 5, seed=7)
    b = generate_topology(100, 5, seed=7)
    assert a.adjacency == b.adjacency and a.pair_latency == b.pair_latency
    assert a.is_connected()
    assert min(a.degree(u) for u in range(100)) >= 5
    assert all(l > 0 for l in a.pair_latency.values())
    assert all(v in a.adjacency[u] for u in range(100) for v in a.adjacency[u]
               if u in a.adjacency[v])


def test_topology_rejects_small_n():
    with pytest.raises(TopologyError):
        generate_topology(5, 5)


def test_transfer_delay_terms():
    t = line_topology([0.1])
    assert transfer_delay(0, t, 0, 1) == 0.1
    ser = transfer_delay(1_000_000, t, 0, 1) - 0.1
    assert ser == pytest.approx(80.0)
    assert transfer_delay(2_000_000, t, 0, 1) - 0.1 == pytest.approx(2 * ser)
    assert transfer_delay(100, t, 0, 1, verify_per_byte=0.01) == pytest.approx(0.1 + 0.008 + 1.0)


def test_line_gossip_sums_hops():
    t = line_topology([0.2, 0.3])
    arr = gossip(t, 0, 1000)
    assert arr[2] == pytest.approx(transfer_delay(1000, t, 0, 1) + transfer_delay(1000, t, 1, 2))


def _dijkstra(t, src, size):
    dist = {src: 0.0}
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v in t.adjacency[u]:
            nd = d + transfer_delay(size, t, u, v)
            if nd < dist.get(v, float("inf")):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def test_gossip_matches_shortest_paths():
    t = generate_topology(100, 5, seed=3)
    arr = gossip(t, 17, 20_000)
    ref = _dijkstra(t, 17, 20_000)
    assert set(arr) == set(range(100))
    for v in range(100):
        assert arr[v] == pytest.approx(ref[v], abs=1e-9)


def test_queue_is_time_then_fifo():
    q = EventQueue()
    q.push(2.0, "x", "late")
    q.push(1.0, "x", "a")
    q.push(1.0, "x", "b")
    assert [q.pop()[3] for _ in range(3)] == ["a", "b", "late"]
    with pytest.raises(ValueError):
        q.push(0.5, "x", None)


def test_causal_delivery_and_queued_links():
    t = line_topology([0.1])
    q = EventQueue()
    net = Network(t, q, queued_links=True)

    class Msg:
        size_bytes = 1250  # 0.1 s at 100 kbit/s
    net.send(0, Msg, 0.0)
    net.send(0, Msg, 0.0)
    times = [q.pop()[0] for _ in range(2)]
    assert times == pytest.approx([0.2, 0.3])


def test_histogram_roundtrip_and_errors(tmp_path):
    h = LatencyHistogram.default()
    assert h.probabilities.sum() == pytest.approx(1.0)
    assert 0.07 <= h.median() <= 0.13
    p = tmp_path / "h.txt"
    p.write_text(h.dumps())
    again = LatencyHistogram.from_file(p)
    assert np.allclose(again.latencies, h.latencies)
    with pytest.raises(HistogramFormatError):
        LatencyHistogram.parse("0.1 0.5 7\n")
    with pytest.raises(HistogramFormatError):
        LatencyHistogram.parse("# nothing\n")
