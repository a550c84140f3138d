"""Brute-force reference implementations of the metrics.

These share no code with :mod:`ngsim.metrics` beyond the log types.  They are
exponential or quadratic and meant for logs of a few hundred records.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter

from .eventlog import GENERATE, SWITCH, EventLog


def _blocks(log: EventLog) -> dict:
    out = {0: (None, "G", -1, 0.0, 0)}
    for r in log.records:
        if r.action == GENERATE and r.block not in out:
            out[r.block] = (r.parent, r.kind, r.miner, r.time, r.tx_count)
    return out


def _chain(blocks, b) -> list:
    out = []
    while b is not None:
        out.append(b)
        b = blocks[b][0]
    return out[::-1]


def _weight(blocks, b) -> int:
    return sum(blocks[x][1] in ("B", "K") for x in _chain(blocks, b))


def _tips(log: EventLog, blocks, upto: float = math.inf, n_records=None) -> dict:
    tips = {n: 0 for n in range(log.n_nodes)}
    for i, r in enumerate(log.records):
        if r.time > upto or (n_records is not None and i >= n_records):
            break
        if r.action == SWITCH or blocks[r.block][0] == tips[r.node]:
            tips[r.node] = r.block
    return tips


def main_chain(log: EventLog) -> list:
    blocks = _blocks(log)
    tips = _tips(log, blocks)
    counts = Counter(tips.values())
    order = list(blocks)
    best = max(counts, key=lambda b: (counts[b], _weight(blocks, b), -order.index(b)))
    return _chain(blocks, best)


def _nearest_rank(values, q):
    vals = sorted(values)
    if not vals:
        return math.nan
    return vals[max(1, math.ceil(round(q * len(vals), 9))) - 1]


def point_consensus_delay(log: EventLog, t: float, epsilon: float) -> float:
    """Try every candidate look-back in increasing order and every subset of
    the required size."""
    blocks = _blocks(log)
    n = log.n_nodes
    k = max(1, math.ceil(round(epsilon * n, 9)))
    tips = _tips(log, blocks, upto=t)
    chains = {node: _chain(blocks, tip) for node, tip in tips.items()}
    # candidate cutoffs: t itself and every earlier creation time, latest first
    cuts = sorted({t} | {blocks[b][3] for b in blocks if blocks[b][3] < t}, reverse=True)
    for cut in cuts:
        prefixes = {node: tuple(b for b in ch if blocks[b][3] < cut)
                    for node, ch in chains.items()}
        for group in itertools.combinations(range(n), k):
            if len({prefixes[x] for x in group}) == 1:
                return t - cut
    return t


def sample_times(log: EventLog, start: float = 0.0) -> list:
    end = max((r.time for r in log.records), default=0.0)
    times = [r.time for r in log.records if start <= r.time <= end]
    i = 0
    while start + i <= end:
        times.append(start + i)
        i += 1
    return sorted(set(times))


def consensus_delay(log: EventLog, epsilon: float, delta: float, start: float = 0.0) -> float:
    return _nearest_rank([point_consensus_delay(log, s, epsilon)
                          for s in sample_times(log, start)], delta)


def mining_power_utilization(log: EventLog, start: float = 0.0) -> float:
    blocks = _blocks(log)
    main = set(main_chain(log))
    pow_blocks = [b for b, v in blocks.items() if v[1] in ("B", "K") and v[3] >= start]
    if not pow_blocks:
        return math.nan
    return len([b for b in pow_blocks if b in main]) / len(pow_blocks)


def fairness(log: EventLog, powers, start: float = 0.0, basis: str = "power") -> float:
    blocks = _blocks(log)
    top = max(range(len(powers)), key=lambda i: (powers[i], -i))
    mc = [b for b in main_chain(log) if blocks[b][1] in ("B", "K") and blocks[b][3] >= start]
    if not mc:
        return math.nan
    num = len([b for b in mc if blocks[b][2] != top]) / len(mc)
    if basis == "power":
        den = 1.0 - powers[top] / math.fsum(powers)
    else:
        gen = [b for b, v in blocks.items() if v[1] in ("B", "K") and v[3] >= start]
        den = len([b for b in gen if blocks[b][2] != top]) / len(gen)
    return num / den


def prune_samples(log: EventLog, start: float = 0.0) -> list:
    blocks = _blocks(log)
    mc = main_chain(log)
    main = set(mc)
    roots = [b for b in blocks if b not in main and blocks[b][0] in main]
    out = []
    for node in range(log.n_nodes):
        recs = [(i, r) for i, r in enumerate(log.records)
                if r.node == node and r.action != SWITCH]
        for root in roots:
            branch = {b for b in blocks if root in _chain(blocks, b)}
            seen = [(i, r) for i, r in recs if r.block in branch]
            if not seen:
                continue
            first_i, first = seen[0]
            if first.time < start:
                continue
            w = max(_weight(blocks, r.block) for _, r in seen)
            heavier = [(i, r) for i, r in recs if r.block in main and _weight(blocks, r.block) > w]
            if not heavier or heavier[0][0] < first_i:
                continue
            out.append(heavier[0][1].time - first.time)
    return out


def time_to_prune(log: EventLog, delta: float, start: float = 0.0) -> float:
    return _nearest_rank(prune_samples(log, start), delta)


def win_samples(log: EventLog, start: float = 0.0) -> list:
    blocks = _blocks(log)
    out = []
    for b in main_chain(log)[1:]:
        tb = blocks[b][3]
        if tb < start:
            continue
        others = [v[3] for x, v in blocks.items()
                  if b not in _chain(blocks, x) and v[2] != blocks[b][2]]
        out.append(max(0.0, max(others, default=-math.inf) - tb))
    return out


def time_to_win(log: EventLog, delta: float, start: float = 0.0) -> float:
    return _nearest_rank(win_samples(log, start), delta)


def throughput(log: EventLog, start: float = 0.0) -> float:
    blocks = _blocks(log)
    end = max(v[3] for v in blocks.values())
    if end <= start:
        return math.nan
    return sum(blocks[b][4] for b in main_chain(log) if start <= blocks[b][3] <= end) / (end - start)
