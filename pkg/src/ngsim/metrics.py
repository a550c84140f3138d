"""Consensus metrics computed from an event log.

All metrics are pure functions of the log.  Chain weight is the number of
proof-of-work blocks on the path from genesis, which is block height for
Bitcoin and key-block count for Bitcoin-NG.

A node's main chain over time is replayed from its records: a ``gen`` or
``recv`` of a block whose parent is the node's current tip advances the tip to
that block, and a ``switch`` record sets the tip explicitly.

Percentiles use the nearest-rank convention.
"""

from __future__ import annotations

import bisect
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, fields

from .chain import GENESIS_ID
from .eventlog import GENERATE, RECEIVE, SWITCH, EventLog

POW_KINDS = ("B", "K")
INF = math.inf


class DegeneratePower(ValueError):
    pass


def percentile(values, q: float) -> float:
    """Nearest-rank ``q``-percentile, ``0 < q <= 1``; NaN for no values."""
    if not 0 < q <= 1:
        raise ValueError("percentile must be in (0, 1]")
    vals = sorted(values)
    if not vals:
        return math.nan
    rank = max(1, math.ceil(round(q * len(vals), 9)))
    return vals[rank - 1]


def required_agreement(n_nodes: int, epsilon: float) -> int:
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must be in (0, 1]")
    return max(1, math.ceil(round(epsilon * n_nodes, 9)))


class LogView:
    """Block tree and per-node histories reconstructed from a log."""

    def __init__(self, log: EventLog):
        self.log = log
        self.n_nodes = log.n_nodes
        g = GENESIS_ID
        self.genesis = g
        self.parent = {g: None}
        self.kind = {g: "G"}
        self.miner = {g: -1}
        self.created = {g: 0.0}
        self.tx_count = {g: 0}
        self.weight = {g: 0}
        self.depth = {g: 0}
        self.order = [g]
        for r in log.records:
            if r.action == GENERATE and r.block not in self.parent:
                b = r.block
                self.parent[b] = r.parent
                self.kind[b] = r.kind
                self.miner[b] = r.miner
                self.created[b] = r.time
                self.tx_count[b] = r.tx_count
                self.weight[b] = self.weight[r.parent] + (r.kind in POW_KINDS)
                self.depth[b] = self.depth[r.parent] + 1
                self.order.append(b)
        self.end = max((r.time for r in log.records), default=0.0)
        self.last_generation = max((self.created[b] for b in self.order[1:]), default=0.0)
        self.final_tips = self._final_tips()
        self.main_tip = self._pick_main_tip()
        self.main_chain = self._path(self.main_tip)
        self.main_index = {b: i for i, b in enumerate(self.main_chain)}

    def _path(self, b) -> list:
        out = []
        while b is not None:
            out.append(b)
            b = self.parent[b]
        out.reverse()
        return out

    def tip_changes(self):
        """Yield ``(record_index, time, node, old_tip, new_tip)`` for every tip
        change implied by the records."""
        tips = defaultdict(lambda: self.genesis)
        for i, r in enumerate(self.log.records):
            old = tips[r.node]
            if r.action == SWITCH:
                new = r.block
            elif self.parent.get(r.block) == old:
                new = r.block
            else:
                continue
            if new != old:
                tips[r.node] = new
                yield i, r.time, r.node, old, new

    def _final_tips(self) -> dict:
        tips = {n: self.genesis for n in range(self.n_nodes)}
        for _, _, node, _, new in self.tip_changes():
            tips[node] = new
        return tips

    def _pick_main_tip(self):
        # the tip most nodes hold at the end; heavier, then earlier, on ties
        counts = Counter(self.final_tips.values())
        pos = {b: i for i, b in enumerate(self.order)}
        return max(counts, key=lambda b: (counts[b], self.weight[b], -pos[b]))

    def pow_blocks(self, start: float = 0.0) -> list:
        return [b for b in self.order[1:]
                if self.kind[b] in POW_KINDS and self.created[b] >= start]

    def ancestor_at_depth(self, b, d):
        while self.depth[b] > d:
            b = self.parent[b]
        return b

    def lca(self, blocks):
        blocks = set(blocks)
        d = min(self.depth[b] for b in blocks)
        cur = {self.ancestor_at_depth(b, d) for b in blocks}
        while len(cur) > 1:
            cur = {self.parent[b] for b in cur}
        return cur.pop()


def _view(log) -> LogView:
    return log if isinstance(log, LogView) else LogView(log)


# consensus delay

def _agreement_cutoff(view: LogView, tip_counts: dict, t: float, k: int) -> float:
    """Largest cutoff ``c <= t`` at which at least ``k`` nodes share the chain
    prefix of blocks created strictly before ``c``."""
    created, parent = view.created, view.parent
    norm = Counter()
    for d, c in tip_counts.items():
        while created[d] >= t and parent[d] is not None:
            d = parent[d]
        norm[d] += c
    if max(norm.values()) >= k:
        return t
    lca = view.lca(norm)
    groups = defaultdict(list)
    for d, m in norm.items():
        child_time = INF
        x = d
        while True:
            groups[x].append((child_time, m))
            if x == lca:
                break
            child_time = created[x]
            x = parent[x]
    best = -INF
    for lst in groups.values():
        lst.sort(key=lambda e: -e[0])
        acc = 0
        for ct, m in lst:
            acc += m
            if acc >= k:
                best = max(best, min(t, ct))
                break
    return best


def _tips_at(view: LogView, t: float) -> Counter:
    tips = {n: view.genesis for n in range(view.n_nodes)}
    for _, time, node, _, new in view.tip_changes():
        if time > t:
            break
        tips[node] = new
    return Counter(tips.values())


def point_consensus_delay(log, t: float, epsilon: float) -> float:
    """Smallest look-back ``Δ`` such that at least ``ε·N`` nodes, in their
    state at time ``t``, agree on all blocks created strictly before ``t - Δ``."""
    view = _view(log)
    k = required_agreement(view.n_nodes, epsilon)
    return t - _agreement_cutoff(view, _tips_at(view, t), t, k)


def sample_times(view: LogView, start: float = 0.0) -> list:
    """Every record timestamp plus a 1-second grid, over ``[start, end]``."""
    end = view.end
    times = {r.time for r in view.log.records if start <= r.time <= end}
    i = 0
    while start + i <= end:
        times.add(start + i)
        i += 1
    return sorted(times)


def point_delay_series(log, epsilon: float, start: float = 0.0):
    """``(sample_time, point_consensus_delay)`` pairs over the sampling grid."""
    view = _view(log)
    k = required_agreement(view.n_nodes, epsilon)
    changes = list(view.tip_changes())
    tips = {n: view.genesis for n in range(view.n_nodes)}
    counts = Counter(tips.values())
    ci = 0
    dirty = True
    c_inf = newest = None
    out = []
    for s in sample_times(view, start):
        while ci < len(changes) and changes[ci][1] <= s:
            _, _, node, old, new = changes[ci]
            counts[old] -= 1
            if not counts[old]:
                del counts[old]
            counts[new] += 1
            ci += 1
            dirty = True
        if dirty:
            c_inf = _agreement_cutoff(view, counts, INF, k)
            newest = max(view.created[b] for b in counts)
            dirty = False
        if s > newest:
            c = min(s, c_inf)
        else:
            c = _agreement_cutoff(view, counts, s, k)
        out.append((s, s - c))
    return out


def consensus_delay(log, epsilon: float = 0.9, delta: float = 0.9, start: float = 0.0) -> float:
    """The δ-percentile of the ε point consensus delay over the sample grid."""
    return percentile([d for _, d in point_delay_series(log, epsilon, start)], delta)


# fairness and mining power utilisation

def _largest_miner(powers) -> int:
    return max(range(len(powers)), key=lambda i: (powers[i], -i))


def fairness(log, powers=None, start: float = 0.0, basis: str = "power") -> float:
    """Share of main-chain proof-of-work blocks not mined by the largest miner,
    divided by that miner's complement.

    ``basis="power"`` uses the complement of the largest miner's power share;
    ``basis="generated"`` uses the share of all generated proof-of-work blocks
    not mined by it, which cancels the luck of the draw.
    """
    view = _view(log)
    powers = powers if powers is not None else view.log.powers
    if powers is None:
        raise ValueError("mining powers required to identify the largest miner")
    top = _largest_miner(powers)
    main = [b for b in view.main_chain[1:]
            if view.kind[b] in POW_KINDS and view.created[b] >= start]
    if not main:
        return math.nan
    main_frac = sum(view.miner[b] != top for b in main) / len(main)
    if basis == "power":
        denom = 1.0 - powers[top] / math.fsum(powers)
    elif basis == "generated":
        gen = view.pow_blocks(start)
        denom = sum(view.miner[b] != top for b in gen) / len(gen)
    else:
        raise ValueError(f"unknown basis {basis!r}")
    if denom <= 0:
        raise DegeneratePower("the largest miner owns everything")
    return main_frac / denom


def mining_power_utilization(log, start: float = 0.0) -> float:
    """Main-chain proof-of-work blocks over all generated proof-of-work blocks."""
    view = _view(log)
    gen = view.pow_blocks(start)
    if not gen:
        return math.nan
    return sum(b in view.main_index for b in gen) / len(gen)


# time to prune / time to win

def prune_samples(log, start: float = 0.0) -> list:
    """One sample per (node, pruned branch) the node believed in: time from
    its first record of any branch block to its first record of a main-chain
    block heavier than every branch block it ever records."""
    view = _view(log)
    main = view.main_index
    root = {}
    for b in view.order[1:]:
        if b not in main:
            p = view.parent[b]
            root[b] = b if p in main else root[p]
    per_node = defaultdict(list)
    for i, r in enumerate(view.log.records):
        if r.action != SWITCH:
            per_node[r.node].append((i, r.time, r.block))
    out = []
    for node in sorted(per_node):
        steps = []  # (max main weight so far, index, time), strictly increasing
        first = {}
        heaviest = {}
        best = -1
        for i, t, b in per_node[node]:
            if b in main:
                w = view.weight[b]
                if w > best:
                    best = w
                    steps.append((w, i, t))
            elif b in root:
                r = root[b]
                if r not in first:
                    first[r] = (i, t)
                heaviest[r] = max(heaviest.get(r, -1), view.weight[b])
        weights = [s[0] for s in steps]
        for r, (fi, ft) in first.items():
            if ft < start:
                continue
            j = bisect.bisect_right(weights, heaviest[r])
            if j == len(steps):
                continue  # never overtaken at this node
            _, pi, pt = steps[j]
            if pi < fi:
                continue  # pruned before the node saw it
            out.append(pt - ft)
    return out


def time_to_prune(log, delta: float = 0.9, start: float = 0.0) -> float:
    """δ-percentile of prune samples; NaN when no branch was ever pruned."""
    return percentile(prune_samples(log, start), delta)


def win_samples(log, start: float = 0.0) -> list:
    """Per main-chain block: last creation time of a non-descendant block by a
    different miner, minus the block's own creation time, clamped at zero."""
    view = _view(log)
    chain = view.main_chain
    idx = view.main_index
    attach = {}
    by_attach = defaultdict(list)
    for b in view.order:
        a = idx[b] if b in idx else attach[view.parent[b]]
        attach[b] = a
        by_attach[a].append(b)
    top1 = top2 = (-INF, None)  # (time, miner), distinct miners
    per_miner = {}
    out = []
    for i in range(1, len(chain)):
        for x in by_attach.get(i - 1, ()):
            m, t = view.miner[x], view.created[x]
            if t <= per_miner.get(m, -INF):
                continue
            per_miner[m] = t
            if m == top1[1]:
                top1 = (t, m)
            elif t > top1[0]:
                top1, top2 = (t, m), top1
            elif m == top2[1] or t > top2[0]:
                top2 = (t, m)
        b = chain[i]
        if view.created[b] < start:
            continue
        last = top1[0] if top1[1] != view.miner[b] else top2[0]
        out.append(max(0.0, last - view.created[b]))
    return out


def time_to_win(log, delta: float = 0.9, start: float = 0.0) -> float:
    return percentile(win_samples(log, start), delta)


def throughput(log, start: float = 0.0) -> float:
    """Main-chain transactions per second between ``start`` and the last
    block generation."""
    view = _view(log)
    end = view.last_generation
    if end <= start:
        return math.nan
    txs = sum(view.tx_count[b] for b in view.main_chain if start <= view.created[b] <= end)
    return txs / (end - start)


def propagation_times(log, fraction: float = 0.9) -> dict:
    """Per block: time from creation until ``fraction`` of nodes hold it."""
    view = _view(log)
    need = required_agreement(view.n_nodes, fraction)
    seen = defaultdict(list)
    for r in view.log.records:
        if r.action != SWITCH:
            seen[r.block].append(r.time)
    out = {}
    for b, times in seen.items():
        if len(times) >= need:
            out[b] = sorted(times)[need - 1] - view.created[b]
    return out


@dataclass
class MetricsReport:
    consensus_delay: float
    fairness: float
    fairness_power: float
    mining_power_utilization: float
    time_to_prune: float
    time_to_win: float
    throughput: float
    pruned_branch_samples: int = 0

    def to_text(self) -> str:
        return "".join(f"{k} = {v!r}\n" for k, v in asdict(self).items())

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(f.name for f in fields(cls))

    def to_csv_row(self) -> str:
        return ",".join(repr(v) for v in asdict(self).values())


def compute_metrics(log, epsilon: float = 0.9, delta: float = 0.9, start: float | None = None,
                    warmup_fraction: float = 0.05, powers=None) -> MetricsReport:
    """All metrics for one run.  Without an explicit ``start``, the first
    ``warmup_fraction`` of the generation span is excluded."""
    view = _view(log)
    if start is None:
        start = warmup_fraction * view.last_generation
    powers = powers if powers is not None else view.log.powers
    prunes = prune_samples(view, start)
    return MetricsReport(
        consensus_delay=consensus_delay(view, epsilon, delta, start),
        fairness=_safe(lambda: fairness(view, powers, start, basis="generated")),
        fairness_power=_safe(lambda: fairness(view, powers, start, basis="power")),
        mining_power_utilization=mining_power_utilization(view, start),
        time_to_prune=percentile(prunes, delta),
        time_to_win=time_to_win(view, delta, start),
        throughput=throughput(view, start),
        pruned_branch_samples=len(prunes),
    )


def _safe(fn) -> float:
    try:
        return fn()
    except (DegeneratePower, ValueError):
        return math.nan
