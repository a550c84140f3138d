import itertools

import numpy as np
import pytest

from ngsim.bitcoin import BitcoinNode
from ngsim.chain import Mempool
from ngsim.eventlog import EventLog
from ngsim.harness import SimConfig, Simulation


def node(i=0, pool=None, seed=0, ids=None):
    pool = pool if pool is not None else Mempool([1] * 10, tx_size=100)
    return BitcoinNode(i, pool, EventLog(), np.random.default_rng(seed),
                       ids=ids or itertools.count(1))


def test_empty_mempool_gives_empty_block():
    n = node(pool=Mempool([], 100))
    assert n.on_mine_trigger(1.0, 1000).tx_count == 0


def test_block_capacity():
    n = node()
    b = n.on_mine_trigger(1.0, 400)
    assert b.tx_count == 4
    assert b.coinbase.paid_to(0) == 50 + 4


def test_back_to_back_blocks_chain():
    n = node()
    a = n.on_mine_trigger(1.0, 200)
    b = n.on_mine_trigger(2.0, 200)
    assert b.parent == a.id and n.tip == b.id
    assert b.tx_start == 2


def test_extension_advances_without_switch():
    ids = itertools.count(1)
    a, b = node(0, ids=ids), node(1, ids=ids)
    blk = a.on_mine_trigger(1.0, 200)
    assert b.receive(blk, 2.0) == [blk]
    assert b.tip == blk.id
    assert [r.action for r in b.log] == ["recv"]


def test_heavier_branch_switches():
    ids = itertools.count(1)
    a, b = node(0, ids=ids), node(1, ids=ids)
    mine = b.on_mine_trigger(1.0, 200)
    x = a.on_mine_trigger(1.0, 200)
    y = a.on_mine_trigger(2.0, 200)
    b.receive(x, 3.0)
    assert b.tip in (mine.id, x.id)
    b.receive(y, 4.0)
    assert b.tip == y.id
    assert "switch" in [r.action for r in b.log]


def test_orphan_is_buffered_until_parent():
    ids = itertools.count(1)
    a, b = node(0, ids=ids), node(1, ids=ids)
    x = a.on_mine_trigger(1.0, 200)
    y = a.on_mine_trigger(2.0, 200)
    assert b.receive(y, 3.0) == []
    assert b.receive(x, 4.0) == [x, y]
    assert b.tip == y.id
    assert b.receive(y, 5.0) == []  # duplicate


def test_double_spend_rejected():
    ids = itertools.count(1)
    a, b = node(0, ids=ids), node(1, ids=ids)
    x = a.on_mine_trigger(1.0, 200)
    import dataclasses
    bad = dataclasses.replace(x, id=99, parent=0, tx_start=1)
    assert b.receive(bad, 2.0) == []
    assert b.dropped == [(99, "double-spend")]


def test_equal_weight_tie_is_fair_coin():
    switched = 0
    for seed in range(1000):
        ids = itertools.count(1)
        a, b = node(0, ids=ids), node(1, seed=seed, ids=ids)
        mine = b.on_mine_trigger(1.0, 100)
        other = a.on_mine_trigger(1.0, 100)
        b.receive(other, 2.0)
        switched += b.tip == other.id
        assert b.tip in (mine.id, other.id)
    assert abs(switched / 1000 - 0.5) < 0.05


def test_first_seen_keeps_current_tip():
    ids = itertools.count(1)
    a = node(0, ids=ids)
    b = BitcoinNode(1, Mempool([1] * 10, 100), EventLog(), np.random.default_rng(0),
                    first_seen=True, ids=ids)
    mine = b.on_mine_trigger(1.0, 100)
    b.receive(a.on_mine_trigger(1.0, 100), 2.0)
    assert b.tip == mine.id


@pytest.fixture(scope="module")
def small_run():
    cfg = SimConfig(n_nodes=30, block_interval_sec=30, block_size_bytes=50_000,
                    run_length_blocks=40, seed=3)
    sim = Simulation(cfg)
    sim.run()
    return sim


def test_quiescent_agreement(small_run):
    tips = {n.tip for n in small_run.nodes}
    assert len(tips) == 1


def test_causality_in_log(small_run):
    known = {n: {0} for n in range(30)}
    for r in small_run.log:
        if r.action == "gen":
            assert r.parent in known[r.node]
        known[r.node].add(r.block)


def test_fork_rate_with_fast_propagation():
    # ten-minute blocks, propagation of a few seconds: forks are rare
    forks = blocks = 0
    for seed in range(4):
        cfg = SimConfig(n_nodes=60, bandwidth_bits_per_sec=2e6, run_length_blocks=150,
                        seed=seed)
        sim = Simulation(cfg)
        sim.run()
        main = sim.nodes[0].tree.height[sim.nodes[0].tip]
        blocks += 150
        forks += 150 - main
    rate = forks / blocks
    assert 1 / 180 <= rate <= 3 / 60
