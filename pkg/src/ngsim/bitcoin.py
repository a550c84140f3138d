"""Nakamoto (Bitcoin) node state machine, plus the receive/tip machinery that
the Bitcoin-NG node reuses."""

from __future__ import annotations

import itertools
from collections import defaultdict
from fractions import Fraction

import numpy as np

from .chain import (BITCOIN_HEADER_BYTES, Block, BlockKind, BlockTree, Coinbase,
                    CoinbaseOutput, Mempool, Protocol, genesis_block)
from .eventlog import GENERATE, RECEIVE, SWITCH, EventLog


class Node:
    """Common receive path: orphan buffering, insertion, tip maintenance and
    logging.

    The tip is maintained incrementally.  A strictly heavier block always wins.
    A block tying the current weight with a new competing branch is adopted
    with probability ``1/k`` where ``k`` counts the tied branches seen so far,
    which selects uniformly among ties regardless of arrival order.  With
    ``first_seen`` the first branch at each weight is kept instead.
    """

    protocol = Protocol.BITCOIN

    def __init__(self, node_id: int, mempool: Mempool, log: EventLog | None = None,
                 rng=None, genesis: Block | None = None, first_seen: bool = False,
                 subsidy: int = 50, ids=None):
        self.node_id = node_id
        # block ids must be unique per run: share one counter between nodes
        self.ids = ids if ids is not None else itertools.count(1)
        self.tree = BlockTree(genesis or genesis_block())
        self.tip = self.tree.genesis
        self.mempool = mempool
        self.log = log if log is not None else EventLog()
        self.rng = rng if rng is not None else np.random.default_rng(node_id)
        self.first_seen = first_seen
        self.subsidy = subsidy
        self._ties = 1
        self._orphans = defaultdict(list)
        self._buffered = set()
        self.dropped = []  # (block id, reason)

    # weight used for chain selection
    def weight(self, b) -> int:
        return self.tree.height[b]

    def _ordering(self, b):
        """Return True when block ``b`` should replace the current tip."""
        wb, wt = self.weight(b), self.weight(self.tip)
        if wb > wt:
            self._ties = 1
            return True
        if wb == wt and self._is_new_competitor(b):
            self._ties += 1
            if not self.first_seen and self.rng.random() * self._ties < 1.0:
                return True
        return False

    def _is_new_competitor(self, b) -> bool:
        return True

    def receive(self, block: Block, now: float) -> list[Block]:
        """Process a delivered block.  Returns the blocks newly accepted into
        the tree (the block plus any buffered descendants), which the caller
        relays."""
        if block.id in self.tree or block.id in self._buffered:
            return []
        if block.parent not in self.tree:
            self._buffered.add(block.id)
            self._orphans[block.parent].append(block)
            return []
        accepted = []
        todo = [block]
        while todo:
            b = todo.pop(0)
            self._buffered.discard(b.id)
            if self._accept(b, now):
                accepted.append(b)
                todo.extend(self._orphans.pop(b.id, []))
            else:
                self._discard_orphans(b.id)
        return accepted

    def _discard_orphans(self, bid) -> None:
        for child in self._orphans.pop(bid, []):
            self._buffered.discard(child.id)
            self.dropped.append((child.id, "invalid-ancestor"))
            self._discard_orphans(child.id)

    def validate(self, block: Block, now: float):
        """Return None when acceptable, else a reason."""
        return None

    def _accept(self, b: Block, now: float) -> bool:
        reason = self.validate(b, now)
        if reason is not None:
            self.dropped.append((b.id, reason))
            return False
        self.tree.insert(b)
        self._log(now, RECEIVE, b)
        old = self.tip
        if self._ordering(b.id):
            self.tip = b.id
        self._after_insert(b, old, now)
        return True

    def _log(self, now, action, b: Block) -> None:
        self.log.log_block(now, self.node_id, action, b, self.tree.epoch[b.id])

    def _after_insert(self, b: Block, old_tip, now: float) -> None:
        # a record implies "tip := block" exactly when the block extends the
        # old tip; anything else is logged as an explicit switch
        implied = b.id if b.parent == old_tip else old_tip
        if self.tip != implied:
            new = self.tree[self.tip]
            self.log.append(now, self.node_id, SWITCH, new.id, old_tip, new.kind.value,
                            new.miner, self.tree.epoch[new.id], new.tx_count, new.size_bytes)
        self.on_tip_change(old_tip, now)

    def on_tip_change(self, old_tip, now: float) -> None:
        pass

    def _generate(self, b: Block, now: float) -> None:
        old = self.tip
        self.tree.insert(b)
        self._log(now, GENERATE, b)
        if b.parent == old:
            self.tip = b.id
            if b.kind.is_pow:
                self._ties = 1
        self.on_tip_change(old, now)


class BitcoinNode(Node):
    protocol = Protocol.BITCOIN

    def on_mine_trigger(self, now: float, block_size_limit: int) -> Block:
        """Mine a block on the current tip, filled from the mempool."""
        start = self.tree.tx_end[self.tip]
        count = self.mempool.take(start, block_size_limit)
        fees = self.mempool.fee_sum(start, start + count)
        bid = next(self.ids)
        block = Block(
            id=bid, parent=self.tip, kind=BlockKind.BITCOIN, miner=self.node_id,
            created_at=now, size_bytes=BITCOIN_HEADER_BYTES + count * self.mempool.tx_size,
            tx_start=start, tx_count=count,
            coinbase=Coinbase((CoinbaseOutput(self.node_id, Fraction(self.subsidy + fees), bid),),
                              Fraction(fees)))
        self._generate(block, now)
        return block

    def on_receive_block(self, block: Block, now: float) -> list[Block]:
        return self.receive(block, now)

    def validate(self, block: Block, now: float):
        if block.kind != BlockKind.BITCOIN:
            return "wrong-kind"
        if not self.mempool.valid_slice(self.tree.tx_end[block.parent], block.tx_start,
                                        block.tx_count):
            return "double-spend"
        return None
