"""Bitcoin-NG node: key-block leader election, signed rate-limited microblocks,
40/60 fee remuneration with coinbase maturity, and poison transactions."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Optional

from .bitcoin import Node
from .chain import (KEY_BLOCK_BYTES, MICROBLOCK_HEADER_BYTES, Block, BlockKind, BlockTree,
                    Coinbase, CoinbaseOutput, Mempool, Protocol, public_key, sign, verify)

# slack for float timestamps built as parent_time + interval
TIME_SLACK = 1e-9


@dataclass(frozen=True)
class Remuneration:
    subsidy: int = 50
    fee_current_share: Fraction = Fraction(2, 5)
    fee_next_share: Fraction = Fraction(3, 5)
    maturity_depth: int = 100

    def __post_init__(self):
        if Fraction(self.fee_current_share) + Fraction(self.fee_next_share) != 1:
            raise ValueError("fee shares must sum to 1")


@dataclass(frozen=True)
class PoisonTransaction:
    """Fraud proof against an equivocating leader.

    ``placed_after`` is the cheater's epoch key block; the poison is valid only
    in a microblock of a later epoch on a chain containing that key block.
    """

    cheater: int
    evidence_header: Block
    placed_after: Hashable
    poisoner_share: Fraction = Fraction(1, 20)


class Verdict(enum.Enum):
    VALID = "valid"
    NO_LEADER = "no-leader"
    BAD_SIGNATURE = "bad-signature"
    FUTURE_TIMESTAMP = "future-timestamp"
    RATE_EXCEEDED = "rate-exceeded"
    OVERSIZE = "oversize"
    DOUBLE_SPEND = "double-spend"
    BAD_POISON = "bad-poison"

    @property
    def ok(self) -> bool:
        return self is Verdict.VALID


class PoisonError(Exception):
    pass


class PoisonTooLate(PoisonError):
    pass


class DuplicatePoison(PoisonError):
    pass


class ImmatureSpend(Exception):
    pass


def key_block_coinbase(tree: BlockTree, parent, miner: int, mempool: Mempool,
                       remuneration: Remuneration, block_id=None) -> Coinbase:
    """Coinbase of a key block mined on ``parent``.

    The fees of the microblocks between the previous key block and ``parent``
    are split: ``fee_current_share`` to the previous leader who serialised
    them, ``fee_next_share`` to the new leader together with the subsidy.
    """
    prev_key = tree.epoch[parent]
    fees = Fraction(mempool.fee_sum(tree.tx_end[prev_key], tree.tx_end[parent]))
    mine = CoinbaseOutput(miner, remuneration.subsidy + fees * remuneration.fee_next_share,
                          block_id)
    prev = tree[prev_key]
    if prev.kind != BlockKind.KEY:
        # no previous leader, so no microblock fees either
        return Coinbase((mine,), fees)
    theirs = CoinbaseOutput(prev.miner, fees * remuneration.fee_current_share, prev_key)
    return Coinbase((mine, theirs), fees)


def poisons_on_path(tree: BlockTree, block_id) -> dict:
    """cheater -> microblock id carrying its poison, along genesis..block_id."""
    found = {}
    b = block_id
    while b is not None:
        blk = tree.blocks[b]
        for p in blk.poisons:
            found.setdefault(p.cheater, b)
        b = blk.parent
    return found


def _poison_problem(tree: BlockTree, parent, poisons) -> bool:
    seen = set(poisons_on_path(tree, parent)) if poisons else set()
    for p in poisons:
        if p.cheater in seen:
            return True
        seen.add(p.cheater)
        key = tree.blocks.get(p.placed_after)
        if key is None or key.kind != BlockKind.KEY or key.miner != p.cheater:
            return True
        if not tree.is_ancestor(p.placed_after, parent) or tree.epoch[parent] == p.placed_after:
            return True
        ev = p.evidence_header
        if not verify(key.leader_pubkey, ev.header_bytes(), ev.signature):
            return True
    return False


def validate_microblock(state: "NgNode", mb: Block, min_interval: float, now: float,
                        size_limit: Optional[int] = None) -> Verdict:
    """Check a microblock whose parent is in ``state.tree``."""
    tree = state.tree
    parent = tree[mb.parent]
    key = tree[tree.epoch[mb.parent]]
    if key.kind != BlockKind.KEY:
        return Verdict.NO_LEADER
    if not verify(key.leader_pubkey, mb.header_bytes(), mb.signature):
        return Verdict.BAD_SIGNATURE
    if mb.created_at > now + state.clock_skew + TIME_SLACK:
        return Verdict.FUTURE_TIMESTAMP
    # closed boundary: a gap of exactly min_interval is valid
    if mb.created_at - parent.created_at < min_interval - TIME_SLACK:
        return Verdict.RATE_EXCEEDED
    limit = state.microblock_size_limit if size_limit is None else size_limit
    if mb.tx_count * state.mempool.tx_size > limit:
        return Verdict.OVERSIZE
    if not state.mempool.valid_slice(tree.tx_end[mb.parent], mb.tx_start, mb.tx_count):
        return Verdict.DOUBLE_SPEND
    if mb.poisons and _poison_problem(tree, mb.parent, mb.poisons):
        return Verdict.BAD_POISON
    return Verdict.VALID


def detect_equivocation(state: "NgNode", header_a: Block, header_b: Block
                        ) -> Optional[PoisonTransaction]:
    """Poison for a leader that signed two different microblocks on one parent.

    At most one poison per cheater is produced by a node.  The evidence is the
    header not on the node's current chain.
    """
    if header_a.kind != BlockKind.MICRO or header_b.kind != BlockKind.MICRO:
        return None
    if header_a.parent != header_b.parent or header_a.header_bytes() == header_b.header_bytes():
        return None
    tree = state.tree
    key_id = tree.epoch[header_a.parent]
    key = tree[key_id]
    if key.kind != BlockKind.KEY:
        return None
    for h in (header_a, header_b):
        if not verify(key.leader_pubkey, h.header_bytes(), h.signature):
            return None
    if key.miner in state.poisoned_cheaters:
        return None
    state.poisoned_cheaters.add(key.miner)
    on_chain_a = header_a.id in tree and tree.is_ancestor(header_a.id, state.tip)
    evidence = header_b if on_chain_a else header_a
    return PoisonTransaction(key.miner, evidence, key_id, state.poisoner_share)


@dataclass
class LedgerEntry:
    key_block: Hashable
    key_height: int
    miner: int
    amount: Fraction
    epoch: Hashable
    spent: bool = False
    voided: bool = False


@dataclass
class PoisonOutcome:
    cheater: int
    poisoner: int
    voided: Fraction
    poisoner_credit: Fraction
    destroyed: Fraction


@dataclass
class RevenueLedger:
    """Coinbase outputs along one chain, with maturity and poison effects."""

    remuneration: Remuneration = field(default_factory=Remuneration)
    entries: list = field(default_factory=list)
    outcomes: dict = field(default_factory=dict)  # cheater -> PoisonOutcome

    @classmethod
    def from_chain(cls, tree: BlockTree, leaf, remuneration: Remuneration | None = None,
                   apply_poisons: bool = True) -> "RevenueLedger":
        led = cls(remuneration or Remuneration())
        for bid in tree.path(leaf):
            b = tree.blocks[bid]
            if b.coinbase is not None:
                for o in b.coinbase.outputs:
                    led.entries.append(LedgerEntry(bid, tree.pow_weight[bid], o.miner,
                                                   Fraction(o.amount), o.epoch))
            if apply_poisons:
                for p in b.poisons:
                    apply_poison(led, p, poisoner=b.miner)
        return led

    def is_mature(self, entry: LedgerEntry, tip_key_height: int) -> bool:
        return tip_key_height - entry.key_height >= self.remuneration.maturity_depth

    def spend(self, entry: LedgerEntry, tip_key_height: int) -> None:
        if entry.voided:
            raise ImmatureSpend("output was voided by a poison transaction")
        if not self.is_mature(entry, tip_key_height):
            raise ImmatureSpend(f"coinbase of {entry.key_block} needs "
                                f"{self.remuneration.maturity_depth} key blocks")
        entry.spent = True

    def balance(self, miner: int) -> Fraction:
        total = sum((e.amount for e in self.entries if e.miner == miner and not e.voided),
                    Fraction(0))
        total += sum((o.poisoner_credit for o in self.outcomes.values() if o.poisoner == miner),
                     Fraction(0))
        return total

    def epoch_revenue(self, miner: int, epoch) -> list:
        return [e for e in self.entries if e.miner == miner and e.epoch == epoch]


def apply_poison(ledger: RevenueLedger, poison: PoisonTransaction, poisoner: int) -> PoisonOutcome:
    """Void the cheater's revenue for the poisoned epoch and credit the
    poisoner its share; the remainder is destroyed."""
    if poison.cheater in ledger.outcomes:
        raise DuplicatePoison(f"miner {poison.cheater} already poisoned")
    targets = ledger.epoch_revenue(poison.cheater, poison.placed_after)
    if any(e.spent for e in targets):
        raise PoisonTooLate(f"revenue of miner {poison.cheater} already spent")
    voided = sum((e.amount for e in targets), Fraction(0))
    for e in targets:
        e.voided = True
    credit = voided * Fraction(poison.poisoner_share)
    out = PoisonOutcome(poison.cheater, poisoner, voided, credit, voided - credit)
    ledger.outcomes[poison.cheater] = out
    return out


class NgNode(Node):
    """Bitcoin-NG node.

    Timer requests are queued in ``timer_requests`` as ``(time, token)``; the
    driver delivers them back through :meth:`on_microblock_timer`.  A token
    that no longer matches means the timer was cancelled.
    """

    protocol = Protocol.NG

    def __init__(self, node_id: int, mempool: Mempool, log=None, rng=None, genesis=None,
                 first_seen: bool = False, remuneration: Remuneration | None = None,
                 microblock_interval: float = 10.0, min_interval: float | None = None,
                 microblock_size_limit: int = 1_000_000, clock_skew: float = 0.0,
                 poisoner_share: Fraction = Fraction(1, 20), honest: bool = True, ids=None):
        remuneration = remuneration or Remuneration()
        super().__init__(node_id, mempool, log, rng, genesis, first_seen,
                         remuneration.subsidy, ids)
        self.remuneration = remuneration
        self.microblock_interval = float(microblock_interval)
        self.min_interval = float(microblock_interval if min_interval is None else min_interval)
        if self.microblock_interval < self.min_interval:
            raise ValueError("microblock_interval must be >= min_interval")
        self.microblock_size_limit = microblock_size_limit
        self.clock_skew = clock_skew
        self.poisoner_share = poisoner_share
        self.honest = honest
        self.neighbors: list = []
        self.stopped = False
        self.timer_at: float | None = None
        self.timer_requests: list = []
        self._token = 0
        self._secrets: dict = {}
        self.fraud_index: dict = {}  # parent id -> first microblock child seen
        self.poisoned_cheaters: set = set()
        self.pending_poisons: list = []  # (PoisonTransaction, detected_at)

    def weight(self, b) -> int:
        return self.tree.pow_weight[b]

    def _ordering(self, b) -> bool:
        tree = self.tree
        t = self.tip
        wb, wt = tree.pow_weight[b], tree.pow_weight[t]
        if wb > wt:
            self._ties = 1
            return True
        if wb < wt:
            return False
        if tree.epoch[b] == tree.epoch[t]:
            # same leader: its longer microblock suffix is newer state
            return tree.suffix[b] > tree.suffix[t]
        if tree.blocks[b].kind.is_pow:
            self._ties += 1
            return not self.first_seen and self.rng.random() * self._ties < 1.0
        return False

    @property
    def is_leader(self) -> bool:
        return self.tree.epoch[self.tip] in self._secrets

    # leadership and timers

    def _arm(self, at: float) -> None:
        self._token += 1
        self.timer_at = at
        self.timer_requests.append((at, self._token))

    def _cancel(self) -> None:
        if self.timer_at is not None:
            self._token += 1
            self.timer_at = None

    def on_tip_change(self, old_tip, now: float) -> None:
        if self.is_leader and not self.stopped:
            if self.timer_at is None:
                last = self.tree[self.tip].created_at
                self._arm(max(now, last + self.microblock_interval))
        else:
            self._cancel()

    def stop(self) -> None:
        self.stopped = True
        self._cancel()

    # generation

    def on_key_block_trigger(self, now: float) -> Block:
        parent = self.tip
        bid = next(self.ids)
        secret = self.rng.bytes(16)
        block = Block(id=bid, parent=parent, kind=BlockKind.KEY, miner=self.node_id,
                      created_at=now, size_bytes=KEY_BLOCK_BYTES,
                      tx_start=self.tree.tx_end[parent], tx_count=0,
                      leader_pubkey=public_key(secret),
                      coinbase=key_block_coinbase(self.tree, parent, self.node_id,
                                                  self.mempool, self.remuneration, bid))
        self._secrets[bid] = secret
        self._generate(block, now)
        return block

    on_mine_trigger = on_key_block_trigger

    def make_microblock(self, now: float, parent=None, nonce: int = 0) -> Block:
        parent = self.tip if parent is None else parent
        secret = self._secrets[self.tree.epoch[parent]]
        start = self.tree.tx_end[parent]
        count = self.mempool.take(start, self.microblock_size_limit)
        unsigned = Block(id=next(self.ids), parent=parent, kind=BlockKind.MICRO,
                         miner=self.node_id, created_at=now,
                         size_bytes=MICROBLOCK_HEADER_BYTES + count * self.mempool.tx_size,
                         tx_start=start, tx_count=count,
                         poisons=self._poisons_to_place(parent), nonce=nonce)
        return dataclasses.replace(unsigned, signature=sign(secret, unsigned.header_bytes()))

    def _poisons_to_place(self, parent) -> tuple:
        if not self.honest or not self.pending_poisons:
            return ()
        tree = self.tree
        my_epoch = tree.epoch[parent]
        already = poisons_on_path(tree, parent)
        out = []
        for p, detected_at in self.pending_poisons:
            if p.cheater in already or p.placed_after not in tree:
                continue
            if tree[my_epoch].created_at <= detected_at:
                continue
            if my_epoch == p.placed_after or not tree.is_ancestor(p.placed_after, parent):
                continue
            out.append(p)
            already[p.cheater] = None
        return tuple(out)

    def _register_micro(self, b: Block, now: float) -> None:
        first = self.fraud_index.setdefault(b.parent, b)
        if first.id != b.id and self.honest:
            poison = detect_equivocation(self, first, b)
            if poison is not None:
                self.pending_poisons.append((poison, now))

    def _generate(self, b: Block, now: float) -> None:
        super()._generate(b, now)
        if b.kind == BlockKind.MICRO:
            self.fraud_index.setdefault(b.parent, b)

    def on_microblock_timer(self, now: float, token: int = None) -> list:
        """Fire the microblock timer.  Returns ``[(block, targets)]`` to send;
        ``targets`` None means all neighbours."""
        if token is not None and token != self._token:
            return []
        self.timer_at = None
        if self.stopped or not self.is_leader:
            return []
        parent = self.tree[self.tip]
        if now - parent.created_at < self.min_interval - TIME_SLACK:
            self._arm(parent.created_at + self.microblock_interval)
            return []
        mb = self.make_microblock(now)
        self._generate(mb, now)
        return [(mb, None)]

    # reception

    def validate(self, block: Block, now: float):
        if block.kind == BlockKind.MICRO:
            v = validate_microblock(self, block, self.min_interval, now)
            return None if v.ok else v.value
        if block.kind != BlockKind.KEY:
            return "wrong-kind"
        if block.leader_pubkey is None:
            return "no-key"
        return None

    def _accept(self, b: Block, now: float) -> bool:
        ok = super()._accept(b, now)
        if ok and b.kind == BlockKind.MICRO:
            self._register_micro(b, now)
        return ok

    def on_receive_block_ng(self, block: Block, now: float) -> list[Block]:
        return self.receive(block, now)


class ForkingLeaderNode(NgNode):
    """Adversary that equivocates once: on its first microblock as leader it
    signs ``fork_count`` different microblocks on the same parent and sends
    each to a disjoint subset of its neighbours.  Otherwise honest."""

    def __init__(self, *args, fork_count: int = 2, **kwargs):
        kwargs["honest"] = False
        super().__init__(*args, **kwargs)
        self.fork_count = fork_count
        self.forked = False

    def on_microblock_timer(self, now: float, token: int = None) -> list:
        if self.forked or self.fork_count < 2:
            return super().on_microblock_timer(now, token)
        if token is not None and token != self._token:
            return []
        self.timer_at = None
        if self.stopped or not self.is_leader:
            return []
        out = forking_leader_adversary(self, self.fork_count, now)
        self.forked = True
        return out


def forking_leader_adversary(state: NgNode, fork_count: int, now: float) -> list:
    """Emit ``fork_count`` sibling microblocks on the leader's tip, each bound
    for a disjoint round-robin subset of neighbours.  Returns
    ``[(block, targets)]``; empty for ``fork_count`` < 2."""
    if fork_count < 2:
        return []
    if not state.is_leader:
        raise ValueError("adversary must hold leadership")
    neighbors = sorted(state.neighbors)
    if len(neighbors) < fork_count:
        raise ValueError("need at least one neighbour per fork")
    parent = state.tip
    out = []
    for i in range(fork_count):
        mb = state.make_microblock(now, parent, nonce=i)
        state._generate(mb, now)
        out.append((mb, neighbors[i::fork_count]))
    return out
