"""Block data model, block tree storage and chain selection.

A single :class:`Block` record covers Bitcoin blocks, Bitcoin-NG key blocks and
microblocks.  Transactions are not materialised inside blocks: every node starts
from the same ordered mempool, so a block only records the contiguous slice
``[tx_start, tx_start + tx_count)`` of that pool it serialises.  A branch that
consumed ``n`` transactions can only continue with slice index ``n``, which is
the double-spend rule for pre-filled independent transactions.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, NamedTuple, Optional

GENESIS_ID = 0

# Byte overhead of each block type on the wire; payload limits apply to
# transaction bytes only.
BITCOIN_HEADER_BYTES = 180
KEY_BLOCK_BYTES = 250
MICROBLOCK_HEADER_BYTES = 144


class Protocol(str, enum.Enum):
    BITCOIN = "bitcoin"
    NG = "ng"


class BlockKind(str, enum.Enum):
    GENESIS = "G"
    BITCOIN = "B"
    KEY = "K"
    MICRO = "M"

    @property
    def is_pow(self) -> bool:
        return self in (BlockKind.BITCOIN, BlockKind.KEY)


class ChainError(Exception):
    pass


class UnknownParent(ChainError):
    """Raised when a block's parent is not yet in the tree."""


class DuplicateBlock(ChainError):
    pass


class UnknownBlock(ChainError, KeyError):
    pass


@dataclass(frozen=True)
class Transaction:
    id: int
    fee: int
    inputs: frozenset = frozenset()
    size_bytes: int = 476


class CoinbaseOutput(NamedTuple):
    miner: int
    amount: Fraction
    # key block of the epoch whose work earned this output
    epoch: Hashable


@dataclass(frozen=True)
class Coinbase:
    """Outputs minted by a proof-of-work block.  ``epoch_fees`` is the fee
    total the outputs distribute."""

    outputs: tuple = ()
    epoch_fees: Fraction = Fraction(0)

    def paid_to(self, miner) -> Fraction:
        return sum((o.amount for o in self.outputs if o.miner == miner), Fraction(0))


@dataclass(frozen=True)
class Block:
    id: Hashable
    parent: Optional[Hashable]
    kind: BlockKind
    miner: int = -1
    created_at: float = 0.0
    size_bytes: int = 0
    tx_start: int = 0
    tx_count: int = 0
    leader_pubkey: Optional[bytes] = None
    signature: Optional[bytes] = None
    coinbase: Optional[Coinbase] = None
    poisons: tuple = ()
    # distinguishes otherwise identical equivocating siblings
    nonce: int = 0

    def header_bytes(self) -> bytes:
        fields = (self.id, self.parent, self.kind.value, self.miner,
                  repr(self.created_at), self.size_bytes, self.tx_start,
                  self.tx_count, self.nonce, len(self.poisons))
        return "|".join(map(str, fields)).encode()


def genesis_block() -> Block:
    return Block(id=GENESIS_ID, parent=None, kind=BlockKind.GENESIS)


# Signature stand-in.  A key pair is a random secret and a public handle derived
# from it; a signature is a digest keyed by the public handle.  This keeps the
# verification semantics (a block signed under one key does not verify under
# another) without any cryptographic strength.

def public_key(secret: bytes) -> bytes:
    return hashlib.sha256(b"pub" + secret).digest()[:16]


def sign(secret: bytes, header: bytes) -> bytes:
    return hashlib.sha256(public_key(secret) + header).digest()[:16]


def verify(pubkey: Optional[bytes], header: bytes, signature: Optional[bytes]) -> bool:
    if pubkey is None or signature is None:
        return False
    return hashlib.sha256(pubkey + header).digest()[:16] == signature


@dataclass(frozen=True)
class ChainWeight:
    key_weight: int


class BlockTree:
    """Append-only tree of blocks rooted at genesis.

    Path-derived quantities (height, proof-of-work weight, epoch key block,
    cumulative transaction count) are cached per block at insertion.
    """

    def __init__(self, genesis: Optional[Block] = None):
        genesis = genesis or genesis_block()
        self.genesis = genesis.id
        self.blocks: dict = {genesis.id: genesis}
        self.children: dict = {genesis.id: []}
        self.height = {genesis.id: 0}
        self.pow_weight = {genesis.id: 0}
        self.epoch = {genesis.id: genesis.id}
        self.suffix = {genesis.id: 0}
        self.tx_end = {genesis.id: 0}
        self.order = {genesis.id: 0}
        self.leaves = {genesis.id: None}  # insertion-ordered set

    def __contains__(self, block_id) -> bool:
        return block_id in self.blocks

    def __len__(self) -> int:
        return len(self.blocks)

    def __getitem__(self, block_id) -> Block:
        try:
            return self.blocks[block_id]
        except KeyError:
            raise UnknownBlock(block_id) from None

    def insert(self, block: Block) -> None:
        if block.id in self.blocks:
            raise DuplicateBlock(block.id)
        p = block.parent
        if p not in self.blocks:
            raise UnknownParent(p)
        bid = block.id
        self.blocks[bid] = block
        self.children[bid] = []
        self.children[p].append(bid)
        self.height[bid] = self.height[p] + 1
        if block.kind.is_pow:
            self.pow_weight[bid] = self.pow_weight[p] + 1
            self.epoch[bid] = bid
            self.suffix[bid] = 0
        else:
            self.pow_weight[bid] = self.pow_weight[p]
            self.epoch[bid] = self.epoch[p]
            self.suffix[bid] = self.suffix[p] + 1
        self.tx_end[bid] = self.tx_end[p] + block.tx_count
        self.order[bid] = len(self.order)
        self.leaves.pop(p, None)
        self.leaves[bid] = None

    def path(self, leaf) -> list:
        """Block ids from genesis to ``leaf`` inclusive."""
        if leaf not in self.blocks:
            raise UnknownBlock(leaf)
        out = []
        b = leaf
        while b is not None:
            out.append(b)
            b = self.blocks[b].parent
        out.reverse()
        return out

    def ancestor_at_height(self, block_id, h: int):
        b = block_id
        while self.height[b] > h:
            b = self.blocks[b].parent
        return b

    def is_ancestor(self, a, b) -> bool:
        """True if ``a`` is ``b`` or an ancestor of it."""
        ha = self.height[a]
        if self.height[b] < ha:
            return False
        return self.ancestor_at_height(b, ha) == a

    def epoch_key_block(self, block_id):
        return self.epoch[block_id]


def chain_weight(tree: BlockTree, leaf, protocol: Protocol) -> ChainWeight:
    """Weight of the chain ending at ``leaf``.

    Bitcoin counts every block after genesis; Bitcoin-NG counts key blocks only.
    """
    if leaf not in tree:
        raise UnknownBlock(leaf)
    if protocol == Protocol.BITCOIN:
        return ChainWeight(tree.height[leaf])
    return ChainWeight(tree.pow_weight[leaf])


def _weight(tree: BlockTree, b, protocol: Protocol) -> int:
    return tree.height[b] if protocol == Protocol.BITCOIN else tree.pow_weight[b]


def select_main_chain(tree: BlockTree, protocol: Protocol, tiebreak_rng=None):
    """Return the leaf of the heaviest chain.

    Ties between distinct branches are broken uniformly with ``tiebreak_rng``
    (a numpy Generator; the first candidate is taken when it is None).  Under
    Bitcoin-NG, equal-weight leaves sharing an epoch key block are one leader's
    competing microblock suffixes and the longest suffix represents it.
    """
    leaves = list(tree.leaves)
    best = max(_weight(tree, b, protocol) for b in leaves)
    top = [b for b in leaves if _weight(tree, b, protocol) == best]
    if protocol == Protocol.NG:
        by_epoch: dict = {}
        for b in top:
            e = tree.epoch[b]
            cur = by_epoch.get(e)
            if cur is None or tree.suffix[b] > tree.suffix[cur]:
                by_epoch[e] = b
        top = [by_epoch[e] for e in sorted(by_epoch, key=tree.order.__getitem__)]
    if len(top) == 1 or tiebreak_rng is None:
        return top[0]
    return top[int(tiebreak_rng.integers(len(top)))]


def common_prefix(tree: BlockTree, leaves: Iterable):
    """Deepest common ancestor of all given blocks."""
    leaves = list(leaves)
    if not leaves:
        raise ValueError("need at least one block")
    for b in leaves:
        if b not in tree:
            raise UnknownBlock(b)
    h = min(tree.height[b] for b in leaves)
    cur = {tree.ancestor_at_height(b, h) for b in leaves}
    while len(cur) > 1:
        cur = {tree.blocks[b].parent for b in cur}
    return cur.pop()


def strip_microblocks(tree: BlockTree) -> BlockTree:
    """Copy of the tree keeping only proof-of-work blocks, re-parented on their
    nearest proof-of-work ancestor.  Insertion order is preserved."""
    out = BlockTree(tree.blocks[tree.genesis])
    for bid in sorted(tree.blocks, key=tree.order.__getitem__):
        b = tree.blocks[bid]
        if not b.kind.is_pow:
            continue
        p = b.parent
        while not tree.blocks[p].kind.is_pow and p != tree.genesis:
            p = tree.blocks[p].parent
        out.insert(Block(id=bid, parent=p, kind=b.kind, miner=b.miner,
                         created_at=b.created_at))
    return out


class Mempool:
    """Ordered pool of independent, equally sized transactions.

    Every node is topped up with the same pool before a run.  A branch that has
    serialised ``n`` transactions continues from index ``n``; fee sums over any
    slice are exact integers.
    """

    def __init__(self, fees, tx_size: int = 476):
        self.tx_size = tx_size
        self.fees = [int(f) for f in fees]
        self._prefix = [0]
        for f in self.fees:
            self._prefix.append(self._prefix[-1] + f)

    @classmethod
    def prefilled(cls, count: int, tx_size: int = 476, rng=None, max_fee: int = 1000):
        if rng is None:
            fees = [1] * count
        else:
            fees = rng.integers(1, max_fee + 1, size=count).tolist()
        return cls(fees, tx_size)

    def __len__(self) -> int:
        return len(self.fees)

    def __getitem__(self, i: int) -> Transaction:
        return Transaction(id=i, fee=self.fees[i], inputs=frozenset({("pool", i)}),
                           size_bytes=self.tx_size)

    def take(self, start: int, payload_limit: int) -> int:
        """Number of transactions from ``start`` that fit in ``payload_limit`` bytes."""
        fit = max(payload_limit, 0) // self.tx_size
        return max(0, min(fit, len(self.fees) - start))

    def fee_sum(self, start: int, stop: int) -> int:
        return self._prefix[stop] - self._prefix[start]

    def valid_slice(self, branch_consumed: int, start: int, count: int) -> bool:
        # a slice not starting at the branch's consumption point re-spends or
        # skips pool entries
        return start == branch_consumed and 0 <= count and start + count <= len(self.fees)
