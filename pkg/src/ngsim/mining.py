"""Simulated proof of work.

Block discovery is one global exponential race: the gap to the next block is
an exponential draw with the configured mean, and the finder is drawn in
proportion to mining power.  This is equivalent to independent per-miner
exponential clocks and needs one draw pair per block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MinerPower:
    miner: int
    power: float


def assign_powers(n_miners: int, exponent: float = -0.27,
                  miners_per_rank: int = 1) -> list[MinerPower]:
    """Rank-exponential power distribution, normalised to sum 1.

    Rank ``k`` (1-based) carries total power proportional to
    ``exp(exponent * k)``, split evenly among ``miners_per_rank`` miners.
    Miner ids follow rank order, so miner 0 is (one of) the largest.
    """
    if n_miners < 1:
        raise ValueError("n_miners must be >= 1")
    if miners_per_rank < 1:
        raise ValueError("miners_per_rank must be >= 1")
    raw = [math.exp(exponent * (i // miners_per_rank + 1)) / miners_per_rank
           for i in range(n_miners)]
    total = math.fsum(raw)
    return [MinerPower(i, p / total) for i, p in enumerate(raw)]


def largest_share(powers) -> float:
    total = math.fsum(p.power for p in powers)
    return max(p.power for p in powers) / total


class MineSchedule:
    """Seeded source of (time, winner) mining events."""

    def __init__(self, mean_interval: float, powers, seed=None, rng=None):
        if mean_interval <= 0:
            raise ValueError("mean_interval must be positive")
        self.mean_interval = float(mean_interval)
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.set_powers(powers)

    def set_powers(self, powers) -> None:
        self.miners = np.array([p.miner for p in powers])
        weights = np.array([p.power for p in powers], dtype=float)
        if weights.sum() <= 0 or (weights < 0).any():
            raise ValueError("mining powers must be non-negative with positive sum")
        self._cdf = np.cumsum(weights / weights.sum())
        self._cdf[-1] = 1.0

    def scale_total_power(self, factor: float) -> None:
        """Change total hash power without difficulty retargeting: blocks
        arrive ``factor`` times as often."""
        if factor <= 0:
            raise ValueError("factor must be positive")
        self.mean_interval /= factor

    def next_mine_event(self, now: float) -> tuple[float, int]:
        gap = self.rng.exponential(self.mean_interval)
        idx = int(np.searchsorted(self._cdf, self.rng.random(), side="right"))
        return now + gap, int(self.miners[min(idx, len(self.miners) - 1)])


def next_mine_event(schedule: MineSchedule, now: float) -> tuple[float, int]:
    return schedule.next_mine_event(now)
