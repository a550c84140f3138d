import math

import numpy as np
import pytest

from ngsim.mining import MinerPower, MineSchedule, assign_powers, largest_share
from ngsim.harness import SimConfig, Simulation


def test_rank_ratio():
    p = assign_powers(5)
    assert p[1].power / p[0].power == pytest.approx(math.exp(-0.27))


def test_flat_exponent_is_uniform():
    assert all(x.power == pytest.approx(0.1) for x in assign_powers(10, exponent=0.0))


def test_largest_share_closed_form():
    expected = math.exp(-0.27) / sum(math.exp(-0.27 * k) for k in range(1, 21))
    assert largest_share(assign_powers(20)) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.2377, abs=5e-5)
    assert largest_share(assign_powers(100)) < 0.25


def test_miners_per_rank_splits_rank_power():
    p = assign_powers(6, miners_per_rank=2)
    assert p[0].power == p[1].power and p[2].power == p[3].power
    assert sum(x.power for x in p) == pytest.approx(1.0)


def test_single_miner_always_wins():
    s = MineSchedule(10.0, [MinerPower(7, 1.0)], seed=1)
    assert {s.next_mine_event(0.0)[1] for _ in range(100)} == {7}


def test_equal_miners_split_evenly():
    s = MineSchedule(10.0, [MinerPower(0, 1.0), MinerPower(1, 1.0)], seed=2)
    wins = sum(s.next_mine_event(0.0)[1] for _ in range(10_000))
    assert abs(wins / 10_000 - 0.5) < 0.02


def test_interval_mean_and_exponential_shape():
    s = MineSchedule(100.0, [MinerPower(0, 1.0)], seed=3)
    gaps = np.array([s.next_mine_event(0.0)[0] for _ in range(10_000)])
    assert 97 <= gaps.mean() <= 103
    assert abs(gaps.std() / gaps.mean() - 1) < 0.05


def test_winner_frequencies_follow_power():
    powers = assign_powers(5)
    s = MineSchedule(1.0, powers, seed=4)
    n = 20_000
    counts = np.bincount([s.next_mine_event(0.0)[1] for _ in range(n)], minlength=5)
    expected = np.array([p.power for p in powers]) * n
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 18.5  # 99.9% point, 4 degrees of freedom


def test_schedule_is_deterministic():
    a = MineSchedule(5.0, assign_powers(4), seed=9)
    b = MineSchedule(5.0, assign_powers(4), seed=9)
    assert [a.next_mine_event(0.0) for _ in range(50)] == [b.next_mine_event(0.0) for _ in range(50)]


def test_scale_total_power():
    s = MineSchedule(100.0, [MinerPower(0, 1.0)], seed=0)
    s.scale_total_power(4.0)
    assert s.mean_interval == 25.0
    with pytest.raises(ValueError):
        s.scale_total_power(0)


def test_power_step_leaves_microblock_cadence_alone():
    base = SimConfig(protocol="ng", n_nodes=20, key_interval_sec=50, microblock_interval_sec=5,
                     run_length_blocks=120, seed=2)
    gaps = []
    for cfg in (base, base.replace(power_step_time=200.0, power_step_factor=4.0)):
        sim = Simulation(cfg)
        log = sim.run()
        micro = {r.block: r.time for r in log if r.action == "gen" and r.kind == "M"}
        parents = {r.block: r.parent for r in log if r.action == "gen"}
        times = {r.block: r.time for r in log if r.action == "gen"}
        gaps.append([t - times[parents[b]] for b, t in micro.items()
                     if parents[b] in micro])
    for g in gaps:
        assert min(g) >= 5 - 1e-9
        assert np.median(g) == pytest.approx(5.0)
