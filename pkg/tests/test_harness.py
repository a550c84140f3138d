import math

import pytest

from ngsim.eventlog import dumps_event_log
from ngsim.harness import (ConfigError, SimConfig, Simulation, SweepSpec, constant_payload_size,
                           dumps_config, load_config, parse_config, run_simulation, run_sweep,
                           sweep_csv)
from ngsim.metrics import LogView

SMALL = dict(n_nodes=12, run_length_blocks=15, block_interval_sec=30, key_interval_sec=30,
             microblock_interval_sec=5)


def test_parse_config_types_and_comments():
    cfg = parse_config("protocol = NG  # mixed case\nn_nodes = 20\nqueued_links = yes\n"
                       "microblock_size_bytes = none\nbandwidth_bits_per_sec = 1e6\n")
    assert cfg.protocol == "ng" and cfg.n_nodes == 20 and cfg.queued_links
    assert cfg.microblock_size_bytes is None and cfg.bandwidth_bits_per_sec == 1e6


def test_config_errors_name_the_field():
    with pytest.raises(ConfigError, match="wat"):
        parse_config("wat = 3\n")
    with pytest.raises(ConfigError, match=r":2: expected"):
        parse_config("n_nodes = 5\nnonsense\n")
    with pytest.raises(ConfigError, match="n_nodes"):
        parse_config("n_nodes = many\n")
    with pytest.raises(ConfigError, match="min_degree.*epsilon|epsilon.*min_degree"):
        SimConfig(n_nodes=5, min_degree=5, epsilon=0).validate()
    with pytest.raises(ConfigError, match="adversary_node requires protocol ng"):
        SimConfig(adversary_node=1).validate()
    with pytest.raises(ValueError):
        SimConfig(protocol="ethereum")


def test_config_roundtrip_and_env_lookup(tmp_path, monkeypatch):
    cfg = SimConfig(protocol="ng", n_nodes=17, seed=4, first_seen=True)
    (tmp_path / "exp.cfg").write_text(dumps_config(cfg))
    monkeypatch.setenv("NGSIM_CONFIG_DIR", str(tmp_path))
    monkeypatch.chdir(tmp_path.parent)
    assert load_config("exp.cfg") == cfg


def test_constant_payload_rate():
    for interval in (600, 300, 100, 60, 30, 20, 10):
        cfg = SimConfig(block_interval_sec=interval, block_size_bytes=constant_payload_size(interval))
        assert cfg.configured_tps == pytest.approx(1e6 / 600 / 476, rel=0.01)
    ng = SimConfig(protocol="ng", microblock_interval_sec=10)
    assert ng.payload_limit == constant_payload_size(10)


@pytest.mark.parametrize("protocol", ["bitcoin", "ng"])
def test_same_seed_same_log(protocol):
    a = Simulation(SimConfig(protocol=protocol, seed=7, **SMALL)).run()
    b = Simulation(SimConfig(protocol=protocol, seed=7, **SMALL)).run()
    c = Simulation(SimConfig(protocol=protocol, seed=8, **SMALL)).run()
    assert dumps_event_log(a) == dumps_event_log(b)
    assert dumps_event_log(a) != dumps_event_log(c)


@pytest.mark.parametrize("protocol", ["bitcoin", "ng"])
def test_run_generates_exactly_the_requested_blocks_and_drains(protocol):
    sim = Simulation(SimConfig(protocol=protocol, seed=1, **SMALL))
    log = sim.run()
    # NG run length counts microblocks
    counted = "M" if protocol == "ng" else "B"
    assert sum(r.action == "gen" and r.kind == counted for r in log) == 15
    assert len(sim.queue) == 0
    # every node received every block
    view = LogView(log)
    held = {(r.node, r.block) for r in log if r.action in ("gen", "recv")}
    assert len(held) == 12 * (len(view.order) - 1)


def test_ng_epoch_has_interval_ratio_microblocks():
    cfg = SimConfig(protocol="ng", n_nodes=20, key_interval_sec=100, microblock_interval_sec=10,
                    run_length_blocks=400, seed=3)
    log = Simulation(cfg).run()
    view = LogView(log)
    micro = sum(view.kind[b] == "M" for b in view.main_chain)
    keys = sum(view.kind[b] == "K" for b in view.main_chain)
    # at most ten per epoch, fewer when a leader's tail is pruned by the next key block
    assert 7 <= micro / keys <= 10.5


def test_run_simulation_writes_log(tmp_path):
    p = tmp_path / "run.log"
    log, report = run_simulation(SimConfig(seed=2, **SMALL), log_path=p)
    assert p.read_text() == dumps_event_log(log)
    assert 0 < report.mining_power_utilization <= 1


def test_single_seed_sweep_has_no_spread():
    spec = SweepSpec(SimConfig(**SMALL), "frequency", [30.0], seeds=[0])
    rows = run_sweep(spec)
    for r in rows:
        if r.n:
            assert r.mean == r.min == r.max and r.n == 1
    assert sweep_csv(rows).startswith("axis_value,metric,mean,min,max,n,failures\n")


def test_sweep_continues_past_failures():
    errors = []
    spec = SweepSpec(SimConfig(**SMALL), "size", [20_000, -5], seeds=[0, 1])
    rows = run_sweep(spec, on_error=lambda v, e: errors.append(v))
    bad = [r for r in rows if r.axis_value == -5]
    good = [r for r in rows if r.axis_value == 20_000]
    assert errors == [-5, -5]
    assert all(r.failures == 2 and r.n == 0 and math.isnan(r.mean) for r in bad)
    assert all(r.failures == 0 for r in good)


def test_sweep_frequency_axis_rescales_payload():
    spec = SweepSpec(SimConfig(protocol="ng"), "frequency", [20.0])
    cfg = spec.config_for(20.0, 3)
    assert cfg.microblock_interval_sec == 20.0 and cfg.seed == 3
    assert cfg.microblock_size_bytes == constant_payload_size(20.0)
    fixed = SweepSpec(SimConfig(), "frequency", [20.0], constant_payload=False)
    assert fixed.config_for(20.0, 0).block_size_bytes == 1_000_000
    with pytest.raises(ConfigError):
        SweepSpec(SimConfig(), "latency", [1])
