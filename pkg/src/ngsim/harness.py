"""Experiment driver: configuration, one simulated run, and parameter sweeps."""

from __future__ import annotations

import dataclasses
import itertools
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bitcoin import BitcoinNode
from .chain import Mempool, Protocol
from .eventlog import EventLog, write_event_log
from .metrics import MetricsReport, compute_metrics
from .mining import MinerPower, MineSchedule, assign_powers
from .network import (DEFAULT_BANDWIDTH, EventQueue, LatencyHistogram, Network,
                      generate_topology)
from .ng import ForkingLeaderNode, NgNode, Remuneration

CONFIG_DIR_ENV = "NGSIM_CONFIG_DIR"
REFERENCE_PAYLOAD_BYTES = 1_000_000
REFERENCE_INTERVAL = 600.0


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    protocol: str = "bitcoin"
    n_nodes: int = 100
    min_degree: int = 5
    latency_histogram_path: Optional[str] = None
    bandwidth_bits_per_sec: float = DEFAULT_BANDWIDTH
    power_exponent: float = -0.27
    miners_per_rank: int = 1
    block_interval_sec: float = 600.0
    key_interval_sec: float = 100.0
    microblock_interval_sec: float = 10.0
    min_microblock_interval_sec: Optional[float] = None
    block_size_bytes: int = REFERENCE_PAYLOAD_BYTES
    microblock_size_bytes: Optional[int] = None
    tx_size_bytes: int = 476
    mempool_prefill_count: Optional[int] = None
    max_fee: int = 1000
    run_length_blocks: int = 100
    seed: int = 0
    verification_delay_sec_per_byte: float = 0.0
    queued_links: bool = False
    first_seen: bool = False
    adversary_node: Optional[int] = None
    adversary_fork_count: int = 0
    power_step_time: Optional[float] = None
    power_step_factor: float = 1.0
    epsilon: float = 0.9
    delta: float = 0.9
    warmup_fraction: float = 0.05

    def __post_init__(self):
        self.protocol = Protocol(str(self.protocol).lower()).value

    @property
    def is_ng(self) -> bool:
        return self.protocol == Protocol.NG.value

    @property
    def payload_limit(self) -> int:
        """Transaction bytes per block (Bitcoin) or microblock (NG)."""
        if self.is_ng:
            if self.microblock_size_bytes is not None:
                return int(self.microblock_size_bytes)
            return constant_payload_size(self.microblock_interval_sec)
        return int(self.block_size_bytes)

    @property
    def configured_tps(self) -> float:
        interval = self.microblock_interval_sec if self.is_ng else self.block_interval_sec
        return (self.payload_limit // self.tx_size_bytes) / interval

    def validate(self) -> None:
        problems = []
        positive = ["n_nodes", "bandwidth_bits_per_sec", "tx_size_bytes", "run_length_blocks",
                    "block_interval_sec", "key_interval_sec", "microblock_interval_sec",
                    "miners_per_rank"]
        for name in positive:
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if self.min_degree < 1 or self.min_degree >= self.n_nodes:
            problems.append("min_degree must be in [1, n_nodes)")
        if self.payload_limit < 0:
            problems.append("block_size_bytes must be non-negative")
        if self.verification_delay_sec_per_byte < 0:
            problems.append("verification_delay_sec_per_byte must be non-negative")
        for name in ("epsilon", "delta"):
            if not 0 < getattr(self, name) <= 1:
                problems.append(f"{name} must be in (0, 1]")
        if self.power_step_factor <= 0:
            problems.append("power_step_factor must be positive")
        if not 0 <= self.warmup_fraction < 1:
            problems.append("warmup_fraction must be in [0, 1)")
        mi = self.min_microblock_interval_sec
        if mi is not None and self.microblock_interval_sec < mi:
            problems.append("microblock_interval_sec must be >= min_microblock_interval_sec")
        if self.adversary_node is not None:
            if not self.is_ng:
                problems.append("adversary_node requires protocol ng")
            elif not 0 <= self.adversary_node < self.n_nodes:
                problems.append("adversary_node out of range")
        if self.latency_histogram_path and not Path(self.latency_histogram_path).is_file():
            problems.append(f"latency_histogram_path: no such file "
                            f"{self.latency_histogram_path!r}")
        if problems:
            raise ConfigError("; ".join(problems))

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


def constant_payload_size(interval: float) -> int:
    """Block size carrying the reference payload rate at ``interval``."""
    return int(round(REFERENCE_PAYLOAD_BYTES * interval / REFERENCE_INTERVAL))


def _coerce(ftype, raw: str):
    raw = raw.strip()
    t = str(ftype)
    if raw.lower() in ("none", "") and "Optional" in t:
        return None
    if "bool" in t:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if "int" in t:
        return int(float(raw)) if float(raw).is_integer() else int(raw)
    if "float" in t:
        return float(raw)
    return raw


CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}


def config_from_mapping(values: dict, base: SimConfig | None = None) -> SimConfig:
    changes = {}
    for key, raw in values.items():
        if key not in CONFIG_FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            changes[key] = raw if not isinstance(raw, str) else _coerce(CONFIG_FIELDS[key].type, raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return dataclasses.replace(base or SimConfig(), **changes)


def parse_config(text: str, source: str = "<string>", base: SimConfig | None = None) -> SimConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        values[key.strip()] = value.strip()
    try:
        return config_from_mapping(values, base)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def resolve_config_path(name) -> Path:
    """Relative names not found in the working directory are looked up in
    the directory named by ``NGSIM_CONFIG_DIR``."""
    p = Path(name)
    if p.is_file() or p.is_absolute():
        return p
    d = os.environ.get(CONFIG_DIR_ENV)
    if d and (Path(d) / p).is_file():
        return Path(d) / p
    return p


def load_config(path, base: SimConfig | None = None) -> SimConfig:
    p = resolve_config_path(path)
    return parse_config(p.read_text(), str(p), base)


def dumps_config(cfg: SimConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in dataclasses.asdict(cfg).items())


class Simulation:
    """One run.  All randomness derives from ``config.seed``."""

    def __init__(self, config: SimConfig):
        config.validate()
        self.config = cfg = config
        ss = np.random.SeedSequence(cfg.seed)
        topo_ss, sched_ss, perm_ss, pool_ss, nodes_ss = ss.spawn(5)
        hist = (LatencyHistogram.from_file(cfg.latency_histogram_path)
                if cfg.latency_histogram_path else LatencyHistogram.default())
        self.topology = generate_topology(cfg.n_nodes, cfg.min_degree, hist,
                                          cfg.bandwidth_bits_per_sec, seed=topo_ss)
        ranked = assign_powers(cfg.n_nodes, cfg.power_exponent, cfg.miners_per_rank)
        perm = np.random.default_rng(perm_ss).permutation(cfg.n_nodes)
        self.powers = [0.0] * cfg.n_nodes
        for mp, node in zip(ranked, perm):
            self.powers[int(node)] = mp.power
        interval = cfg.key_interval_sec if cfg.is_ng else cfg.block_interval_sec
        self.schedule = MineSchedule(interval,
                                     [MinerPower(i, p) for i, p in enumerate(self.powers)],
                                     seed=sched_ss)
        per_block = cfg.payload_limit // cfg.tx_size_bytes
        prefill = cfg.mempool_prefill_count
        if prefill is None:
            prefill = per_block * cfg.run_length_blocks
        self.mempool = Mempool.prefilled(prefill, cfg.tx_size_bytes,
                                         np.random.default_rng(pool_ss), cfg.max_fee)
        self.log = EventLog(meta=self._meta())
        self.queue = EventQueue()
        self.network = Network(self.topology, self.queue, cfg.verification_delay_sec_per_byte,
                               cfg.queued_links)
        ids = itertools.count(1)
        node_rngs = [np.random.default_rng(s) for s in nodes_ss.spawn(cfg.n_nodes)]
        self.nodes = [self._make_node(i, ids, node_rngs[i]) for i in range(cfg.n_nodes)]
        self.generated = 0
        self.stopped = False
        self._mine_token = 0

    def _meta(self) -> dict:
        cfg = self.config
        meta = {k: str(v) for k, v in dataclasses.asdict(cfg).items() if v is not None}
        meta["powers"] = ",".join(repr(p) for p in self.powers)
        return meta

    def _make_node(self, i, ids, rng):
        cfg = self.config
        common = dict(log=self.log, rng=rng, first_seen=cfg.first_seen, ids=ids)
        if not cfg.is_ng:
            return BitcoinNode(i, self.mempool, **common)
        kwargs = dict(common, microblock_interval=cfg.microblock_interval_sec,
                      min_interval=cfg.min_microblock_interval_sec,
                      microblock_size_limit=cfg.payload_limit, remuneration=Remuneration())
        if i == cfg.adversary_node and cfg.adversary_fork_count >= 2:
            node = ForkingLeaderNode(i, self.mempool, fork_count=cfg.adversary_fork_count,
                                     **kwargs)
        else:
            node = NgNode(i, self.mempool, **kwargs)
        node.neighbors = list(self.topology.adjacency[i])
        return node

    def _flush_timers(self, node) -> None:
        reqs = getattr(node, "timer_requests", None)
        if reqs:
            for at, token in reqs:
                self.queue.push(at, "timer", (node.node_id, token))
            reqs.clear()

    def _count(self, n: int) -> None:
        self.generated += n
        if self.generated >= self.config.run_length_blocks and not self.stopped:
            self.stopped = True
            for node in self.nodes:
                if hasattr(node, "stop"):
                    node.stop()

    def _schedule_mine(self, now: float) -> None:
        # a pending mine event is invalidated by bumping the token
        self._mine_token += 1
        t, miner = self.schedule.next_mine_event(now)
        self.queue.push(t, "mine", (miner, self._mine_token))

    def run(self) -> EventLog:
        cfg = self.config
        q, net = self.queue, self.network
        self._schedule_mine(0.0)
        if cfg.power_step_time is not None:
            q.push(cfg.power_step_time, "power", cfg.power_step_factor)
        while q:
            t, _, kind, payload = q.pop()
            if kind == "arrive":
                u, v, block = payload
                node = self.nodes[v]
                for b in node.receive(block, t):
                    net.send(v, b, t, exclude=u if b is block else None)
                self._flush_timers(node)
            elif kind == "timer":
                node = self.nodes[payload[0]]
                out = node.on_microblock_timer(t, payload[1])
                for b, targets in out:
                    if targets is None:
                        net.send(node.node_id, b, t)
                    else:
                        net.send_to(node.node_id, targets, b, t)
                self._flush_timers(node)
                if out:
                    self._count(len(out))
            elif kind == "power":
                # memoryless race: redraw the next block at the new rate
                self.schedule.scale_total_power(payload)
                if not self.stopped:
                    self._schedule_mine(t)
            elif kind == "mine":
                miner, token = payload
                if self.stopped or token != self._mine_token:
                    continue
                node = self.nodes[miner]
                if cfg.is_ng:
                    block = node.on_key_block_trigger(t)
                else:
                    block = node.on_mine_trigger(t, cfg.payload_limit)
                net.send(node.node_id, block, t)
                self._flush_timers(node)
                if not cfg.is_ng:
                    self._count(1)
                if not self.stopped:
                    self._schedule_mine(t)
        # quiescence: every message delivered, no pending timers
        assert not q
        return self.log


def run_simulation(config: SimConfig, log_path=None) -> tuple[EventLog, MetricsReport]:
    sim = Simulation(config)
    log = sim.run()
    if log_path is not None:
        write_event_log(log, log_path)
    report = compute_metrics(log, config.epsilon, config.delta,
                             warmup_fraction=config.warmup_fraction, powers=sim.powers)
    return log, report


AXES = ("frequency", "size")


@dataclass
class SweepSpec:
    base: SimConfig
    axis: str
    values: list
    constant_payload: bool = True
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if not self.seeds:
            raise ConfigError("sweep needs at least one seed")

    def config_for(self, value, seed) -> SimConfig:
        """``frequency`` values are block (NG: microblock) intervals in
        seconds; ``size`` values are payload bytes."""
        cfg = self.base.replace(seed=seed)
        if self.axis == "frequency":
            interval = float(value)
            if cfg.is_ng:
                cfg = cfg.replace(microblock_interval_sec=interval)
                if self.constant_payload:
                    cfg = cfg.replace(microblock_size_bytes=constant_payload_size(interval))
            else:
                cfg = cfg.replace(block_interval_sec=interval)
                if self.constant_payload:
                    cfg = cfg.replace(block_size_bytes=constant_payload_size(interval))
        else:
            size = int(value)
            cfg = cfg.replace(**{"microblock_size_bytes" if cfg.is_ng else "block_size_bytes": size})
        return cfg


SWEEP_METRICS = [f.name for f in dataclasses.fields(MetricsReport)] + ["configured_tps"]


@dataclass
class SweepRow:
    axis_value: float
    metric: str
    mean: float
    min: float
    max: float
    n: int
    failures: int

    def to_csv(self) -> str:
        return (f"{self.axis_value!r},{self.metric},{self.mean!r},{self.min!r},{self.max!r},"
                f"{self.n},{self.failures}")


SWEEP_CSV_HEADER = "axis_value,metric,mean,min,max,n,failures"


def _one_point(cfg: SimConfig):
    _, report = run_simulation(cfg)
    vals = dataclasses.asdict(report)
    vals["configured_tps"] = cfg.configured_tps
    return vals


def run_sweep(spec: SweepSpec, workers: int = 1, on_error=None) -> list[SweepRow]:
    """Aggregate metrics over seeds per axis value.  A failed run is counted
    in ``failures`` and the sweep continues."""
    jobs = [(v, s, spec.config_for(v, s)) for v in spec.values for s in spec.seeds]
    results = {}
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            futs = {(v, s): pool.submit(_one_point, cfg) for v, s, cfg in jobs}
            for key, fut in futs.items():
                try:
                    results[key] = fut.result()
                except Exception as exc:  # noqa: BLE001 - reported, sweep continues
                    results[key] = exc
    else:
        for v, s, cfg in jobs:
            try:
                results[(v, s)] = _one_point(cfg)
            except Exception as exc:  # noqa: BLE001
                results[(v, s)] = exc
    rows = []
    for v in spec.values:
        runs = [results[(v, s)] for s in spec.seeds]
        ok = [r for r in runs if not isinstance(r, Exception)]
        failed = len(runs) - len(ok)
        if failed and on_error is not None:
            for r in runs:
                if isinstance(r, Exception):
                    on_error(v, r)
        for m in SWEEP_METRICS:
            xs = [float(r[m]) for r in ok if not math.isnan(float(r[m]))]
            if xs:
                rows.append(SweepRow(float(v), m, float(np.mean(xs)), min(xs), max(xs),
                                     len(xs), failed))
            else:
                rows.append(SweepRow(float(v), m, math.nan, math.nan, math.nan, 0, failed))
    return rows


def sweep_csv(rows) -> str:
    return SWEEP_CSV_HEADER + "\n" + "".join(r.to_csv() + "\n" for r in rows)
