"""Discrete-event simulator comparing Nakamoto-style blockchains with
Bitcoin-NG, with consensus metrics and incentive bounds."""

from .chain import Block, BlockKind, BlockTree, Mempool, Protocol, select_main_chain
from .eventlog import EventLog, read_event_log, write_event_log
from .harness import SimConfig, Simulation, SweepSpec, run_simulation, run_sweep
from .metrics import MetricsReport, compute_metrics

__all__ = [
    "Block", "BlockKind", "BlockTree", "EventLog", "Mempool", "MetricsReport", "Protocol",
    "SimConfig", "Simulation", "SweepSpec", "compute_metrics", "read_event_log",
    "run_simulation", "run_sweep", "select_main_chain", "write_event_log",
]

__version__ = "0.1.0"
