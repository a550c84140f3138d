"""Per-node event timeline and its line-oriented file format.

File layout::

    # ngsim-event-log v1
    #meta <key>=<value>          (zero or more)
    time node action block parent kind miner epoch tx_count size_bytes
    <one tab-separated record per line>

``action`` is ``gen``, ``recv`` or ``switch``.  For ``switch`` records,
``block`` is the node's new tip and ``parent`` its previous tip.  Times are
written with ``repr`` so a round trip is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

MAGIC = "# ngsim-event-log v1"
COLUMNS = ("time", "node", "action", "block", "parent", "kind", "miner", "epoch",
           "tx_count", "size_bytes")

GENERATE = "gen"
RECEIVE = "recv"
SWITCH = "switch"
ACTIONS = (GENERATE, RECEIVE, SWITCH)


class EventLogError(ValueError):
    pass


class EventRecord(NamedTuple):
    time: float
    node: int
    action: str
    block: int
    parent: int
    kind: str
    miner: int
    epoch: int
    tx_count: int
    size_bytes: int


@dataclass
class EventLog:
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, time, node, action, block, parent, kind, miner, epoch=-1,
               tx_count=0, size_bytes=0) -> None:
        self.records.append(EventRecord(float(time), int(node), action, block, parent,
                                        kind, int(miner), epoch, int(tx_count),
                                        int(size_bytes)))

    def log_block(self, time, node, action, block, epoch=-1) -> None:
        self.append(time, node, action, block.id, block.parent, block.kind.value,
                    block.miner, epoch, block.tx_count, block.size_bytes)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def n_nodes(self) -> int:
        if "n_nodes" in self.meta:
            return int(self.meta["n_nodes"])
        return max((r.node for r in self.records), default=-1) + 1

    @property
    def powers(self) -> Optional[list]:
        if "powers" not in self.meta:
            return None
        return [float(x) for x in str(self.meta["powers"]).split(",")]

    def without_kind(self, kind: str) -> "EventLog":
        return EventLog([r for r in self.records if r.kind != kind], dict(self.meta))


def _format_meta(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dumps_event_log(log: EventLog) -> str:
    lines = [MAGIC]
    for k in sorted(log.meta):
        lines.append(f"#meta {k}={_format_meta(log.meta[k])}")
    lines.append("\t".join(COLUMNS))
    for r in log.records:
        lines.append(f"{r.time!r}\t{r.node}\t{r.action}\t{r.block}\t{r.parent}\t{r.kind}\t"
                     f"{r.miner}\t{r.epoch}\t{r.tx_count}\t{r.size_bytes}")
    return "\n".join(lines) + "\n"


def write_event_log(log: EventLog, path) -> None:
    Path(path).write_text(dumps_event_log(log))


def _parse_id(s: str):
    if s == "None":
        return None
    try:
        return int(s)
    except ValueError:
        return s


def loads_event_log(text: str, source: str = "<string>") -> EventLog:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    elif lines:
        # missing final newline means the writer was interrupted mid-line
        raise EventLogError(f"{source}:{len(lines)}: truncated record (no trailing newline)")
    if not lines or lines[0] != MAGIC:
        raise EventLogError(f"{source}:1: missing header {MAGIC!r}")
    meta = {}
    i = 1
    while i < len(lines) and lines[i].startswith("#meta "):
        key, sep, value = lines[i][6:].partition("=")
        if not sep:
            raise EventLogError(f"{source}:{i + 1}: malformed meta line")
        meta[key] = value
        i += 1
    if i >= len(lines) or tuple(lines[i].split("\t")) != COLUMNS:
        raise EventLogError(f"{source}:{i + 1}: missing column header")
    records = []
    for lineno in range(i + 2, len(lines) + 1):
        parts = lines[lineno - 1].split("\t")
        if len(parts) != len(COLUMNS):
            raise EventLogError(f"{source}:{lineno}: expected {len(COLUMNS)} fields, "
                                f"got {len(parts)}")
        try:
            rec = EventRecord(float(parts[0]), int(parts[1]), parts[2], _parse_id(parts[3]),
                              _parse_id(parts[4]), parts[5], int(parts[6]),
                              _parse_id(parts[7]), int(parts[8]), int(parts[9]))
        except ValueError as exc:
            raise EventLogError(f"{source}:{lineno}: {exc}") from None
        if rec.action not in ACTIONS:
            raise EventLogError(f"{source}:{lineno}: unknown action {rec.action!r}")
        records.append(rec)
    return EventLog(records, meta)


def read_event_log(path) -> EventLog:
    return loads_event_log(Path(path).read_text(), source=str(path))
