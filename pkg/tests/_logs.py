"""Hand-written event logs for metric tests."""

from ngsim.eventlog import EventLog


def hand_log(rows, n_nodes, powers=None) -> EventLog:
    """rows: (time, node, action, block, parent, kind, miner)."""
    log = EventLog(meta={"n_nodes": str(n_nodes)})
    if powers is not None:
        log.meta["powers"] = ",".join(repr(float(p)) for p in powers)
    for t, node, action, block, parent, kind, miner in rows:
        log.append(t, node, action, block, parent, kind, miner)
    return log


def three_node_agreement_log() -> EventLog:
    # nodes a=0, b=1, c=2 extend one chain 1 <- 2 <- 3 and learn of it late
    return hand_log([
        (1.0, 0, "gen", 1, 0, "B", 0),
        (2.0, 1, "recv", 1, 0, "B", 0),
        (2.5, 1, "gen", 2, 1, "B", 1),
        (3.4, 2, "recv", 1, 0, "B", 0),
        (4.0, 2, "recv", 2, 1, "B", 1),
        (5.0, 2, "gen", 3, 2, "B", 2),
        (5.3, 1, "recv", 3, 2, "B", 2),
        (5.5, 0, "recv", 2, 1, "B", 1),
        (6.0, 0, "recv", 3, 2, "B", 2),
    ], 3)


def single_fork_log() -> EventLog:
    # A (node 0) and A' (node 1) at height 1; B on A resolves the fork
    return hand_log([
        (1.0, 0, "gen", 1, 0, "B", 0),
        (1.5, 1, "gen", 2, 0, "B", 1),
        (2.0, 2, "recv", 1, 0, "B", 0),
        (2.2, 1, "recv", 1, 0, "B", 0),
        (2.5, 0, "recv", 2, 0, "B", 1),
        (3.0, 2, "recv", 2, 0, "B", 1),
        (4.0, 0, "gen", 3, 1, "B", 0),
        (5.0, 1, "recv", 3, 1, "B", 0),
        (5.0, 1, "switch", 3, 2, "B", 0),
        (5.5, 2, "recv", 3, 1, "B", 0),
    ], 3, powers=[0.5, 0.3, 0.2])


def lagging_log(n_blocks=60) -> EventLog:
    """Node 0 mines a block every second; nodes 1, 2, 3 learn each block 11,
    21 and 31 seconds after it is created.  Two nodes always agree on the
    history up to exactly 10 seconds ago."""
    rows = []
    lags = {1: 11, 2: 21, 3: 31}
    for i in range(1, n_blocks + 1):
        rows.append((float(i), 0, "gen", i, i - 1, "B", 0))
        for node, lag in lags.items():
            rows.append((float(i + lag), node, "recv", i, i - 1, "B", 0))
    rows.sort(key=lambda r: (r[0], r[1]))
    return hand_log(rows, 4)
