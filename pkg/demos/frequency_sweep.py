"""Bitcoin vs NG as blocks get faster, payload rate held constant.

Runs a short sweep (3 seeds, 100 nodes) and prints one table per protocol.
Takes about a minute.
"""
from ngsim import SimConfig, SweepSpec, run_sweep

SEEDS = [0, 1, 2]
COLUMNS = ["mining_power_utilization", "fairness", "consensus_delay", "time_to_prune"]


def table(title, rows, values):
    by = {(r.axis_value, r.metric): r.mean for r in rows}
    print(f"\n{title}")
    print("interval_s  " + "  ".join(f"{c[:12]:>12}" for c in COLUMNS))
    for v in values:
        cells = [by[(float(v), c)] for c in COLUMNS]
        print(f"{v:>10}  " + "  ".join(f"{x:12.4g}" for x in cells))


# %% Bitcoin: shorter intervals mean smaller blocks, same tx/s
btc_values = [600, 100, 30, 10]
btc = run_sweep(SweepSpec(SimConfig(n_nodes=100), "frequency", btc_values, seeds=SEEDS))
table("bitcoin (block interval)", btc, btc_values)

# %% NG: key blocks every 100 s, the microblock interval is the axis
ng_values = [100, 30, 10]
ng = run_sweep(SweepSpec(SimConfig(protocol="ng", n_nodes=100, key_interval_sec=100),
                         "frequency", ng_values, seeds=SEEDS))
table("ng (microblock interval)", ng, ng_values)

# %% agreement is faster in NG at the same transaction frequency
def delay_at(rows, v):
    return next(r.mean for r in rows if r.axis_value == v and r.metric == "consensus_delay")


print(f"\nconsensus delay at 10 s: bitcoin {delay_at(btc, 10.0):.3g} s, ng {delay_at(ng, 10.0):.3g} s")
