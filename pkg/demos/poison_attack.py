"""A leader that signs several conflicting microblocks gets caught.

The strongest miner is made to equivocate whenever it leads.  An honest
successor places a poison transaction, the cheater's epoch revenue is
voided and the poisoner keeps a twentieth of it.
"""
from ngsim import SimConfig, Simulation
from ngsim.metrics import LogView
from ngsim.ng import RevenueLedger, poisons_on_path

cfg = SimConfig(protocol="ng", n_nodes=11, run_length_blocks=80, microblock_interval_sec=10,
                adversary_fork_count=3, seed=0)
powers = Simulation(cfg).powers
cheater = max(range(cfg.n_nodes), key=powers.__getitem__)
print(f"cheater: node {cheater} with {powers[cheater]:.1%} of the mining power")

sim = Simulation(cfg.replace(adversary_node=cheater))
log = sim.run()
tip = LogView(log).main_tip
tree = sim.nodes[(cheater + 1) % cfg.n_nodes].tree

for who, micro in poisons_on_path(tree, tip).items():
    p = tree[micro].poisons[0]
    print(f"poison against node {who} in microblock {micro} mined by node {tree[micro].miner}, "
          f"epoch {p.placed_after}")

out = RevenueLedger.from_chain(tree, tip).outcomes[cheater]
print(f"voided {float(out.voided):.1f}, poisoner credit {float(out.poisoner_credit):.2f}, "
      f"destroyed {float(out.destroyed):.1f}")
