"""
Monte Carlo over random incidents
=================================

Draw random fault scenarios with noisy actuators and tally how
sessions end, how many operations they take and how much load
stays unfed.
"""

import numpy as np

from supplyrestore import SessionConfig, StochasticConfig, example_network, init_world, restore
from supplyrestore.engine import OP
from supplyrestore.world import random_scenario

topo = example_network()
load = {ln: topo.lines[ln].load_kw for ln in topo.lines}

n = 200
ops = np.zeros(n, dtype=int)
unfed_kw = np.zeros(n)
finished = np.zeros(n, dtype=bool)
for seed in range(n):
    cfg = SessionConfig(stochastic=StochasticConfig(0.05, 0.05, seed))
    s = restore(topo, init_world(topo, random_scenario(topo, seed)), cfg)
    end = s.trace.events[-1].data
    ops[seed] = len(s.trace.of(OP))
    finished[seed] = s.trace.outcome == "Finished"
    unfed_kw[seed] = sum(load[ln] for ln in end.get("unfed", []))

print(f"finished {finished.sum()}/{n}")
print(f"operations: mean {ops.mean():.2f}, max {ops.max()}")
print(f"unfed load: median {np.median(unfed_kw):.0f} kW, 95th pct {np.percentile(unfed_kw, 95):.0f} kW")
