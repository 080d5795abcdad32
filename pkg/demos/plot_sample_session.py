"""
Restoring the example network after a double fault
===================================================

Feeder CB1 trips. Two lines behind it are faulty, one fault detector
lies and the actuator of RSD11 reports an open it never performed.
The engine recovers the true state after one escalation.
"""

from supplyrestore import data_path, example_network, init_world, observe, restore
from supplyrestore.world import Scenario
import json

topo = example_network()
scenario = Scenario.from_dict(json.loads(data_path("sample_session.json").read_text()))
world = init_world(topo, scenario)

# What the operator sees right after the incident
obs = observe(topo, world)
print("open breakers:", [cb for cb, p in obs.cb_positions.items() if p.value == "open"])
print("FDs seeing a fault downstream:", sorted(d for d, r in obs.fd_readings.items() if r.value == "fault_downstream"))

# Run the closed loop and print the trace
session = restore(topo, world)
print(session.trace.render())

# The belief shrinks and grows as observations arrive and levels rise
for step, b in enumerate(session.beliefs):
    top, p = b.ranked()[0]
    print(f"step {step:2d}  k={b.k}  {len(b):3d} candidates  "
          f"top {sorted(top.fault_areas)} p={p:.3f}")
