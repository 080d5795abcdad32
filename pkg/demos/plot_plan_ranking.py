"""
Ranking restoration plans for one hypothesis
============================================

Given a fault between RSD16 and RSD18 with CB1 open, list every
admissible level-1 plan and its utility.
"""

from supplyrestore import Candidate, UtilityWeights, example_network
from supplyrestore.planner import generate_plans, rank_plans
import numpy as np

topo = example_network()
cand = Candidate.from_dict(topo, {"positions": {"CB1": "open"}, "fault_areas": ["L16"]})

ranked = rank_plans(generate_plans(topo, cand), cand, topo, UtilityWeights())
print(f"{len(ranked)} plans")
for p, score in ranked[:5]:
    print(f"{score:10.2f}  {p}")

# Utilities cluster by how much load each plan brings back
scores = np.array([s for _, s in ranked])
print("distinct load levels:", np.unique(np.round(scores, -3)) // 1000)
