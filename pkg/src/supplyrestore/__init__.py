"""Closed-loop supply restoration for faulty radial distribution networks."""

from importlib import resources

from .belief import (
    AllPruned,
    Belief,
    Candidate,
    Priors,
    condition,
    deduce_fd_modes,
    enumerate_fault_combos,
    initial_distribution,
    most_probable,
    predict,
)
from .engine import (
    RestorationAborted,
    Session,
    SessionConfig,
    Trace,
    escalate,
    expected_successor,
    restore,
)
from .planner import (
    Plan,
    UtilityWeights,
    explore,
    extension_points,
    plan,
    plan_utility,
    rank_plans,
)
from .topology import (
    NetworkTopology,
    Position,
    StructuralError,
    TopologyError,
    areas,
    downstream_children,
    feeders,
    load_network,
    position_of,
    power_report,
)
from .world import (
    Mode,
    Observation,
    Scenario,
    StochasticConfig,
    SwitchOp,
    WorldState,
    execute_switch,
    init_world,
    observe,
)

__version__ = "0.1.0"


def data_path(name: str):
    """Path to a bundled fixture (example network, sample scenario, default config)."""
    return resources.files(__name__).joinpath("data", name)


def example_network() -> NetworkTopology:
    return load_network(data_path("example_network.json").read_text())
