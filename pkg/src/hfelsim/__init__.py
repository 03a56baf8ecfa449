"""Two-tier hierarchical federated edge learning simulator and optimizer.

Joint per-round device resource allocation (bandwidth, CPU frequency) and
edge-backhaul topology design minimizing training latency under
per-device energy budgets and a model-consensus constraint.
"""

from .alloc import (Allocation, EnergyLedger, InfeasibleAllocationError,
                    solve_round_allocation, solve_with_caps)
from .config import ScenarioConfig, load_config
from .cost import ChannelState, DeviceProfile, Hyperparams
from .graphs import BackhaulGraph
from .harness import build_world, emit_outputs, run
from .topology import ConsensusMatrix, TopologyDecision, design_topology

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "BackhaulGraph",
    "ChannelState",
    "ConsensusMatrix",
    "DeviceProfile",
    "EnergyLedger",
    "Hyperparams",
    "InfeasibleAllocationError",
    "ScenarioConfig",
    "TopologyDecision",
    "build_world",
    "design_topology",
    "emit_outputs",
    "load_config",
    "run",
    "solve_round_allocation",
    "solve_with_caps",
    "__version__",
]
