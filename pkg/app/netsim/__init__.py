# Copyright (c) 2024. All rights reserved.
"""Slotted network simulator: routing and load-balancing scenarios as performance oracles."""

from app.netsim.evaluation import PolicyEvaluation, evaluate_policy, pooled_standard_error, summarize
from app.netsim.loadbalance import LoadBalanceScenario
from app.netsim.oracles import (
    NoiseLaw,
    SimulationOracle,
    SyntheticOracle,
    TraceRow,
    as_oracle,
    synthetic_oracle,
    write_trace_csv,
)
from app.netsim.routing import PacketOutcome, RoutingScenario, route_packet
from app.netsim.state import SlotResult, WorldState, sync_ticks
from app.netsim.topology import Topology, generate_topology

__all__ = [
    "LoadBalanceScenario",
    "NoiseLaw",
    "PacketOutcome",
    "PolicyEvaluation",
    "RoutingScenario",
    "SimulationOracle",
    "SlotResult",
    "SyntheticOracle",
    "Topology",
    "TraceRow",
    "WorldState",
    "as_oracle",
    "evaluate_policy",
    "generate_topology",
    "pooled_standard_error",
    "route_packet",
    "run_slot",
    "summarize",
    "sync_ticks",
    "synthetic_oracle",
    "write_trace_csv",
]


def run_slot(scenario, state: WorldState, policy, slot: int) -> SlotResult:
    """Advance ``state`` through one slot of ``scenario`` under ``policy``."""
    return scenario.run_slot(state, policy, slot)
