"""Bandwidth-bottleneck performance model for grid-decomposed solvers.

Predicts per-step compute and communication time for a two-communicator
rank grid (the CGYRO decomposition) placed onto hierarchical GPU/CPU
machines, fits the model to measured step timings, and searches process
placements.
"""

from cgyroperf.kvdoc import SpecError
from cgyroperf.topology import (
    ComputeUnit,
    Fabric,
    Machine,
    Nic,
    NodeSpec,
    build_hypothetical_nvswitch,
    build_machine,
    load_preset,
    node_egress_bytes_per_ms,
    unit_fabric_bytes_per_ms,
)
from cgyroperf.decomp import PhaseSpec, ProblemSpec, RankGrid, build_grid, load_problem
from cgyroperf.traffic import Placement, TrafficBreakdown, accumulate_traffic, make_placement
from cgyroperf.cost import ComputeCalib, StepEstimate, estimate_step, memory_feasible

__all__ = [
    "ComputeCalib",
    "ComputeUnit",
    "Fabric",
    "Machine",
    "Nic",
    "NodeSpec",
    "PhaseSpec",
    "Placement",
    "ProblemSpec",
    "RankGrid",
    "SpecError",
    "StepEstimate",
    "TrafficBreakdown",
    "accumulate_traffic",
    "build_grid",
    "build_hypothetical_nvswitch",
    "build_machine",
    "estimate_step",
    "load_preset",
    "load_problem",
    "make_placement",
    "memory_feasible",
    "node_egress_bytes_per_ms",
    "unit_fabric_bytes_per_ms",
]
