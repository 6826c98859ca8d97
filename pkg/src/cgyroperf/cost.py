"""Per-step time estimates from traffic and machine capacity.

Communication uses a bandwidth-only bottleneck model: a phase lasts as long
as its most loaded entity needs to push its bytes through its link, phases
run back to back. Compute follows a two-term Amdahl law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from cgyroperf.decomp import ProblemSpec, build_grid
from cgyroperf.kvdoc import SpecError
from cgyroperf.topology import (
    Machine,
    cross_domain_bytes_per_ms,
    host_link_bytes_per_ms,
    node_egress_bytes_per_ms,
    unit_fabric_bytes_per_ms,
)
from cgyroperf.traffic import PhaseTraffic, TrafficBreakdown, accumulate_traffic, make_placement


class InfeasibleError(Exception):
    """The problem does not fit in the memory of the requested resources."""


@dataclass(frozen=True)
class ComputeCalib:
    """Amdahl compute model: ``w_par / (units * rel_throughput) + w_ser``.

    ``w_par`` is in A100-equivalent unit-ms, ``w_ser`` in ms.
    """

    w_par: float
    w_ser: float = 0.0

    def __post_init__(self) -> None:
        if self.w_par < 0 or self.w_ser < 0:
            raise SpecError(f"compute calibration must be nonnegative, got w_par={self.w_par}, w_ser={self.w_ser}")


@dataclass(frozen=True)
class StepEstimate:
    compute_ms: float
    comm_ms: float
    other_ms: float
    step_ms: float
    fraction_in_compute: float
    phase_ms: tuple[tuple[str, float], ...] = ()
    bottleneck: tuple[tuple[str, str], ...] = ()
    traffic: TrafficBreakdown | None = field(default=None, compare=False, repr=False)

    @property
    def fraction_pct(self) -> int:
        return fraction_in_compute(self.step_ms, self.compute_ms) if self.step_ms > 0 else 100


def compute_time_ms(calib: ComputeCalib, machine: Machine, nodes_used: int, units_used: int | None = None) -> float:
    if units_used is None:
        units_used = nodes_used * machine.units_per_node
    if units_used < 1:
        raise SpecError(f"units_used must be >= 1, got {units_used}")
    return calib.w_par / (units_used * machine.node.unit.rel_throughput) + calib.w_ser


def _ratio(gb: float, capacity: float) -> float:
    if gb <= 0:
        return 0.0
    return gb / capacity


def phase_class_times(pt: PhaseTraffic, machine: Machine, route_host_pcie: bool = False) -> dict[str, float]:
    """Bottleneck time of every link class for one phase (local is free)."""
    times = {
        "local": 0.0,
        "fabric": _ratio(_max(pt.unit_fabric_gb), unit_fabric_bytes_per_ms(machine)),
        "cross_domain": _ratio(_max(pt.node_cross_gb), cross_domain_bytes_per_ms(machine)),
        "internode": _ratio(_max(pt.node_internode_gb), node_egress_bytes_per_ms(machine)),
    }
    if route_host_pcie:
        times["host_pcie"] = _ratio(_max(pt.unit_internode_gb), host_link_bytes_per_ms(machine))
    return times


def _max(arr) -> float:
    return float(arr.max()) if len(arr) else 0.0


def phase_time_ms(pt: PhaseTraffic, machine: Machine, route_host_pcie: bool = False) -> tuple[float, str]:
    times = phase_class_times(pt, machine, route_host_pcie)
    cls = max(times, key=lambda c: times[c])
    return times[cls], (cls if times[cls] > 0 else "local")


def comm_time_ms(breakdown: TrafficBreakdown, machine: Machine, route_host_pcie: bool = False) -> float:
    return math.fsum(phase_time_ms(pt, machine, route_host_pcie)[0] for pt in breakdown.phases)


def memory_feasible(
    problem: ProblemSpec, machine: Machine, nodes_used: int, units_per_node: int | None = None
) -> tuple[bool, str]:
    upn = machine.units_per_node if units_per_node is None else units_per_node
    mem = machine.node.unit.mem_gb
    have = nodes_used * upn * mem
    need = problem.min_total_gpu_mem_gb
    detail = f"{nodes_used} node(s) x {upn} x {mem:g} GB = {have:g} GB"
    if have >= need:
        return True, f"{detail} >= {need:g} GB required by {problem.name}"
    return False, f"{detail} < {need:g} GB required by {problem.name}"


def fraction_in_compute(step_ms: float, compute_ms: float) -> int:
    """Compute share of the step as an integer percent, rounded half up."""
    if not step_ms > 0:
        raise ValueError(f"step_ms must be > 0, got {step_ms}")
    if not 0 <= compute_ms <= step_ms:
        raise ValueError(f"compute_ms must be in [0, step_ms], got {compute_ms} for step {step_ms}")
    pct = Decimal(repr(float(compute_ms))) * 100 / Decimal(repr(float(step_ms)))
    return int(pct.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def estimate_step(
    problem: ProblemSpec,
    machine: Machine,
    nodes_used: int,
    ranks_per_unit: int = 1,
    strategy: str = "block_comm1",
    calib: ComputeCalib | None = None,
    other_ms: float = 0.0,
    units_per_node: int | None = None,
    explicit=None,
    route_host_pcie: bool = False,
) -> StepEstimate:
    if nodes_used < 1 or ranks_per_unit < 1:
        raise SpecError("nodes_used and ranks_per_unit must be positive")
    ok, why = memory_feasible(problem, machine, nodes_used, units_per_node)
    if not ok:
        raise InfeasibleError(f"infeasible: {why}")
    upn = machine.units_per_node if units_per_node is None else units_per_node
    if calib is None:
        calib = ComputeCalib(problem.ref_work_ms, 0.0)
    grid = build_grid(problem, nodes_used * upn * ranks_per_unit)
    placement = make_placement(grid, machine, nodes_used, ranks_per_unit, strategy, upn, explicit)
    traffic = accumulate_traffic(grid, problem.phases, placement, machine)

    phase_ms = []
    bottleneck = []
    for pt in traffic.phases:
        t, cls = phase_time_ms(pt, machine, route_host_pcie)
        phase_ms.append((pt.phase.label, t))
        bottleneck.append((pt.phase.label, cls))
    comm = math.fsum(t for _, t in phase_ms)
    compute = compute_time_ms(calib, machine, nodes_used, nodes_used * upn)
    step = compute + comm + other_ms
    frac = compute / step if step > 0 else 1.0
    return StepEstimate(compute, comm, other_ms, step, frac, tuple(phase_ms), tuple(bottleneck), traffic)
