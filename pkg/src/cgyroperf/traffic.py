"""Byte accounting of collective phases over link classes.

A byte moving between two ranks is charged to exactly one class:

``local``         both ranks on the same compute unit (free)
``fabric``        same node, same fabric island
``cross_domain``  same node, different islands of a ``split_domains`` node
``internode``     different nodes (through the NICs)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from cgyroperf.decomp import PhaseSpec, RankGrid, phase_per_rank_gb
from cgyroperf.kvdoc import SpecError
from cgyroperf.topology import Machine, unit_domain

LINK_CLASSES = ("local", "fabric", "cross_domain", "internode")
STRATEGIES = ("block_comm1", "block_comm2", "round_robin", "explicit")


@dataclass(frozen=True)
class Placement:
    strategy: str
    ranks_per_unit: int
    nodes_used: int
    units_per_node: int
    assignment: tuple[tuple[int, int], ...]  # rank -> (node, unit index on node)

    @property
    def total_units(self) -> int:
        return self.nodes_used * self.units_per_node

    def node_of(self, rank: int) -> int:
        return self.assignment[rank][0]

    def global_unit(self, rank: int) -> int:
        node, unit = self.assignment[rank]
        return node * self.units_per_node + unit

    def ranks_on_node(self, node: int) -> list[int]:
        return [r for r, (n, _) in enumerate(self.assignment) if n == node]


def alltoall_offrank_gb(per_rank_gb: float, p: int) -> float:
    """Bytes one rank sends to its peers in a pairwise alltoall of size ``p``."""
    return per_rank_gb * (p - 1) / p


def allreduce_offrank_gb(per_rank_gb: float, p: int) -> float:
    """Bytes one rank sends in a ring allreduce (reduce-scatter + allgather)."""
    return 2.0 * per_rank_gb * (p - 1) / p


def make_placement(
    grid: RankGrid,
    machine: Machine,
    nodes_used: int,
    ranks_per_unit: int,
    strategy: str = "block_comm1",
    units_per_node: int | None = None,
    explicit: Mapping[int, tuple[int, int]] | Sequence[tuple[int, int]] | None = None,
) -> Placement:
    """Map every rank of ``grid`` to a (node, unit) slot.

    ``block_comm1`` fills units then nodes walking ``i`` fastest (comm1
    neighbours packed together), ``block_comm2`` walks ``j`` fastest, and
    ``round_robin`` deals ranks over units enumerated node-fastest, which
    scatters consecutive ranks across nodes. ``units_per_node`` below the
    machine's unit count models partially populated nodes.
    """
    upn = machine.units_per_node if units_per_node is None else units_per_node
    if not 1 <= upn <= machine.units_per_node:
        raise SpecError(f"units_per_node must be in [1, {machine.units_per_node}], got {upn}")
    if nodes_used < 1 or ranks_per_unit < 1:
        raise SpecError("nodes_used and ranks_per_unit must be positive")
    if nodes_used > machine.max_nodes:
        raise SpecError(f"nodes_used = {nodes_used} exceeds {machine.name} max_nodes = {machine.max_nodes}")
    capacity = nodes_used * upn * ranks_per_unit
    if capacity != grid.total:
        raise SpecError(
            f"capacity mismatch: {nodes_used} nodes x {upn} units x {ranks_per_unit} ranks/unit"
            f" = {capacity} slots for {grid.total} ranks"
        )
    total_units = nodes_used * upn

    if strategy == "explicit":
        if explicit is None:
            raise SpecError("explicit placement needs an assignment map")
        items = explicit if isinstance(explicit, Mapping) else dict(enumerate(explicit))
        if sorted(items) != list(range(grid.total)):
            raise SpecError("explicit assignment must cover every rank exactly once")
        assignment = tuple((int(items[r][0]), int(items[r][1])) for r in range(grid.total))
        load: dict[tuple[int, int], int] = {}
        for node, unit in assignment:
            if not (0 <= node < nodes_used and 0 <= unit < upn):
                raise SpecError(f"explicit slot ({node}, {unit}) outside {nodes_used} nodes x {upn} units")
            load[(node, unit)] = load.get((node, unit), 0) + 1
        if len(load) != total_units or any(v != ranks_per_unit for v in load.values()):
            raise SpecError(f"explicit assignment is not balanced at {ranks_per_unit} ranks per unit")
        return Placement(strategy, ranks_per_unit, nodes_used, upn, assignment)

    ranks = np.arange(grid.total)
    i, j = ranks % grid.n1, ranks // grid.n1
    if strategy == "block_comm1":
        g = ranks // ranks_per_unit
    elif strategy == "block_comm2":
        g = (i * grid.n2 + j) // ranks_per_unit
    elif strategy == "round_robin":
        slot = ranks % total_units
        g = (slot % nodes_used) * upn + slot // nodes_used
    else:
        raise SpecError(f"unknown placement strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")
    assignment = tuple(zip((g // upn).tolist(), (g % upn).tolist()))
    return Placement(strategy, ranks_per_unit, nodes_used, upn, assignment)


def classify_pair(placement: Placement, machine: Machine, rank_a: int, rank_b: int) -> str:
    node_a, unit_a = placement.assignment[rank_a]
    node_b, unit_b = placement.assignment[rank_b]
    if node_a != node_b:
        return "internode"
    if unit_a == unit_b:
        return "local"
    if unit_domain(machine, unit_a) != unit_domain(machine, unit_b):
        return "cross_domain"
    return "fabric"


@dataclass(eq=False)
class PhaseTraffic:
    """Bytes of one phase, totals per class plus per-entity loads.

    ``unit_fabric_gb`` counts bytes a unit pushes into the node fabric
    (fabric and cross_domain classes); ``node_cross_gb`` counts bytes crossing
    a node's island link in either direction.
    """

    phase: PhaseSpec
    class_gb: dict[str, float]
    unit_egress_gb: np.ndarray
    unit_fabric_gb: np.ndarray
    unit_internode_gb: np.ndarray
    node_internode_gb: np.ndarray
    node_cross_gb: np.ndarray

    @property
    def total_gb(self) -> float:
        return sum(self.class_gb.values())

    @property
    def offrank_gb(self) -> float:
        return self.total_gb


@dataclass(eq=False)
class TrafficBreakdown:
    phases: list[PhaseTraffic]
    nodes_used: int
    units_per_node: int
    unit_egress_gb: np.ndarray = field(repr=False)
    node_egress_gb: np.ndarray = field(repr=False)

    @property
    def class_totals(self) -> dict[str, float]:
        return {c: sum(p.class_gb[c] for p in self.phases) for c in LINK_CLASSES}

    @property
    def per_unit_egress_max(self) -> float:
        return float(self.unit_egress_gb.max()) if self.unit_egress_gb.size else 0.0

    @property
    def per_unit_egress_mean(self) -> float:
        return float(self.unit_egress_gb.mean()) if self.unit_egress_gb.size else 0.0

    @property
    def per_node_egress_max(self) -> float:
        return float(self.node_egress_gb.max()) if self.node_egress_gb.size else 0.0

    @property
    def per_node_egress_mean(self) -> float:
        return float(self.node_egress_gb.mean()) if self.node_egress_gb.size else 0.0


def _group_matrix(grid: RankGrid, comm: str) -> np.ndarray:
    """Rows are communicator groups, members in ascending rank order."""
    m = np.arange(grid.total).reshape(grid.n2, grid.n1)
    return m if comm == "comm1" else m.T


def _alltoall(groups: np.ndarray, per_rank: float, node: np.ndarray, gunit: np.ndarray,
              dom: np.ndarray, n_nodes: int, n_units: int) -> tuple:
    """Pairwise alltoall charged by occupancy counts instead of pair lists.

    Inside one group, the bytes between any two ranks are ``per_rank / p``, so
    every per-entity total is ``chunk`` times a product of rank counts.
    """
    n_groups, p = groups.shape
    unit_egress = np.zeros(n_units)
    unit_fabric = np.zeros(n_units)
    unit_inter = np.zeros(n_units)
    node_inter = np.zeros(n_nodes)
    node_cross = np.zeros(n_nodes)
    classes = dict.fromkeys(LINK_CLASSES, 0.0)
    if p == 1:
        return classes, unit_egress, unit_fabric, unit_inter, node_inter, node_cross
    chunk = per_rank / p
    gid = np.repeat(np.arange(n_groups, dtype=np.int64), p)
    members = groups.ravel()

    ukey, c_unit = np.unique(gid * n_units + gunit[members], return_counts=True)
    nkey, c_node = np.unique(gid * n_nodes + node[members], return_counts=True)
    dkey, c_dom = np.unique((gid * n_nodes + node[members]) * 2 + dom[members], return_counts=True)

    u_unit = ukey % n_units
    u_nkey = (ukey // n_units) * n_nodes + (u_unit // _units_per_node(n_units, n_nodes))
    c_node_of_unit = c_node[np.searchsorted(nkey, u_nkey)]
    n_node = nkey % n_nodes

    c_unit = c_unit.astype(float)
    c_node_of_unit = c_node_of_unit.astype(float)
    c_node_f = c_node.astype(float)
    np.add.at(unit_egress, u_unit, chunk * c_unit * (p - c_unit))
    np.add.at(unit_fabric, u_unit, chunk * c_unit * (c_node_of_unit - c_unit))
    np.add.at(unit_inter, u_unit, chunk * c_unit * (p - c_node_of_unit))
    np.add.at(node_inter, n_node, chunk * c_node_f * (p - c_node_f))

    # ordered pairs on a node in different islands: n^2 - sum_d n_d^2
    dom_sq = np.zeros(len(nkey))
    np.add.at(dom_sq, np.searchsorted(nkey, dkey // 2), c_dom.astype(float) ** 2)
    np.add.at(node_cross, n_node, chunk * (c_node_f ** 2 - dom_sq))

    unit_sq = np.zeros(len(nkey))
    np.add.at(unit_sq, np.searchsorted(nkey, u_nkey), c_unit ** 2)
    classes["local"] = float(chunk * np.sum(c_unit * (c_unit - 1)))
    classes["internode"] = float(node_inter.sum())
    classes["cross_domain"] = float(node_cross.sum())
    classes["fabric"] = float(chunk * np.sum(c_node_f ** 2 - unit_sq)) - classes["cross_domain"]
    return classes, unit_egress, unit_fabric, unit_inter, node_inter, node_cross


def _units_per_node(n_units: int, n_nodes: int) -> int:
    return n_units // n_nodes


def _ring(groups: np.ndarray, per_rank: float, node: np.ndarray, gunit: np.ndarray,
          dom: np.ndarray, n_nodes: int, n_units: int) -> tuple:
    """Ring allreduce: each member sends 2 b (p-1)/p to its ring successor."""
    n_groups, p = groups.shape
    unit_egress = np.zeros(n_units)
    unit_fabric = np.zeros(n_units)
    unit_inter = np.zeros(n_units)
    node_inter = np.zeros(n_nodes)
    node_cross = np.zeros(n_nodes)
    classes = dict.fromkeys(LINK_CLASSES, 0.0)
    if p == 1:
        return classes, unit_egress, unit_fabric, unit_inter, node_inter, node_cross
    w = allreduce_offrank_gb(per_rank, p)
    src = groups.ravel()
    dst = np.roll(groups, -1, axis=1).ravel()
    same_unit = gunit[src] == gunit[dst]
    inter = node[src] != node[dst]
    cross = ~inter & ~same_unit & (dom[src] != dom[dst])
    fab = ~inter & ~same_unit & ~cross
    classes["local"] = w * float(same_unit.sum())
    classes["internode"] = w * float(inter.sum())
    classes["cross_domain"] = w * float(cross.sum())
    classes["fabric"] = w * float(fab.sum())
    unit_egress += w * np.bincount(gunit[src][~same_unit], minlength=n_units)
    unit_fabric += w * np.bincount(gunit[src][fab | cross], minlength=n_units)
    unit_inter += w * np.bincount(gunit[src][inter], minlength=n_units)
    node_inter += w * np.bincount(node[src][inter], minlength=n_nodes)
    node_cross += w * np.bincount(node[src][cross], minlength=n_nodes)
    return classes, unit_egress, unit_fabric, unit_inter, node_inter, node_cross


def accumulate_traffic(
    grid: RankGrid, phases: Sequence[PhaseSpec], placement: Placement, machine: Machine
) -> TrafficBreakdown:
    if len(placement.assignment) != grid.total:
        raise SpecError(f"placement covers {len(placement.assignment)} ranks, grid has {grid.total}")
    upn = placement.units_per_node
    n_nodes = placement.nodes_used
    n_units = n_nodes * upn
    asg = np.asarray(placement.assignment, dtype=np.int64).reshape(-1, 2)
    node = asg[:, 0]
    gunit = node * upn + asg[:, 1]
    dom = np.array([unit_domain(machine, u) for u in range(upn)], dtype=np.int64)[asg[:, 1]]

    out: list[PhaseTraffic] = []
    unit_egress = np.zeros(n_units)
    node_egress = np.zeros(n_nodes)
    for phase in phases:
        groups = _group_matrix(grid, phase.comm)
        per_rank = phase_per_rank_gb(phase, grid)
        fn = _alltoall if phase.kind == "alltoall" else _ring
        classes, u_eg, u_fab, u_int, n_int, n_cross = fn(groups, per_rank, node, gunit, dom, n_nodes, n_units)
        out.append(PhaseTraffic(phase, classes, u_eg, u_fab, u_int, n_int, n_cross))
        unit_egress += u_eg
        node_egress += n_int
    return TrafficBreakdown(out, n_nodes, upn, unit_egress, node_egress)
