"""Machine descriptions: nodes of homogeneous compute units joined by an
intra-node fabric, with network interfaces between nodes.

Bandwidths are stored in Gbps as published by vendors and converted to GB/ms
(GB = 1e9 bytes) for the cost model: ``1 Gbps = 0.125 GB/s = 1.25e-4 GB/ms``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources

from cgyroperf import kvdoc
from cgyroperf.kvdoc import SpecError

UNIT_KINDS = ("gpu", "cpu")
FABRIC_KINDS = ("full_mesh", "switched", "host_pcie", "split_domains")
PRESETS = ("gcp-a2-megagpu-16g", "perlmutter-p1", "summit", "cori")
MAX_NVSWITCH_NODES = 32

GBPS_TO_GB_PER_MS = 0.125 / 1000.0


@dataclass(frozen=True)
class ComputeUnit:
    kind: str
    model_name: str
    mem_gb: float
    rel_throughput: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in UNIT_KINDS:
            raise SpecError(f"unit_kind must be one of {UNIT_KINDS}, got {self.kind!r}")
        if not self.mem_gb >= 0:
            raise SpecError(f"unit_mem_gb must be >= 0, got {self.mem_gb}")
        if not self.rel_throughput > 0:
            raise SpecError(f"unit_rel_throughput must be > 0, got {self.rel_throughput}")


@dataclass(frozen=True)
class Fabric:
    kind: str
    per_unit_gbps: float
    cross_domain_gbps: float | None = None
    efficiency: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in FABRIC_KINDS:
            raise SpecError(f"fabric kind must be one of {FABRIC_KINDS}, got {self.kind!r}")
        if not self.per_unit_gbps > 0:
            raise SpecError(f"fabric per_unit_gbps must be > 0, got {self.per_unit_gbps}")
        if self.kind == "split_domains":
            if self.cross_domain_gbps is None or not self.cross_domain_gbps > 0:
                raise SpecError("fabric cross_domain_gbps must be > 0 when kind = split_domains")
        elif self.cross_domain_gbps is not None:
            raise SpecError("fabric cross_domain_gbps is only valid when kind = split_domains")
        if not 0 < self.efficiency <= 1:
            raise SpecError(f"fabric efficiency must be in (0, 1], got {self.efficiency}")


@dataclass(frozen=True)
class Nic:
    count: int
    gbps_each: float
    efficiency: float = 1.0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise SpecError(f"nic count must be >= 1, got {self.count}")
        if not self.gbps_each > 0:
            raise SpecError(f"nic gbps_each must be > 0, got {self.gbps_each}")
        if not 0 < self.efficiency <= 1:
            raise SpecError(f"nic efficiency must be in (0, 1], got {self.efficiency}")

    @property
    def total_gbps(self) -> float:
        return self.count * self.gbps_each


@dataclass(frozen=True)
class NodeSpec:
    units: tuple[ComputeUnit, ...]
    fabric: Fabric
    nic: Nic
    # GPU <-> host link per unit; not charged unless the cost model asks for it.
    host_link_gbps: float | None = None

    def __post_init__(self) -> None:
        if not self.units:
            raise SpecError("node units must be >= 1")
        first = self.units[0]
        if any(u != first for u in self.units):
            raise SpecError("node units must share kind and model")
        if self.host_link_gbps is not None and not self.host_link_gbps > 0:
            raise SpecError(f"host_link_gbps must be > 0, got {self.host_link_gbps}")

    @property
    def unit(self) -> ComputeUnit:
        return self.units[0]

    @property
    def n_units(self) -> int:
        return len(self.units)


@dataclass(frozen=True)
class Machine:
    name: str
    node: NodeSpec
    max_nodes: int = 1

    def __post_init__(self) -> None:
        if self.max_nodes < 1:
            raise SpecError(f"max_nodes must be >= 1, got {self.max_nodes}")

    @property
    def units_per_node(self) -> int:
        return self.node.n_units

    def with_efficiencies(self, nic: float | None = None, fabric: float | None = None) -> Machine:
        node = self.node
        if nic is not None:
            node = dataclasses.replace(node, nic=dataclasses.replace(node.nic, efficiency=nic))
        if fabric is not None:
            node = dataclasses.replace(node, fabric=dataclasses.replace(node.fabric, efficiency=fabric))
        return dataclasses.replace(self, node=node)

    def scaled_bandwidth(self, factor: float) -> Machine:
        """Copy with every link bandwidth multiplied by ``factor``."""
        node = self.node
        fab = node.fabric
        cross = None if fab.cross_domain_gbps is None else fab.cross_domain_gbps * factor
        return dataclasses.replace(
            self,
            node=dataclasses.replace(
                node,
                fabric=dataclasses.replace(fab, per_unit_gbps=fab.per_unit_gbps * factor, cross_domain_gbps=cross),
                nic=dataclasses.replace(node.nic, gbps_each=node.nic.gbps_each * factor),
                host_link_gbps=None if node.host_link_gbps is None else node.host_link_gbps * factor,
            ),
        )


def node_egress_bytes_per_ms(machine: Machine) -> float:
    nic = machine.node.nic
    return nic.count * nic.gbps_each * nic.efficiency * GBPS_TO_GB_PER_MS


def unit_fabric_bytes_per_ms(machine: Machine) -> float:
    if machine.units_per_node < 2:
        return math.inf
    fab = machine.node.fabric
    return fab.per_unit_gbps * fab.efficiency * GBPS_TO_GB_PER_MS


def cross_domain_bytes_per_ms(machine: Machine) -> float:
    """Capacity of the link joining the two fabric islands of a split node."""
    fab = machine.node.fabric
    if fab.kind != "split_domains":
        return math.inf
    return fab.cross_domain_gbps * fab.efficiency * GBPS_TO_GB_PER_MS


def host_link_bytes_per_ms(machine: Machine) -> float:
    if machine.node.host_link_gbps is None:
        return math.inf
    return machine.node.host_link_gbps * GBPS_TO_GB_PER_MS


def unit_domain(machine: Machine, unit_index: int) -> int:
    if machine.node.fabric.kind != "split_domains":
        return 0
    return 0 if unit_index < machine.units_per_node / 2 else 1


def build_hypothetical_nvswitch(machine: Machine, joined_nodes: int) -> Machine:
    """Join ``joined_nodes`` nodes behind one NVSwitch-class fabric.

    The joined node keeps the per-unit fabric rate and all NICs of its
    constituent nodes.
    """
    if not 1 <= joined_nodes <= MAX_NVSWITCH_NODES:
        raise SpecError(f"joined_nodes must be in [1, {MAX_NVSWITCH_NODES}], got {joined_nodes}")
    if joined_nodes == 1:
        return machine
    node = machine.node
    fab = node.fabric
    return Machine(
        name=f"{machine.name}-nvswitch{joined_nodes}",
        node=NodeSpec(
            units=node.units * joined_nodes,
            fabric=Fabric("switched", fab.per_unit_gbps, None, fab.efficiency),
            nic=dataclasses.replace(node.nic, count=node.nic.count * joined_nodes),
            host_link_gbps=node.host_link_gbps,
        ),
        max_nodes=max(1, machine.max_nodes // joined_nodes),
    )


_MACHINE_KEYS = ("name", "max_nodes")
_NODE_KEYS = ("units", "unit_kind", "unit_model", "unit_mem_gb", "unit_rel_throughput")
_FABRIC_KEYS = ("kind", "per_unit_gbps")
_NIC_KEYS = ("count", "gbps_each")


def build_machine(spec_text: str, source: str = "<machine>") -> Machine:
    cp = kvdoc.parse(spec_text, source)
    extra = [s for s in cp.sections() if s not in ("machine", "node", "fabric", "nic")]
    if extra:
        raise SpecError(f"{source}: unknown section [{extra[0]}]")
    kvdoc.check_keys(cp, "machine", _MACHINE_KEYS, source=source)
    kvdoc.check_keys(cp, "node", _NODE_KEYS, ("host_link_gbps",), source)
    kvdoc.check_keys(cp, "fabric", _FABRIC_KEYS, ("cross_domain_gbps", "efficiency"), source)
    kvdoc.check_keys(cp, "nic", _NIC_KEYS, ("efficiency",), source)

    def f(sec: str, key: str, default: float | None = None) -> float | None:
        if key not in cp[sec]:
            return default
        return kvdoc.get_float(cp, sec, key, source)

    def i(sec: str, key: str) -> int:
        return kvdoc.get_int(cp, sec, key, source)

    try:
        unit = ComputeUnit(
            kind=cp["node"]["unit_kind"],
            model_name=cp["node"]["unit_model"],
            mem_gb=f("node", "unit_mem_gb"),
            rel_throughput=f("node", "unit_rel_throughput"),
        )
        n_units = i("node", "units")
        if n_units < 1:
            raise SpecError(f"node units must be >= 1, got {n_units}")
        node = NodeSpec(
            units=(unit,) * n_units,
            fabric=Fabric(
                kind=cp["fabric"]["kind"],
                per_unit_gbps=f("fabric", "per_unit_gbps"),
                cross_domain_gbps=f("fabric", "cross_domain_gbps"),
                efficiency=f("fabric", "efficiency", 1.0),
            ),
            nic=Nic(count=i("nic", "count"), gbps_each=f("nic", "gbps_each"), efficiency=f("nic", "efficiency", 1.0)),
            host_link_gbps=f("node", "host_link_gbps"),
        )
        return Machine(name=cp["machine"]["name"], node=node, max_nodes=i("machine", "max_nodes"))
    except SpecError as exc:
        if str(exc).startswith(source):
            raise
        raise SpecError(f"{source}: {exc}") from None


def dump_machine(machine: Machine) -> str:
    node = machine.node
    unit = node.unit
    node_items: list[tuple[str, object]] = [
        ("units", node.n_units),
        ("unit_kind", unit.kind),
        ("unit_model", unit.model_name),
        ("unit_mem_gb", unit.mem_gb),
        ("unit_rel_throughput", unit.rel_throughput),
    ]
    if node.host_link_gbps is not None:
        node_items.append(("host_link_gbps", node.host_link_gbps))
    fabric_items: list[tuple[str, object]] = [("kind", node.fabric.kind), ("per_unit_gbps", node.fabric.per_unit_gbps)]
    if node.fabric.cross_domain_gbps is not None:
        fabric_items.append(("cross_domain_gbps", node.fabric.cross_domain_gbps))
    fabric_items.append(("efficiency", node.fabric.efficiency))
    return kvdoc.dump(
        [
            ("machine", [("name", machine.name), ("max_nodes", machine.max_nodes)]),
            ("node", node_items),
            ("fabric", fabric_items),
            ("nic", [("count", node.nic.count), ("gbps_each", node.nic.gbps_each), ("efficiency", node.nic.efficiency)]),
        ]
    )


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise SpecError(f"unknown machine {name!r}; presets: {', '.join(PRESETS)}")
    return resources.files("cgyroperf.data").joinpath("machines", f"{name}.machine").read_text()


def load_preset(name: str) -> Machine:
    return build_machine(preset_text(name), source=f"{name}.machine")


def load_machine(ref: str) -> Machine:
    """Resolve a preset name or a path to a machine-spec file."""
    if ref in PRESETS:
        return load_preset(ref)
    try:
        with open(ref) as fh:
            text = fh.read()
    except OSError:
        raise SpecError(f"unknown machine {ref!r}: not a preset ({', '.join(PRESETS)}) or readable file") from None
    return build_machine(text, source=ref)
