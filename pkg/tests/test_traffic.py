import itertools
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgyroperf.decomp import PhaseSpec, RankGrid
from cgyroperf.kvdoc import SpecError
from cgyroperf.topology import ComputeUnit, Fabric, Machine, Nic, NodeSpec, load_preset
from cgyroperf.traffic import (
    LINK_CLASSES,
    STRATEGIES,
    Placement,
    accumulate_traffic,
    allreduce_offrank_gb,
    alltoall_offrank_gb,
    classify_pair,
    make_placement,
)

from oracles import alltoall_sends, brute_force_traffic, oracle_class, ring_allreduce_bytes

ALL_PHASES = (
    PhaseSpec("a1", "comm1", "alltoall", 32.0),
    PhaseSpec("a2", "comm2", "alltoall", 8.0),
    PhaseSpec("r1", "comm1", "allreduce", 0.5),
    PhaseSpec("r2", "comm2", "allreduce", 0.25),
)


def toy_machine(units: int, nodes: int = 4, split: bool = False) -> Machine:
    fabric = Fabric("split_domains", 800, 512) if split else Fabric("full_mesh", 800)
    return Machine("toy", NodeSpec((ComputeUnit("gpu", "X", 16),) * units, fabric, Nic(2, 100)), max_nodes=nodes)


@pytest.mark.parametrize("b, p", [(4.0, 4), (6.4, 16), (1.0, 1), (3.3, 7)])
def test_alltoall_volume_matches_enumeration(b, p):
    assert alltoall_offrank_gb(b, p) == pytest.approx(sum(alltoall_sends(b, p)), abs=1e-15)


def test_alltoall_examples():
    assert alltoall_offrank_gb(123.0, 1) == 0
    assert alltoall_offrank_gb(4.0, 4) == pytest.approx(3.0)
    assert alltoall_offrank_gb(6.4, 16) == pytest.approx(6.0)


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5, 8, 16])
def test_allreduce_volume_matches_ring_simulation(p):
    assert allreduce_offrank_gb(1.0, p) == pytest.approx(ring_allreduce_bytes(1.0, p), abs=1e-15)


def test_allreduce_examples():
    assert allreduce_offrank_gb(5.0, 1) == 0
    assert allreduce_offrank_gb(1.0, 2) == pytest.approx(1.0)
    assert allreduce_offrank_gb(1.0, 4) == pytest.approx(1.5)


def test_block_comm1_example():
    g = RankGrid(4, 2)
    pl = make_placement(g, toy_machine(4, 2), 2, 1, "block_comm1")
    assert set(pl.ranks_on_node(0)) == {g.rank(i, 0) for i in range(4)}
    assert set(pl.ranks_on_node(1)) == {g.rank(i, 1) for i in range(4)}


def test_round_robin_example():
    g = RankGrid(4, 2)
    pl = make_placement(g, toy_machine(4, 2), 2, 1, "round_robin")
    for node in (0, 1):
        on = set(pl.ranks_on_node(node))
        for j in range(2):
            assert len(on & {g.rank(i, j) for i in range(4)}) == 2


def test_block_comm1_8x8_single_node():
    g = RankGrid(8, 8)
    pl = make_placement(g, load_preset("gcp-a2-megagpu-16g"), 1, 4, "block_comm1")
    for j in range(8):
        assert len({pl.global_unit(g.rank(i, j)) for i in range(8)}) == 2
    t = accumulate_traffic(g, ALL_PHASES, pl, load_preset("gcp-a2-megagpu-16g"))
    assert t.class_totals["internode"] == 0


def test_placement_errors():
    g = RankGrid(4, 2)
    with pytest.raises(SpecError, match="capacity"):
        make_placement(g, toy_machine(4, 4), 3, 1)
    with pytest.raises(SpecError, match="max_nodes"):
        make_placement(g, toy_machine(1, 4), 8, 1)
    with pytest.raises(SpecError, match="balanced"):
        make_placement(g, toy_machine(4, 2), 2, 1, "explicit", explicit=[(0, 0)] * 8)


def test_explicit_echoes_map():
    g = RankGrid(2, 2)
    asg = [(1, 1), (0, 0), (1, 0), (0, 1)]
    pl = make_placement(g, toy_machine(2, 2), 2, 1, "explicit", explicit=asg)
    assert list(pl.assignment) == asg


def test_classify_pair():
    g = RankGrid(6, 2)
    summit = load_preset("summit")
    pl = make_placement(g, summit, 2, 1, "block_comm1")
    assert classify_pair(pl, summit, 1, 4) == "cross_domain"
    assert classify_pair(pl, summit, 1, 2) == "fabric"
    assert classify_pair(pl, summit, 0, 6) == "internode"
    shared = make_placement(RankGrid(2, 1), toy_machine(1, 1), 1, 2)
    assert classify_pair(shared, toy_machine(1, 1), 0, 1) == "local"


def test_accumulate_examples():
    g = RankGrid(4, 2)
    ph = [PhaseSpec("a", "comm1", "alltoall", 32.0)]
    m = toy_machine(4, 2)
    blk = accumulate_traffic(g, ph, make_placement(g, m, 2, 1, "block_comm1"), m).class_totals
    assert blk["internode"] == 0 and blk["fabric"] == pytest.approx(24.0)
    rr = accumulate_traffic(g, ph, make_placement(g, m, 2, 1, "round_robin"), m).class_totals
    assert rr["internode"] == pytest.approx(16.0)


def test_everything_local_on_one_unit():
    g = RankGrid(4, 3)
    m = toy_machine(1, 1)
    t = accumulate_traffic(g, ALL_PHASES, make_placement(g, m, 1, 12), m)
    tot = t.class_totals
    assert tot["local"] > 0 and tot["fabric"] == tot["cross_domain"] == tot["internode"] == 0


def _configs(max_n1=8, max_n2=8, max_nodes=4, max_units=8):
    for n1, n2 in itertools.product(range(1, max_n1 + 1), range(1, max_n2 + 1)):
        total = n1 * n2
        for nodes, upn in itertools.product(range(1, max_nodes + 1), range(1, max_units + 1)):
            if total % (nodes * upn) == 0:
                yield n1, n2, nodes, upn, total // (nodes * upn)


def _explicit_assignment(pl: Placement, seed: int) -> list[tuple[int, int]]:
    asg = list(pl.assignment)
    random.Random(seed).shuffle(asg)
    return asg


def _check_against_oracle(g, m, pl, phases, split):
    got = accumulate_traffic(g, phases, pl, m)
    ref = brute_force_traffic(g.n1, g.n2, phases, pl.assignment, pl.units_per_node, pl.nodes_used,
                              split, m.units_per_node)
    for pt, rp in zip(got.phases, ref):
        for c in LINK_CLASSES:
            assert pt.class_gb[c] == pytest.approx(rp["class"][c], rel=1e-9, abs=1e-12)
        for u in range(pl.total_units):
            assert pt.unit_egress_gb[u] == pytest.approx(rp["unit_egress"][u], rel=1e-9, abs=1e-12)
            assert pt.unit_fabric_gb[u] == pytest.approx(rp["unit_fabric"][u], rel=1e-9, abs=1e-12)
        for n in range(pl.nodes_used):
            assert pt.node_internode_gb[n] == pytest.approx(rp["node_inter"][n], rel=1e-9, abs=1e-12)
            assert pt.node_cross_gb[n] == pytest.approx(rp["node_cross"][n], rel=1e-9, abs=1e-12)
    return got


def test_matches_brute_force_split_domains_sample():
    for n1, n2, nodes, upn, rpu in list(_configs(6, 6, 3, 6))[::3]:
        m = toy_machine(upn, 4, split=upn >= 2)
        g = RankGrid(n1, n2)
        for strategy in STRATEGIES:
            if strategy == "explicit":
                base = make_placement(g, m, nodes, rpu, "block_comm1")
                pl = make_placement(g, m, nodes, rpu, "explicit", explicit=_explicit_assignment(base, n1 * 100 + n2))
            else:
                pl = make_placement(g, m, nodes, rpu, strategy)
            _check_against_oracle(g, m, pl, ALL_PHASES, upn >= 2)


def test_partially_populated_split_node():
    # 2 of 6 Summit units used: both sit in domain 0, so no cross_domain bytes
    summit = load_preset("summit")
    g = RankGrid(4, 2)
    pl = make_placement(g, summit, 2, 2, "round_robin", units_per_node=2)
    got = _check_against_oracle(g, summit, pl, ALL_PHASES, True)
    assert got.class_totals["cross_domain"] == 0


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(list(_configs())), st.sampled_from(STRATEGIES[:3]))
def test_conservation(cfg, strategy):
    n1, n2, nodes, upn, rpu = cfg
    g = RankGrid(n1, n2)
    m = toy_machine(upn, 4, split=upn >= 2)
    t = accumulate_traffic(g, ALL_PHASES, make_placement(g, m, nodes, rpu, strategy), m)
    for pt in t.phases:
        ph = pt.phase
        p = g.comm_size(ph.comm)
        if ph.kind == "alltoall":
            expected = g.total * alltoall_offrank_gb(ph.volume / g.total, p)
        else:
            expected = g.total * allreduce_offrank_gb(ph.volume, p)
        assert sum(pt.class_gb.values()) == pytest.approx(expected, rel=1e-9, abs=1e-12)
        assert all(v >= -1e-12 for v in pt.class_gb.values())


@settings(max_examples=80, deadline=None)
@given(st.sampled_from(list(_configs())))
def test_node_egress_bounded_by_unit_egress(cfg):
    n1, n2, nodes, upn, rpu = cfg
    g = RankGrid(n1, n2)
    m = toy_machine(upn)
    t = accumulate_traffic(g, ALL_PHASES, make_placement(g, m, nodes, rpu, "round_robin"), m)
    unit = t.unit_egress_gb.reshape(nodes, upn).sum(axis=1)
    assert np.all(t.node_egress_gb <= unit + 1e-9)


def test_block_comm1_dominates_round_robin():
    ph = [PhaseSpec("a", "comm1", "alltoall", 16.0)]
    checked = 0
    for n1, n2, nodes, upn, rpu in _configs():
        if nodes < 2 or n1 > upn * rpu:
            continue  # a comm1 group must fit on one node
        g = RankGrid(n1, n2)
        m = toy_machine(upn)
        blk = accumulate_traffic(g, ph, make_placement(g, m, nodes, rpu, "block_comm1"), m)
        rr = accumulate_traffic(g, ph, make_placement(g, m, nodes, rpu, "round_robin"), m)
        assert blk.class_totals["internode"] <= rr.class_totals["internode"] + 1e-12
        checked += 1
    assert checked > 50


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([c for c in _configs() if c[2] >= 2]), st.randoms(use_true_random=False))
def test_node_permutation_symmetry(cfg, rnd):
    n1, n2, nodes, upn, rpu = cfg
    g = RankGrid(n1, n2)
    m = toy_machine(upn)
    pl = make_placement(g, m, nodes, rpu, "round_robin")
    perm = list(range(nodes))
    rnd.shuffle(perm)
    moved = make_placement(g, m, nodes, rpu, "explicit", explicit=[(perm[n], u) for n, u in pl.assignment])
    a = accumulate_traffic(g, ALL_PHASES, pl, m)
    b = accumulate_traffic(g, ALL_PHASES, moved, m)
    for c in LINK_CLASSES:
        assert a.class_totals[c] == pytest.approx(b.class_totals[c])
    assert np.allclose(b.node_egress_gb[perm], a.node_egress_gb)


def test_classify_pair_agrees_with_oracle():
    summit = load_preset("summit")
    g = RankGrid(6, 4)
    for strategy in STRATEGIES[:3]:
        pl = make_placement(g, summit, 2, 2, strategy)
        for a, b in itertools.product(range(g.total), repeat=2):
            assert classify_pair(pl, summit, a, b) == oracle_class(pl.assignment, True, 6, a, b)
