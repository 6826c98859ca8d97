import dataclasses

import numpy as np
import pytest

from cgyroperf.cost import (
    ComputeCalib,
    InfeasibleError,
    comm_time_ms,
    compute_time_ms,
    estimate_step,
    fraction_in_compute,
    memory_feasible,
    phase_time_ms,
)
from cgyroperf.decomp import PhaseSpec, ProblemSpec, RankGrid
from cgyroperf.topology import load_preset
from cgyroperf.traffic import PhaseTraffic, TrafficBreakdown, accumulate_traffic, make_placement

TABLE1_STEP_COMPUTE = [(520, 300), (670, 170), (360, 81), (460, 160), (540, 100), (370, 54), (750, 410), (530, 250)]
TABLE1_FRACTIONS = [57, 25, 23, 35, 19, 15, 55, 47]


def _phase(node_gb=0.0, unit_fab_gb=0.0, cross_gb=0.0, label="p"):
    z = np.zeros(1)
    return PhaseTraffic(
        PhaseSpec(label, "comm1", "alltoall", 1.0),
        {"local": 0.0, "fabric": 0.0, "cross_domain": 0.0, "internode": 0.0},
        z, np.array([unit_fab_gb]), z, np.array([node_gb]), np.array([cross_gb]),
    )


def test_compute_time_examples():
    gcp = load_preset("gcp-a2-megagpu-16g")
    perl = load_preset("perlmutter-p1")
    calib = ComputeCalib(4800, 0)
    assert compute_time_ms(calib, gcp, 1, 16) == pytest.approx(300)
    t64 = compute_time_ms(calib, perl, 16, 64)
    assert t64 == pytest.approx(75)
    assert (t64 - 81) / 81 == pytest.approx(-0.074, abs=5e-4)


def test_compute_time_summit_two_point():
    summit = load_preset("summit")
    rel = summit.node.unit.rel_throughput
    calib = ComputeCalib(8832 * rel, 8)  # 8832 V100-unit ms
    assert compute_time_ms(calib, summit, 16, 96) == pytest.approx(100)
    assert compute_time_ms(calib, summit, 32, 192) == pytest.approx(54)


def test_internode_phase_time():
    perl = load_preset("perlmutter-p1")
    t, cls = phase_time_ms(_phase(node_gb=5.2), perl)
    assert t == pytest.approx(208)
    assert cls == "internode"
    assert 250 / 208 == pytest.approx(1 / 0.832, rel=1e-3)


def test_fabric_phase_time():
    t, cls = phase_time_ms(_phase(unit_fab_gb=6.8), load_preset("gcp-a2-megagpu-16g"))
    assert t == pytest.approx(6.8 / 0.3)
    assert round(t, 1) == 22.7
    assert cls == "fabric"


def test_cross_domain_phase_time():
    t, cls = phase_time_ms(_phase(cross_gb=0.64), load_preset("summit"))
    assert (t, cls) == (pytest.approx(10.0), "cross_domain")


def test_all_local_phase_costs_nothing():
    assert phase_time_ms(_phase(), load_preset("perlmutter-p1")) == (0.0, "local")


def test_comm_time_sums_phases():
    perl = load_preset("perlmutter-p1")
    z = np.zeros(1)
    b = TrafficBreakdown([_phase(node_gb=2.5), _phase(node_gb=1.25)], 1, 4, z, z)
    assert comm_time_ms(b, perl) == pytest.approx(150)


def test_single_rank_grid_has_no_comm():
    prob = ProblemSpec("one", 1, 0, (PhaseSpec("a", "comm1", "alltoall", 1.0),
                                     PhaseSpec("r", "comm2", "allreduce", 1.0)))
    cori = load_preset("cori")
    est = estimate_step(prob, cori, 1, 1, calib=ComputeCalib(100))
    assert est.comm_ms == 0
    assert est.step_ms == est.compute_ms


@pytest.mark.parametrize("pair, expected", list(zip(TABLE1_STEP_COMPUTE, TABLE1_FRACTIONS)))
def test_fraction_table1(pair, expected):
    assert abs(fraction_in_compute(*pair) - expected) <= 1


def test_fraction_rounds_half_up():
    assert fraction_in_compute(360, 81) == 23  # 22.5
    assert fraction_in_compute(540, 100) == 19  # 18.52
    assert fraction_in_compute(670, 170) == 25
    assert fraction_in_compute(100, 100) == 100
    assert fraction_in_compute(8, 1) == 13  # 12.5


@pytest.mark.parametrize("step, compute", [(0, 0), (100, 101), (100, -1)])
def test_fraction_domain(step, compute):
    with pytest.raises(ValueError):
        fraction_in_compute(step, compute)


def test_memory_feasibility(nl03):
    assert memory_feasible(nl03, load_preset("gcp-a2-megagpu-16g"), 1)[0]
    ok, why = memory_feasible(nl03, load_preset("perlmutter-p1"), 1)
    assert not ok and "160" in why and "600" in why
    assert not memory_feasible(nl03, load_preset("summit"), 1)[0]
    free = dataclasses.replace(nl03, min_total_gpu_mem_gb=0)
    assert memory_feasible(free, load_preset("summit"), 1)[0]


def test_estimate_step_infeasible(nl03):
    with pytest.raises(InfeasibleError, match="160 GB < 600 GB"):
        estimate_step(nl03, load_preset("perlmutter-p1"), 1)


def test_estimate_identity_and_compute_only(nl03):
    perl = load_preset("perlmutter-p1")
    est = estimate_step(nl03, perl, 8, 1, "block_comm1", ComputeCalib(4800, 3), other_ms=12)
    assert est.step_ms == pytest.approx(est.compute_ms + est.comm_ms + est.other_ms)
    assert est.fraction_in_compute == pytest.approx(est.compute_ms / est.step_ms)
    dry = dataclasses.replace(nl03, phases=())
    e2 = estimate_step(dry, perl, 8, 1, "block_comm1", ComputeCalib(4800, 3), other_ms=12)
    assert e2.comm_ms == 0
    assert e2.fraction_in_compute == pytest.approx(e2.compute_ms / (e2.compute_ms + 12))


@pytest.mark.parametrize("name, nodes", [("perlmutter-p1", 8), ("summit", 16), ("gcp-a2-megagpu-16g", 1), ("cori", 128)])
def test_doubling_bandwidth_halves_comm(nl03, name, nodes):
    m = load_preset(name)
    a = estimate_step(nl03, m, nodes, 1)
    b = estimate_step(nl03, m.scaled_bandwidth(2.0), nodes, 1)
    assert b.comm_ms == pytest.approx(a.comm_ms / 2, rel=1e-12)
    assert b.step_ms < a.step_ms


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_volume_scale_invariance(nl03, c):
    m = load_preset("summit")
    a = estimate_step(nl03, m, 16, 1)
    b = estimate_step(nl03.scaled(c), m, 16, 1)
    assert b.comm_ms == pytest.approx(c * a.comm_ms, rel=1e-12)


def test_more_units_never_slower_compute():
    perl = load_preset("perlmutter-p1")
    calib = ComputeCalib(4800, 5)
    times = [compute_time_ms(calib, perl, n, n * 4) for n in (4, 8, 16, 32)]
    assert all(b <= a for a, b in zip(times, times[1:]))


def test_nic_bandwidth_never_increases_comm(nl03):
    perl = load_preset("perlmutter-p1")
    prev = None
    for gbps in (50, 100, 200, 400, 1000):
        m = dataclasses.replace(perl, node=dataclasses.replace(
            perl.node, nic=dataclasses.replace(perl.node.nic, gbps_each=gbps)))
        c = estimate_step(nl03, m, 8, 1).comm_ms
        assert prev is None or c <= prev
        prev = c


def test_host_pcie_route_adds_bottleneck(nl03):
    perl = load_preset("perlmutter-p1")
    plain = estimate_step(nl03, perl, 8, 1)
    routed = estimate_step(nl03, perl, 8, 1, route_host_pcie=True)
    assert routed.comm_ms >= plain.comm_ms
