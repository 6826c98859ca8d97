import pytest
from hypothesis import given, strategies as st

from cgyroperf.decomp import (
    PhaseSpec,
    ProblemSpec,
    RankGrid,
    build_grid,
    build_problem,
    comm1_members,
    comm2_members,
    dump_problem,
    load_problem,
    phase_per_rank_gb,
)
from cgyroperf.kvdoc import SpecError
from cgyroperf.traffic import allreduce_offrank_gb

from oracles import groups_by_enumeration


def _problem(n1=8):
    return ProblemSpec("p", n1, 0.0, (PhaseSpec("a", "comm1", "alltoall", 1.0),))


@pytest.mark.parametrize("total, shape", [(64, (8, 8)), (8, (8, 1))])
def test_build_grid(total, shape):
    g = build_grid(_problem(), total)
    assert (g.n1, g.n2) == shape


def test_build_grid_divisibility():
    with pytest.raises(SpecError, match="n_toroidal = 8"):
        build_grid(_problem(), 12)


def test_comm_members_small():
    g = RankGrid(4, 2)
    r = g.rank(1, 0)
    assert comm1_members(g, r) == {g.rank(i, 0) for i in range(4)}
    assert comm2_members(g, r) == {g.rank(1, 0), g.rank(1, 1)}


def test_degenerate_communicators():
    assert all(comm1_members(RankGrid(1, 5), r) == {r} for r in range(5))
    assert all(comm2_members(RankGrid(4, 1), r) == {r} for r in range(4))


def test_rank_out_of_range():
    with pytest.raises(ValueError):
        comm1_members(RankGrid(2, 2), 4)


def test_grid_8x8_partition_and_orthogonality():
    g = RankGrid(8, 8)
    groups1 = {frozenset(comm1_members(g, r)) for r in range(64)}
    assert len(groups1) == 8 and all(len(s) == 8 for s in groups1)
    assert set().union(*groups1) == set(range(64))
    for r in range(64):
        assert comm1_members(g, r) & comm2_members(g, r) == {r}


def test_orthogonality_exhaustive_up_to_256():
    for n1 in range(1, 257):
        for n2 in range(1, 256 // n1 + 1):
            g = RankGrid(n1, n2)
            assert g.groups("comm1") == groups_by_enumeration(n1, n2, "comm1")
            assert g.groups("comm2") == groups_by_enumeration(n1, n2, "comm2")
            for r in (0, g.total - 1, g.total // 2):
                assert comm1_members(g, r) & comm2_members(g, r) == {r}


@given(st.integers(1, 16), st.integers(1, 16))
def test_rank_coordinate_bijection(n1, n2):
    g = RankGrid(n1, n2)
    seen = {g.coords(r) for r in range(g.total)}
    assert len(seen) == g.total
    assert all(g.rank(*g.coords(r)) == r for r in range(g.total))


@given(st.integers(1, 32), st.integers(1, 32))
def test_comm1_size_fixed_by_problem(n1, n2):
    g = build_grid(_problem(n1), n1 * n2)
    assert all(len(comm1_members(g, r)) == n1 for r in range(0, g.total, max(1, g.total // 7)))


def test_phase_payloads():
    a2a = PhaseSpec("a", "comm1", "alltoall", 102.4)
    assert phase_per_rank_gb(a2a, RankGrid(8, 8)) == pytest.approx(1.6)
    ar = PhaseSpec("r", "comm1", "allreduce", 0.2)
    assert phase_per_rank_gb(ar, RankGrid(8, 8)) == 0.2
    assert phase_per_rank_gb(ar, RankGrid(8, 1)) == 0.2
    assert phase_per_rank_gb(PhaseSpec("a", "comm1", "alltoall", 1.0), RankGrid(1, 1)) == 1.0


def test_payload_laws_over_ranks():
    a2a = PhaseSpec("a", "comm1", "alltoall", 10.0)
    ar = PhaseSpec("r", "comm1", "allreduce", 0.2)
    per_rank = [phase_per_rank_gb(a2a, RankGrid(8, n2)) for n2 in range(1, 20)]
    assert all(b < a for a, b in zip(per_rank, per_rank[1:]))
    totals = [RankGrid(8, n2).total * allreduce_offrank_gb(phase_per_rank_gb(ar, RankGrid(8, n2)), 8)
              for n2 in range(1, 20)]
    assert all(b > a for a, b in zip(totals, totals[1:]))


def test_nl03_bundle():
    p = load_problem("nl03")
    assert p.n_toroidal == 16
    assert p.min_total_gpu_mem_gb == 600
    assert [(ph.comm, ph.kind) for ph in p.phases] == [
        ("comm1", "alltoall"), ("comm2", "alltoall"), ("comm1", "allreduce")]
    assert build_problem(dump_problem(p)) == p


def test_problem_grammar_errors():
    text = "[problem]\nname = x\nn_toroidal = 4\nmin_total_gpu_mem_gb = 0\n\n[phase.a]\ncomm = comm1\nkind = allreduce\ntotal_gb = 1\n"
    with pytest.raises(SpecError, match="per_rank_gb"):
        build_problem(text)
    with pytest.raises(SpecError, match="unknown section"):
        build_problem(text.replace("[phase.a]", "[stage.a]"))
    with pytest.raises(SpecError, match="comm3"):
        build_problem(text.replace("comm1", "comm3").replace("total_gb", "per_rank_gb"))
