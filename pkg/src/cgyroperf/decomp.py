"""Two-communicator rank grid and per-step collective payloads.

Rank ``r`` sits at grid position ``(i, j)`` with ``r = j * n1 + i``. The first
communicator (comm1) groups ranks sharing ``j``; its extent ``n1`` is fixed by
the problem (N_TOROIDAL). The second (comm2) groups ranks sharing ``i`` and
absorbs all remaining parallelism.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from importlib import resources

from cgyroperf import kvdoc
from cgyroperf.kvdoc import SpecError

COMMS = ("comm1", "comm2")
PHASE_KINDS = ("alltoall", "allreduce")
BUNDLED_PROBLEMS = ("nl03",)


@dataclass(frozen=True)
class PhaseSpec:
    """One collective per step.

    ``volume`` is the total grid data in GB for an alltoall (spread over all
    ranks) and the per-rank buffer in GB for an allreduce.
    """

    label: str
    comm: str
    kind: str
    volume: float

    def __post_init__(self) -> None:
        if self.comm not in COMMS:
            raise SpecError(f"phase {self.label}: comm must be one of {COMMS}, got {self.comm!r}")
        if self.kind not in PHASE_KINDS:
            raise SpecError(f"phase {self.label}: kind must be one of {PHASE_KINDS}, got {self.kind!r}")
        if not self.volume > 0:
            key = "total_gb" if self.kind == "alltoall" else "per_rank_gb"
            raise SpecError(f"phase {self.label}: {key} must be > 0, got {self.volume}")


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    n_toroidal: int
    min_total_gpu_mem_gb: float = 0.0
    phases: tuple[PhaseSpec, ...] = ()
    # A100-equivalent parallel work per step, used when no fitted compute model exists.
    ref_work_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.n_toroidal < 1:
            raise SpecError(f"n_toroidal must be >= 1, got {self.n_toroidal}")
        if not self.min_total_gpu_mem_gb >= 0:
            raise SpecError(f"min_total_gpu_mem_gb must be >= 0, got {self.min_total_gpu_mem_gb}")
        if self.ref_work_ms < 0:
            raise SpecError(f"ref_work_ms must be >= 0, got {self.ref_work_ms}")

    def with_volumes(self, volumes: dict[str, float]) -> ProblemSpec:
        phases = tuple(
            dataclasses.replace(ph, volume=volumes[ph.label]) if ph.label in volumes else ph for ph in self.phases
        )
        return dataclasses.replace(self, phases=phases)

    def scaled(self, factor: float) -> ProblemSpec:
        return dataclasses.replace(
            self, phases=tuple(dataclasses.replace(ph, volume=ph.volume * factor) for ph in self.phases)
        )


@dataclass(frozen=True)
class RankGrid:
    n1: int
    n2: int

    def __post_init__(self) -> None:
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError(f"grid extents must be positive, got {self.n1}x{self.n2}")

    @property
    def total(self) -> int:
        return self.n1 * self.n2

    def coords(self, rank: int) -> tuple[int, int]:
        self._check(rank)
        return rank % self.n1, rank // self.n1

    def rank(self, i: int, j: int) -> int:
        if not (0 <= i < self.n1 and 0 <= j < self.n2):
            raise ValueError(f"({i}, {j}) outside {self.n1}x{self.n2} grid")
        return j * self.n1 + i

    def comm_size(self, comm: str) -> int:
        return self.n1 if comm == "comm1" else self.n2

    def groups(self, comm: str) -> list[list[int]]:
        """Communicator groups, members in ascending rank order."""
        if comm == "comm1":
            return [[j * self.n1 + i for i in range(self.n1)] for j in range(self.n2)]
        if comm == "comm2":
            return [[j * self.n1 + i for j in range(self.n2)] for i in range(self.n1)]
        raise ValueError(f"unknown communicator {comm!r}")

    def _check(self, rank: int) -> None:
        if not 0 <= rank < self.total:
            raise ValueError(f"rank {rank} out of range for {self.n1}x{self.n2} grid")


def build_grid(problem: ProblemSpec, total_ranks: int) -> RankGrid:
    n1 = problem.n_toroidal
    if total_ranks < 1 or total_ranks % n1:
        raise SpecError(f"total ranks {total_ranks} is not a positive multiple of n_toroidal = {n1}")
    return RankGrid(n1, total_ranks // n1)


def comm1_members(grid: RankGrid, rank: int) -> set[int]:
    _, j = grid.coords(rank)
    return {j * grid.n1 + i for i in range(grid.n1)}


def comm2_members(grid: RankGrid, rank: int) -> set[int]:
    i, _ = grid.coords(rank)
    return {j * grid.n1 + i for j in range(grid.n2)}


def phase_per_rank_gb(phase: PhaseSpec, grid: RankGrid) -> float:
    if phase.kind == "alltoall":
        return phase.volume / grid.total
    return phase.volume


def build_problem(text: str, source: str = "<problem>") -> ProblemSpec:
    cp = kvdoc.parse(text, source)
    kvdoc.check_keys(cp, "problem", ("name", "n_toroidal", "min_total_gpu_mem_gb"), ("ref_work_ms",), source)
    phases = []
    for section in cp.sections():
        if section == "problem":
            continue
        if not section.startswith("phase.") or section == "phase.":
            raise SpecError(f"{source}: unknown section [{section}]")
        label = section[len("phase."):]
        keys = set(cp[section].keys())
        vol_key = "total_gb" if "total_gb" in keys else "per_rank_gb"
        kvdoc.check_keys(cp, section, ("comm", "kind", vol_key), source=source)
        kind = cp[section]["kind"]
        expected = "total_gb" if kind == "alltoall" else "per_rank_gb"
        if kind in PHASE_KINDS and vol_key != expected:
            raise SpecError(f"{source}: [{section}] a {kind} phase takes '{expected}', not '{vol_key}'")
        try:
            phases.append(PhaseSpec(label, cp[section]["comm"], kind, kvdoc.get_float(cp, section, vol_key, source)))
        except SpecError as exc:
            raise SpecError(f"{source}: {exc}") from None
    ref_work = kvdoc.get_float(cp, "problem", "ref_work_ms", source) if "ref_work_ms" in cp["problem"] else 0.0
    try:
        return ProblemSpec(
            name=cp["problem"]["name"],
            n_toroidal=kvdoc.get_int(cp, "problem", "n_toroidal", source),
            min_total_gpu_mem_gb=kvdoc.get_float(cp, "problem", "min_total_gpu_mem_gb", source),
            phases=tuple(phases),
            ref_work_ms=ref_work,
        )
    except SpecError as exc:
        raise SpecError(f"{source}: {exc}") from None


def dump_problem(problem: ProblemSpec) -> str:
    head: list[tuple[str, object]] = [
        ("name", problem.name),
        ("n_toroidal", problem.n_toroidal),
        ("min_total_gpu_mem_gb", problem.min_total_gpu_mem_gb),
    ]
    if problem.ref_work_ms:
        head.append(("ref_work_ms", problem.ref_work_ms))
    sections: list[tuple[str, list[tuple[str, object]]]] = [("problem", head)]
    for ph in problem.phases:
        key = "total_gb" if ph.kind == "alltoall" else "per_rank_gb"
        sections.append((f"phase.{ph.label}", [("comm", ph.comm), ("kind", ph.kind), (key, ph.volume)]))
    return kvdoc.dump(sections)


def problem_text(name: str) -> str:
    return resources.files("cgyroperf.data").joinpath(f"{name}.problem").read_text()


def load_problem(ref: str) -> ProblemSpec:
    if ref in BUNDLED_PROBLEMS:
        return build_problem(problem_text(ref), source=f"{ref}.problem")
    try:
        with open(ref) as fh:
            text = fh.read()
    except OSError:
        raise SpecError(f"unknown problem {ref!r}: not bundled ({', '.join(BUNDLED_PROBLEMS)}) or readable file") from None
    return build_problem(text, source=ref)
