"""Measurement records, model fitting and validation against measurements.

Fitting order: per-GPU data volumes (shared by all machines), then per
machine the compute law, link efficiencies and the residual ``other_ms``.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from cgyroperf import kvdoc
from cgyroperf.cost import ComputeCalib, StepEstimate, estimate_step, phase_class_times
from cgyroperf.decomp import ProblemSpec
from cgyroperf.kvdoc import SpecError
from cgyroperf.topology import Machine, load_machine

CSV_HEADER = ("system", "nodes", "gpus", "step_ms", "compute_ms", "comm_ms", "gb_per_gpu", "gb_per_node", "note")
OUTLIER_REL_ERR = 0.20
SPREAD_WARN = 0.15
_ETA_FLOOR = 1e-6


@dataclass(frozen=True)
class MeasurementRecord:
    system: str
    nodes: int
    gpus: int | None
    step_ms: float
    compute_ms: float
    comm_ms: float
    gb_per_gpu: float | None = None
    gb_per_node: float | None = None
    note: str = ""

    @property
    def label(self) -> str:
        units = f"{self.gpus} GPUs" if self.gpus else "CPU"
        extra = f", {self.note}" if self.note else ""
        return f"{self.system} {self.nodes}n/{units}{extra}"


def parse_records(csv_text: str) -> list[MeasurementRecord]:
    if not csv_text.strip():
        return []
    reader = csv.reader(io.StringIO(csv_text))
    header = tuple(h.strip() for h in next(reader))
    if header != CSV_HEADER:
        missing = [c for c in CSV_HEADER if c not in header]
        what = f"missing column '{missing[0]}'" if missing else f"columns {header} != {CSV_HEADER}"
        raise SpecError(f"measurement csv schema mismatch: {what}")
    out = []
    for rowno, row in enumerate(reader, start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(CSV_HEADER):
            raise SpecError(f"row {rowno}: expected {len(CSV_HEADER)} cells, got {len(row)}")
        cells = dict(zip(CSV_HEADER, (c.strip() for c in row)))

        def num(col: str, cast=float, required: bool = True):
            raw = cells[col]
            if raw == "":
                if required:
                    raise SpecError(f"row {rowno}, column {col}: value required")
                return None
            try:
                value = cast(raw)
            except ValueError:
                raise SpecError(f"row {rowno}, column {col}: non-numeric value {raw!r}") from None
            if not value > 0:
                raise SpecError(f"row {rowno}, column {col}: value must be > 0, got {raw}")
            return value

        out.append(
            MeasurementRecord(
                system=cells["system"],
                nodes=num("nodes", int),
                gpus=num("gpus", int, required=False),
                step_ms=num("step_ms"),
                compute_ms=num("compute_ms"),
                comm_ms=num("comm_ms"),
                gb_per_gpu=num("gb_per_gpu", required=False),
                gb_per_node=num("gb_per_node", required=False),
                note=cells["note"],
            )
        )
    return out


def dump_records(records: Iterable[MeasurementRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)

    def cell(v):
        return "" if v is None else kvdoc.fmt_num(v)

    for r in records:
        w.writerow([r.system, r.nodes, cell(r.gpus), cell(r.step_ms), cell(r.compute_ms), cell(r.comm_ms),
                    cell(r.gb_per_gpu), cell(r.gb_per_node), r.note])
    return buf.getvalue()


def bundled_text(name: str) -> str:
    return resources.files("cgyroperf.data").joinpath(name).read_text()


def load_records(ref: str) -> list[MeasurementRecord]:
    if ref in ("table1", "table1.csv"):
        return parse_records(bundled_text("table1.csv"))
    try:
        with open(ref, newline="") as fh:
            return parse_records(fh.read())
    except OSError:
        raise SpecError(f"cannot read measurement file {ref!r}") from None


# ---------------------------------------------------------------------------
# How a record maps onto the model


@dataclass(frozen=True)
class RunMapping:
    machine: str
    ranks_per_unit: int = 1
    placement: str = "block_comm1"


@dataclass(frozen=True)
class Run:
    """A measurement record resolved to a concrete deployment."""

    record: MeasurementRecord
    machine: Machine
    nodes: int
    units_per_node: int
    ranks_per_unit: int
    placement: str

    @property
    def units(self) -> int:
        return self.nodes * self.units_per_node


def parse_scenarios(text: str, source: str = "<scenario>") -> dict[str, RunMapping]:
    cp = kvdoc.parse(text, source)
    out = {}
    for section in cp.sections():
        if not section.startswith("system."):
            raise SpecError(f"{source}: unknown section [{section}]")
        kvdoc.check_keys(cp, section, ("machine",), ("ranks_per_unit", "placement"), source)
        sec = cp[section]
        out[section[len("system."):]] = RunMapping(
            machine=sec["machine"],
            ranks_per_unit=kvdoc.get_int(cp, section, "ranks_per_unit", source) if "ranks_per_unit" in sec else 1,
            placement=sec.get("placement", "block_comm1"),
        )
    return out


def load_scenarios(ref: str | None = None) -> dict[str, RunMapping]:
    if ref is None or ref == "table1":
        return parse_scenarios(bundled_text("table1.scenario"), "table1.scenario")
    with open(ref) as fh:
        return parse_scenarios(fh.read(), ref)


def resolve_run(
    record: MeasurementRecord, scenarios: Mapping[str, RunMapping], machines: Mapping[str, Machine] | None = None
) -> Run:
    mapping = scenarios.get(record.system)
    if mapping is None:
        raise SpecError(f"record '{record.system}' references an unknown machine (no scenario entry)")
    if machines is not None and mapping.machine in machines:
        machine = machines[mapping.machine]
    else:
        machine = load_machine(mapping.machine)
    if record.gpus is None:
        upn = machine.units_per_node
    else:
        if record.gpus % record.nodes:
            raise SpecError(f"{record.label}: {record.gpus} GPUs do not split evenly over {record.nodes} nodes")
        upn = record.gpus // record.nodes
    if upn > machine.units_per_node:
        raise SpecError(f"{record.label}: {upn} units per node exceeds {machine.name} ({machine.units_per_node})")
    return Run(record, machine, record.nodes, upn, mapping.ranks_per_unit, mapping.placement)


# ---------------------------------------------------------------------------
# Fits


@dataclass(frozen=True)
class FitResult:
    params: tuple[float, ...]
    residuals: tuple[float, ...]  # measured - fitted


def _amdahl_lstsq(units: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Least squares of values ~ a / units + b with a, b >= 0."""
    x = 1.0 / units
    if len(np.unique(units)) >= 2:
        (a, b), *_ = np.linalg.lstsq(np.column_stack([x, np.ones_like(x)]), values, rcond=None)
        if a >= 0 and b >= 0:
            return float(a), float(b)
        if a < 0:
            return 0.0, float(values.mean())
    return float(np.dot(x, values) / np.dot(x, x)), 0.0


def fit_compute(records: Sequence[MeasurementRecord], machine: Machine) -> tuple[ComputeCalib, FitResult]:
    """Fit ``compute_ms ~ w_par / (units * rel) + w_ser`` to one machine's records."""
    if not records:
        raise SpecError(f"no records for machine {machine.name}")
    rel = machine.node.unit.rel_throughput
    units = np.array([r.gpus if r.gpus else r.nodes * machine.units_per_node for r in records], dtype=float)
    comp = np.array([r.compute_ms for r in records], dtype=float)
    a, b = _amdahl_lstsq(units, comp)
    calib = ComputeCalib(w_par=a * rel, w_ser=b)
    resid = comp - (a / units + b)
    return calib, FitResult((calib.w_par, calib.w_ser), tuple(float(v) for v in resid))


@dataclass(frozen=True)
class VolumeFit:
    alpha: float
    beta: float
    anchors: tuple[int, ...]  # indices of the records the fit used
    rows: tuple[tuple[MeasurementRecord, float, float, bool], ...]  # record, predicted, rel err, outlier

    def predict(self, units: float) -> float:
        return self.alpha / units + self.beta


def _volume_records(records: Sequence[MeasurementRecord]) -> list[int]:
    return [k for k, r in enumerate(records) if r.gb_per_gpu is not None and r.gpus]


def volume_anchor_indices(
    records: Sequence[MeasurementRecord], scenarios: Mapping[str, RunMapping] | None = None, policy: str = "reference"
) -> list[int]:
    """Records used to fit the data-volume law.

    ``all`` uses every record with per-GPU data. ``reference`` keeps records on
    reference-throughput units (rel_throughput == 1) and anchors the fit on the
    smallest and largest GPU counts among them; every other record is a
    hold-out.
    """
    usable = _volume_records(records)
    if policy == "all":
        return usable
    if policy != "reference":
        raise SpecError(f"unknown volume-fit policy {policy!r}")
    if scenarios is None:
        scenarios = load_scenarios()
    ref = []
    for k in usable:
        m = scenarios.get(records[k].system)
        if m is not None and load_machine(m.machine).node.unit.rel_throughput == 1.0:
            ref.append(k)
    if len({records[k].gpus for k in ref}) < 2:
        return usable
    lo = min(records[k].gpus for k in ref)
    hi = max(records[k].gpus for k in ref)
    return [k for k in ref if records[k].gpus in (lo, hi)]


def fit_phase_volumes(records: Sequence[MeasurementRecord], anchors: Sequence[int] | None = None) -> VolumeFit:
    """Fit ``gb_per_gpu ~ alpha / gpus + beta``; residuals for every usable record."""
    usable = _volume_records(records)
    if anchors is None:
        anchors = usable
    anchors = [k for k in anchors if k in usable]
    if len(anchors) < 2 or len({records[k].gpus for k in anchors}) < 2:
        raise SpecError("volume fit needs at least 2 records with gb_per_gpu at distinct GPU counts")
    units = np.array([records[k].gpus for k in anchors], dtype=float)
    vals = np.array([records[k].gb_per_gpu for k in anchors], dtype=float)
    alpha, beta = _amdahl_lstsq(units, vals)
    rows = []
    for k in usable:
        r = records[k]
        pred = alpha / r.gpus + beta
        err = (pred - r.gb_per_gpu) / r.gb_per_gpu
        rows.append((r, pred, err, abs(err) > OUTLIER_REL_ERR))
    return VolumeFit(alpha, beta, tuple(anchors), tuple(rows))


def apportion_volumes(problem: ProblemSpec, alpha: float, beta: float) -> dict[str, float]:
    """Split ``alpha`` over alltoall phases and ``beta`` over allreduce phases.

    The split keeps the proportions already present in the problem. An
    allreduce of per-rank buffer ``b`` puts ~``2 b`` on the wire per rank.
    """
    a2a = [ph for ph in problem.phases if ph.kind == "alltoall"]
    ar = [ph for ph in problem.phases if ph.kind == "allreduce"]
    out = {}
    a2a_sum = sum(ph.volume for ph in a2a)
    for ph in a2a:
        out[ph.label] = alpha * ph.volume / a2a_sum
    ar_sum = sum(ph.volume for ph in ar)
    for ph in ar:
        out[ph.label] = 0.5 * beta * ph.volume / ar_sum
    return {k: v for k, v in out.items() if v > 0}


def _ideal_class_times(run: Run, problem: ProblemSpec) -> list[dict[str, float]]:
    machine = run.machine.with_efficiencies(nic=1.0, fabric=1.0)
    est = estimate_step(problem, machine, run.nodes, run.ranks_per_unit, run.placement,
                        ComputeCalib(0.0), units_per_node=run.units_per_node)
    return [phase_class_times(pt, machine) for pt in est.traffic.phases]


def _comm_with(times: list[dict[str, float]], eta_net: float, eta_fab: float) -> float:
    scale = {"local": 1.0, "fabric": eta_fab, "cross_domain": eta_fab, "internode": eta_net}
    return math.fsum(max(t / scale[c] for c, t in ph.items()) for ph in times)


def _dominant(times: list[dict[str, float]], eta_net: float, eta_fab: float) -> str:
    scale = {"local": 1.0, "fabric": eta_fab, "cross_domain": eta_fab, "internode": eta_net}
    load = {"net": 0.0, "fab": 0.0}
    for ph in times:
        cls = max(ph, key=lambda c: ph[c] / scale[c])
        if ph[cls] > 0:
            load["net" if cls == "internode" else "fab"] += ph[cls] / scale[cls]
    return max(load, key=lambda k: load[k]) if any(load.values()) else ""


def _solve_eta(target_log: float, comm_fn) -> tuple[float, bool]:
    """Efficiency at which sum(log predicted) hits ``target_log``; clamped to (0, 1]."""

    def g(log_eta: float) -> float:
        return comm_fn(math.exp(log_eta)) - target_log

    if g(0.0) >= 0:
        return 1.0, g(0.0) > 1e-12  # measured beat the ideal bound
    lo = math.log(_ETA_FLOOR)
    if g(lo) < 0:
        return _ETA_FLOOR, False
    return math.exp(brentq(g, lo, 0.0, xtol=1e-15, rtol=1e-15, maxiter=500)), False


@dataclass
class EfficiencyFit:
    eta_net: float = 1.0
    eta_fab: float = 1.0
    candidates: dict[str, list[float]] = field(default_factory=lambda: {"net": [], "fab": []})
    clamped: list[str] = field(default_factory=list)

    def spread(self, which: str) -> float:
        c = self.candidates[which]
        return max(c) - min(c) if len(c) > 1 else 0.0


def fit_efficiencies(runs: Sequence[Run], problem: ProblemSpec) -> EfficiencyFit:
    """Fit NIC and fabric efficiencies of one machine.

    Each efficiency is set so the geometric mean of predicted/measured comm
    time over the records it governs equals 1. With a single binding link
    class this is the geometric mean of ideal/measured per record.
    """
    for run in runs:
        if not run.record.comm_ms > 0:
            raise SpecError(f"{run.record.label}: zero measured comm time")
    times = [_ideal_class_times(run, problem) for run in runs]
    fit = EfficiencyFit()
    groups: dict[str, list[int]] = {}
    for _ in range(10):
        new_groups: dict[str, list[int]] = {"net": [], "fab": []}
        for k, t in enumerate(times):
            dom = _dominant(t, fit.eta_net, fit.eta_fab)
            if dom:
                new_groups[dom].append(k)
        if new_groups == groups:
            break
        groups = new_groups
        fit.clamped = []
        for which in ("net", "fab"):
            idx = groups[which]
            if not idx:
                continue
            target = math.fsum(math.log(runs[k].record.comm_ms) for k in idx)

            def total_log(eta: float, idx=idx, which=which) -> float:
                net, fab = (eta, fit.eta_fab) if which == "net" else (fit.eta_net, eta)
                return math.fsum(math.log(_comm_with(times[k], net, fab)) for k in idx)

            eta, clamped = _solve_eta(target, total_log)
            setattr(fit, f"eta_{which}", eta)
            if clamped:
                fit.clamped.append(which)
    fit.candidates = {"net": [], "fab": []}
    for which in ("net", "fab"):
        for k in groups.get(which, []):
            target = math.log(runs[k].record.comm_ms)

            def one_log(eta: float, k=k, which=which) -> float:
                net, fab = (eta, fit.eta_fab) if which == "net" else (fit.eta_net, eta)
                return math.log(_comm_with(times[k], net, fab))

            fit.candidates[which].append(_solve_eta(target, one_log)[0])
    return fit


# ---------------------------------------------------------------------------
# Calibration set


@dataclass(frozen=True)
class MachineCalib:
    compute: ComputeCalib
    eta_net: float = 1.0
    eta_fab: float = 1.0
    other_ms: float = 0.0

    def __post_init__(self) -> None:
        for name in ("eta_net", "eta_fab"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise SpecError(f"{name} must be in (0, 1], got {v}")
        if self.other_ms < 0:
            raise SpecError(f"other_ms must be >= 0, got {self.other_ms}")

    def apply(self, machine: Machine) -> Machine:
        return machine.with_efficiencies(nic=self.eta_net, fabric=self.eta_fab)


@dataclass
class CalibrationSet:
    machines: dict[str, MachineCalib]
    volumes: dict[str, float]
    alpha: float = 0.0
    beta: float = 0.0
    residuals: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def problem(self, problem: ProblemSpec) -> ProblemSpec:
        return problem.with_volumes(self.volumes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CalibrationSet):
            return NotImplemented
        return self.machines == other.machines and self.volumes == other.volumes


def _fmt_list(values: Iterable[float]) -> str:
    return ", ".join(f"{v:.6g}" for v in values)


def fit_all(
    records: Sequence[MeasurementRecord],
    problem: ProblemSpec,
    scenarios: Mapping[str, RunMapping] | None = None,
    machines: Mapping[str, Machine] | None = None,
    volume_policy: str = "reference",
) -> CalibrationSet:
    if scenarios is None:
        scenarios = load_scenarios()
    vfit = fit_phase_volumes(records, volume_anchor_indices(records, scenarios, volume_policy))
    volumes = apportion_volumes(problem, vfit.alpha, vfit.beta)
    fitted = problem.with_volumes(volumes)
    calib = CalibrationSet({}, volumes, vfit.alpha, vfit.beta)
    calib.residuals["volumes"] = _fmt_list(pred - r.gb_per_gpu for r, pred, _, _ in vfit.rows)
    for r, pred, err, outlier in vfit.rows:
        if outlier:
            calib.warnings.append(
                f"volume outlier: {r.label}: law gives {pred:.2f} GB/GPU vs measured {r.gb_per_gpu:g} ({err:+.0%})"
            )

    runs = [resolve_run(r, scenarios, machines) for r in records]
    by_machine: dict[str, list[Run]] = {}
    for run in runs:
        by_machine.setdefault(run.machine.name, []).append(run)
    for name, mruns in by_machine.items():
        machine = mruns[0].machine
        compute, cfit = fit_compute([r.record for r in mruns], machine)
        eff = fit_efficiencies(mruns, fitted)
        for which in eff.clamped:
            calib.warnings.append(f"{name}: eta_{which} clamped to 1 (measured comm beat the ideal bound)")
        for which in ("net", "fab"):
            if eff.spread(which) > SPREAD_WARN:
                calib.warnings.append(
                    f"{name}: eta_{which} per-record spread {eff.spread(which):.2f} > {SPREAD_WARN} (model mismatch)"
                )
        mc = MachineCalib(compute, eff.eta_net, eff.eta_fab, 0.0)
        resid = []
        for run in mruns:
            est = predict_run(run, fitted, mc)
            resid.append(run.record.step_ms - est.step_ms)
        other = max(0.0, math.fsum(resid) / len(resid))
        calib.machines[name] = MachineCalib(compute, eff.eta_net, eff.eta_fab, other)
        calib.residuals[name] = _fmt_list(cfit.residuals)
        if eff.eta_fab < 0.2 and eff.candidates["fab"]:
            calib.warnings.append(f"{name}: eta_fab = {eff.eta_fab:.2f}, fabric time dominated by stack overhead")
    return calib


def predict_run(run: Run, problem: ProblemSpec, mc: MachineCalib | None) -> StepEstimate:
    if mc is None:
        return estimate_step(problem, run.machine, run.nodes, run.ranks_per_unit, run.placement,
                             None, 0.0, run.units_per_node)
    return estimate_step(problem, mc.apply(run.machine), run.nodes, run.ranks_per_unit, run.placement,
                         mc.compute, mc.other_ms, run.units_per_node)


def dump_calibration(calib: CalibrationSet, problem: ProblemSpec) -> str:
    sections: list[tuple[str, list[tuple[str, object]]]] = [
        ("volumes", [("alpha_gb", calib.alpha), ("beta_gb", calib.beta)]
         + ([("residuals_gb", calib.residuals["volumes"])] if "volumes" in calib.residuals else []))
    ]
    for ph in problem.phases:
        if ph.label in calib.volumes:
            key = "total_gb" if ph.kind == "alltoall" else "per_rank_gb"
            sections.append((f"phase.{ph.label}", [(key, calib.volumes[ph.label])]))
    for name, mc in calib.machines.items():
        items: list[tuple[str, object]] = [
            ("w_par", mc.compute.w_par),
            ("w_ser", mc.compute.w_ser),
            ("eta_net", mc.eta_net),
            ("eta_fab", mc.eta_fab),
            ("other_ms", mc.other_ms),
        ]
        if name in calib.residuals:
            items.append(("compute_residuals_ms", calib.residuals[name]))
        sections.append((f"machine.{name}", items))
    header = "Fitted model parameters. w_par in A100-equivalent unit-ms, times in ms, GB = 1e9 bytes."
    return kvdoc.dump(sections, header=header)


def load_calibration(text: str, source: str = "<calibration>") -> CalibrationSet:
    cp = kvdoc.parse(text, source)
    calib = CalibrationSet({}, {})
    for section in cp.sections():
        sec = cp[section]
        if section == "volumes":
            kvdoc.check_keys(cp, section, ("alpha_gb", "beta_gb"), ("residuals_gb",), source)
            calib.alpha = kvdoc.get_float(cp, section, "alpha_gb", source)
            calib.beta = kvdoc.get_float(cp, section, "beta_gb", source)
            if "residuals_gb" in sec:
                calib.residuals["volumes"] = sec["residuals_gb"]
        elif section.startswith("phase."):
            key = "total_gb" if "total_gb" in sec else "per_rank_gb"
            kvdoc.check_keys(cp, section, (key,), source=source)
            calib.volumes[section[len("phase."):]] = kvdoc.get_float(cp, section, key, source)
        elif section.startswith("machine."):
            kvdoc.check_keys(cp, section, ("w_par", "w_ser", "eta_net", "eta_fab", "other_ms"),
                             ("compute_residuals_ms",), source)
            name = section[len("machine."):]
            f = lambda k: kvdoc.get_float(cp, section, k, source)  # noqa: E731
            try:
                calib.machines[name] = MachineCalib(
                    ComputeCalib(f("w_par"), f("w_ser")), f("eta_net"), f("eta_fab"), f("other_ms")
                )
            except SpecError as exc:
                raise SpecError(f"{source}: [{section}] {exc}") from None
            if "compute_residuals_ms" in sec:
                calib.residuals[name] = sec["compute_residuals_ms"]
        else:
            raise SpecError(f"{source}: unknown section [{section}]")
    return calib


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class ValidationRow:
    record: MeasurementRecord
    predicted: StepEstimate

    @staticmethod
    def _err(pred: float, meas: float) -> float:
        return 100.0 * (pred - meas) / meas

    @property
    def step_err_pct(self) -> float:
        return self._err(self.predicted.step_ms, self.record.step_ms)

    @property
    def compute_err_pct(self) -> float:
        return self._err(self.predicted.compute_ms, self.record.compute_ms)

    @property
    def comm_err_pct(self) -> float:
        return self._err(self.predicted.comm_ms, self.record.comm_ms)

    @property
    def measured_fraction(self) -> float:
        return self.record.compute_ms / self.record.step_ms


@dataclass(frozen=True)
class ValidationReport:
    rows: tuple[ValidationRow, ...]

    @property
    def abs_step_errors(self) -> list[float]:
        return [abs(r.step_err_pct) for r in self.rows]

    @property
    def median_abs_err(self) -> float:
        return statistics.median(self.abs_step_errors) if self.rows else 0.0

    @property
    def max_abs_err(self) -> float:
        return max(self.abs_step_errors) if self.rows else 0.0

    @property
    def worst(self) -> ValidationRow | None:
        return max(self.rows, key=lambda r: abs(r.step_err_pct)) if self.rows else None

    def passes(self, max_err_pct: float) -> bool:
        return all(e <= max_err_pct for e in self.abs_step_errors)


def validate(
    records: Sequence[MeasurementRecord],
    calib: CalibrationSet,
    problem: ProblemSpec,
    scenarios: Mapping[str, RunMapping] | None = None,
    machines: Mapping[str, Machine] | None = None,
) -> ValidationReport:
    if scenarios is None:
        scenarios = load_scenarios()
    fitted = calib.problem(problem)
    rows = []
    for rec in records:
        run = resolve_run(rec, scenarios, machines)
        mc = calib.machines.get(run.machine.name)
        if mc is None:
            raise SpecError(f"calibration has no entry for machine {run.machine.name} ({rec.label})")
        rows.append(ValidationRow(rec, predict_run(run, fitted, mc)))
    return ValidationReport(tuple(rows))


def predicted_records(report: ValidationReport, calib: CalibrationSet) -> list[MeasurementRecord]:
    """Records whose measured columns are replaced by model output.

    ``gb_per_gpu`` follows the fitted volume law; ``gb_per_node`` is kept.
    """
    out = []
    for row in report.rows:
        r, p = row.record, row.predicted
        gpu = None
        if r.gb_per_gpu is not None and r.gpus:
            gpu = calib.alpha / r.gpus + calib.beta
        out.append(MeasurementRecord(r.system, r.nodes, r.gpus, p.step_ms, p.compute_ms, p.comm_ms,
                                     gpu, r.gb_per_node, r.note))
    return out
