"""Command-line interface.

Exit codes: 0 success, 1 input error, 2 infeasible memory, 3 validation
threshold exceeded.
"""

from __future__ import annotations

import argparse
import functools
import sys
from pathlib import Path
from typing import Sequence

from cgyroperf import calib as cal
from cgyroperf.cost import InfeasibleError, estimate_step, fraction_in_compute
from cgyroperf.decomp import BUNDLED_PROBLEMS, ProblemSpec, build_grid, load_problem, problem_text
from cgyroperf.kvdoc import SpecError
from cgyroperf.report import ReportRow, egress_lines, step_table, table, traffic_table, write_report_csv
from cgyroperf.topology import PRESETS, Machine, build_hypothetical_nvswitch, load_machine, preset_text
from cgyroperf.traffic import STRATEGIES

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_THRESHOLD = 0, 1, 2, 3
SEARCH_STRATEGIES = tuple(s for s in STRATEGIES if s != "explicit")


class Context:
    """Resolved problem and calibration shared by the commands."""

    def __init__(self, problem_ref: str, calib_ref: str, scenario_ref: str | None = None,
                 route_host_pcie: bool = False):
        self.base_problem = load_problem(problem_ref)
        self.route_host_pcie = route_host_pcie
        if calib_ref == "ideal":
            self.calib = None
        elif calib_ref == "table1-fit":
            self.calib = _table1_fit(problem_ref, scenario_ref)
        else:
            try:
                text = Path(calib_ref).read_text()
            except OSError:
                raise SpecError(f"cannot read calibration {calib_ref!r} (use 'ideal', 'table1-fit' or a path)") from None
            self.calib = cal.load_calibration(text, calib_ref)
        self.problem = self.calib.problem(self.base_problem) if self.calib else self.base_problem

    def machine_calib(self, machine: Machine, base_name: str | None = None) -> cal.MachineCalib | None:
        if self.calib is None:
            return None
        mc = self.calib.machines.get(base_name or machine.name)
        if mc is None:
            print(f"note: no calibration for {machine.name}; using ideal bandwidth and reference work",
                  file=sys.stderr)
        return mc

    def estimate(self, machine: Machine, nodes: int, rpu: int, placement: str,
                 upn: int | None = None, base_name: str | None = None):
        mc = self.machine_calib(machine, base_name)
        if mc is not None:
            machine = mc.apply(machine)
        return estimate_step(
            self.problem, machine, nodes, rpu, placement,
            mc.compute if mc else None, mc.other_ms if mc else 0.0, upn,
            route_host_pcie=self.route_host_pcie,
        )


@functools.lru_cache(maxsize=4)
def _table1_fit(problem_ref: str, scenario_ref: str | None) -> cal.CalibrationSet:
    records = cal.load_records("table1")
    return cal.fit_all(records, load_problem(problem_ref), cal.load_scenarios(scenario_ref))


def _split(values: Sequence[str] | None, cast=str) -> list:
    out = []
    for v in values or ():
        out.extend(cast(x.strip()) for x in v.split(",") if x.strip())
    return out


def _write_csv(path: str | None, rows: list[ReportRow]) -> None:
    if path:
        Path(path).write_text(write_report_csv(rows))


# ---------------------------------------------------------------------------


def cmd_predict(args: argparse.Namespace) -> int:
    ctx = Context(args.problem, args.calib, args.scenario, args.route_host_pcie)
    machine = load_machine(args.machine)
    upn = args.units_per_node or machine.units_per_node
    label = f"{machine.name} x{args.nodes}"
    try:
        est = ctx.estimate(machine, args.nodes, args.ranks_per_unit, args.placement, upn)
    except InfeasibleError as exc:
        print(f"{label}: {exc}", file=sys.stderr)
        _write_csv(args.csv, [ReportRow(label, machine.name, args.nodes, upn, args.ranks_per_unit,
                                        args.placement, None, str(exc))])
        return EXIT_INFEASIBLE
    row = ReportRow(label, machine.name, args.nodes, upn, args.ranks_per_unit, args.placement, est)
    grid = build_grid(ctx.problem, args.nodes * upn * args.ranks_per_unit)
    print(f"problem {ctx.problem.name}: grid {grid.n1} x {grid.n2} = {grid.total} ranks")
    print(step_table([row]))
    print()
    print(traffic_table(est))
    print()
    print(egress_lines(est))
    _write_csv(args.csv, [row])
    return EXIT_OK


def _sweep_row(ctx: Context, machine: Machine, nodes: int, rpu: int, placement: str, upn: int | None = None,
               base_name: str | None = None, label: str | None = None) -> ReportRow:
    upn = upn or machine.units_per_node
    label = label or f"{machine.name} x{nodes}"
    try:
        est = ctx.estimate(machine, nodes, rpu, placement, upn, base_name)
    except (InfeasibleError, SpecError) as exc:
        return ReportRow(label, machine.name, nodes, upn, rpu, placement, None, str(exc))
    return ReportRow(label, machine.name, nodes, upn, rpu, placement, est)


def cmd_sweep(args: argparse.Namespace) -> int:
    ctx = Context(args.problem, args.calib, args.scenario, args.route_host_pcie)
    rows: list[ReportRow] = []
    if args.records:
        scenarios = cal.load_scenarios(args.scenario)
        for rec in cal.load_records(args.records):
            run = cal.resolve_run(rec, scenarios)
            rows.append(_sweep_row(ctx, run.machine, run.nodes, run.ranks_per_unit, run.placement,
                                   run.units_per_node, label=rec.label))
    machines = _split(args.machines)
    nodes_list = _split(args.nodes, int)
    joins = _split(args.nvswitch, int)
    if machines and not nodes_list:
        raise SpecError("--nodes is required with --machines")
    for ref in machines:
        base = load_machine(ref)
        for n in nodes_list:
            if not joins:
                rows.append(_sweep_row(ctx, base, n, args.ranks_per_unit, args.placement))
                continue
            for j in joins:
                hyp = build_hypothetical_nvswitch(base, j)
                label = f"{base.name} x{n} nvswitch{j}"
                if n % j:
                    rows.append(ReportRow(label, hyp.name, n // j or 1, hyp.units_per_node, args.ranks_per_unit,
                                          args.placement, None, f"{n} nodes not divisible by joined_nodes {j}"))
                    continue
                rows.append(_sweep_row(ctx, hyp, n // j, args.ranks_per_unit, args.placement,
                                       base_name=base.name, label=label))
    if not rows:
        raise SpecError("nothing to sweep: give --records or --machines/--nodes")
    print(step_table(rows))
    for row in rows:
        if not row.feasible:
            print(f"  {row.scenario}: {row.detail}")
    _write_csv(args.csv, rows)
    return EXIT_OK


def optimize_placements(ctx: Context, machine: Machine, nodes: int, upn: int | None = None,
                        max_rpu: int | None = None) -> list[ReportRow]:
    """Every strategy x ranks-per-unit candidate, best first."""
    upn = upn or machine.units_per_node
    n1 = ctx.problem.n_toroidal
    max_rpu = max_rpu or n1
    rows = []
    for rpu in range(1, max_rpu + 1):
        if (nodes * upn * rpu) % n1:
            continue
        for strategy in SEARCH_STRATEGIES:
            row = _sweep_row(ctx, machine, nodes, rpu, strategy, upn, label=f"{strategy} r{rpu}")
            if row.feasible:
                rows.append(row)
            elif "infeasible" in row.detail:
                raise InfeasibleError(row.detail)

    def key(row: ReportRow):
        est = row.estimate
        return (round(est.step_ms, 9), round(est.traffic.class_totals["internode"], 9),
                SEARCH_STRATEGIES.index(row.placement), row.ranks_per_unit)

    return sorted(rows, key=key)


def cmd_optimize(args: argparse.Namespace) -> int:
    ctx = Context(args.problem, args.calib, args.scenario, args.route_host_pcie)
    machine = load_machine(args.machine)
    try:
        ranked = optimize_placements(ctx, machine, args.nodes, args.units_per_node, args.max_ranks_per_unit)
    except InfeasibleError as exc:
        print(f"{machine.name} x{args.nodes}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if not ranked:
        raise SpecError("no feasible placement: no ranks-per-unit value gives a multiple of n_toroidal")
    best = ranked[0]
    print(f"best placement: {best.placement}, {best.ranks_per_unit} rank(s)/unit, "
          f"step {best.estimate.step_ms:.0f} ms, internode {best.estimate.traffic.class_totals['internode']:.1f} GB")
    print()
    body = [[str(k + 1), r.placement, str(r.ranks_per_unit), f"{r.estimate.step_ms:.0f}",
             f"{r.estimate.comm_ms:.0f}", f"{r.estimate.traffic.class_totals['internode']:.1f}"]
            for k, r in enumerate(ranked)]
    print(table(("rank", "placement", "r/unit", "step ms", "comm ms", "internode GB"), body))
    _write_csv(args.csv, ranked)
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    records = cal.load_records(args.data)
    problem = load_problem(args.problem)
    scenarios = cal.load_scenarios(args.scenario)
    result = cal.fit_all(records, problem, scenarios, volume_policy=args.volume_fit)
    text = cal.dump_calibration(result, problem)
    log = sys.stdout
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
        log = sys.stderr
    print(f"volume law: alpha = {result.alpha:.4g} GB, beta = {result.beta:.4g} GB/GPU", file=log)
    for name, mc in result.machines.items():
        print(f"{name}: w_par {mc.compute.w_par:.6g} w_ser {mc.compute.w_ser:.4g} eta_net {mc.eta_net:.3f} "
              f"eta_fab {mc.eta_fab:.3f} other {mc.other_ms:.1f} ms; compute residuals [{result.residuals[name]}]",
              file=log)
    for w in result.warnings:
        print(f"warning: {w}", file=log)
    return EXIT_OK


def _comparison_line(report: cal.ValidationReport) -> str | None:
    single = [r for r in report.rows if r.record.nodes == 1 and r.record.gpus]
    multi = [r for r in report.rows if r.record.nodes > 1 and r.record.gpus]
    if not single or not multi:
        return None
    s = min(single, key=lambda r: r.predicted.step_ms)
    gpus = sorted(r.record.gpus for r in multi)
    steps = sorted(r.predicted.step_ms for r in multi)
    return (f"single node: {s.record.gpus} GPUs at {s.predicted.step_ms:.0f} ms predicted; "
            f"multi-node GPU runs at {steps[0]:.0f}-{steps[-1]:.0f} ms predicted use {gpus[0]}-{gpus[-1]} GPUs "
            f"(single node uses {s.record.gpus / gpus[0]:.2f}x the GPUs of the smallest)")


def cmd_validate(args: argparse.Namespace) -> int:
    records = cal.load_records(args.data)
    ctx = Context(args.problem, args.calib, args.scenario)
    if ctx.calib is None:
        raise SpecError("validate needs a calibration (path or table1-fit)")
    report = cal.validate(records, ctx.calib, ctx.base_problem, cal.load_scenarios(args.scenario))
    body = []
    for row in report.rows:
        p, m = row.predicted, row.record
        body.append([m.label, f"{p.step_ms:.0f}", f"{m.step_ms:.0f}", f"{row.step_err_pct:+.1f}%",
                     f"{p.compute_ms:.0f}", f"{m.compute_ms:.0f}", f"{p.comm_ms:.0f}", f"{m.comm_ms:.0f}",
                     f"{p.fraction_pct}%", f"{fraction_in_compute(m.step_ms, m.compute_ms)}%"])
    print(table(("record", "step", "meas", "err", "compute", "meas", "comm", "meas", "compute %", "meas"), body))
    print()
    print(f"median |step error| {report.median_abs_err:.1f}%, max {report.max_abs_err:.1f}%")
    line = _comparison_line(report)
    if line:
        print(line)
    if args.csv:
        rows = []
        scenarios = cal.load_scenarios(args.scenario)
        for row in report.rows:
            run = cal.resolve_run(row.record, scenarios)
            rows.append(ReportRow(row.record.label, run.machine.name, run.nodes, run.units_per_node,
                                  run.ranks_per_unit, run.placement, row.predicted,
                                  f"step_err_pct={row.step_err_pct!r}"))
        Path(args.csv).write_text(write_report_csv(rows))
    if not report.passes(args.max_err):
        w = report.worst
        print(f"FAIL: {w.record.label} step error {w.step_err_pct:+.1f}% exceeds {args.max_err:g}%", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_export_assets(args: argparse.Namespace) -> int:
    out = Path(args.dir)
    (out / "machines").mkdir(parents=True, exist_ok=True)
    for name in PRESETS:
        (out / "machines" / f"{name}.machine").write_text(preset_text(name))
    for name in BUNDLED_PROBLEMS:
        (out / f"{name}.problem").write_text(problem_text(name))
    (out / "table1.csv").write_text(cal.bundled_text("table1.csv"))
    (out / "table1.scenario").write_text(cal.bundled_text("table1.scenario"))
    print(f"wrote assets to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cgyroperf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, calib_default: str = "table1-fit") -> None:
        p.add_argument("--problem", default="nl03", help="bundled problem name or problem file")
        p.add_argument("--calib", default=calib_default, help="'ideal', 'table1-fit' or a calibration file")
        p.add_argument("--scenario", default=None, help="record-to-machine scenario file (default: bundled)")
        p.add_argument("--csv", default=None, help="also write the report CSV here")

    def deployment(p: argparse.ArgumentParser) -> None:
        p.add_argument("--units-per-node", type=int, default=None)
        p.add_argument("--ranks-per-unit", type=int, default=1)
        p.add_argument("--placement", default="block_comm1", choices=SEARCH_STRATEGIES)
        p.add_argument("--route-host-pcie", action="store_true", help="charge internode bytes to the host link too")

    p = sub.add_parser("predict", help="estimate one step for one scenario")
    p.add_argument("--machine", required=True)
    p.add_argument("--nodes", type=int, required=True)
    deployment(p)
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="estimate a list of scenarios")
    p.add_argument("--machines", action="append", help="comma-separated machine presets or files")
    p.add_argument("--nodes", action="append", help="comma-separated node counts")
    p.add_argument("--nvswitch", action="append", help="comma-separated joined_nodes values (hypothetical machines)")
    p.add_argument("--records", default=None, help="sweep the configurations of a measurement csv ('table1')")
    deployment(p)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="search placements and ranks per unit")
    p.add_argument("--machine", required=True)
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--units-per-node", type=int, default=None)
    p.add_argument("--max-ranks-per-unit", type=int, default=None)
    p.add_argument("--route-host-pcie", action="store_true")
    common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("fit", help="fit a calibration to measurements")
    p.add_argument("--data", default="table1")
    p.add_argument("--problem", default="nl03")
    p.add_argument("--scenario", default=None)
    p.add_argument("--volume-fit", default="reference", choices=("reference", "all"))
    p.add_argument("--out", default=None, help="calibration file to write (default: stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("validate", help="compare predictions with measurements")
    p.add_argument("--data", default="table1")
    p.add_argument("--max-err", type=float, default=30.0, help="max allowed |step error| in percent")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("export-assets", help="write bundled presets, problem and data to a directory")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_export_assets)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SpecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
