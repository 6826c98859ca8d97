"""Text tables and the report CSV shared by ``predict``, ``sweep`` and
``optimize``."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

from cgyroperf.cost import StepEstimate
from cgyroperf.traffic import LINK_CLASSES

REPORT_COLUMNS = (
    "scenario", "machine", "nodes", "units_per_node", "ranks_per_unit", "placement", "feasible",
    "step_ms", "compute_ms", "comm_ms", "other_ms", "fraction_in_compute",
    "gb_per_unit_max", "gb_per_unit_mean", "gb_per_node_max", "gb_per_node_mean",
    "local_gb", "fabric_gb", "cross_domain_gb", "internode_gb", "bottlenecks", "detail",
)
_FLOAT_COLS = REPORT_COLUMNS[7:20]
_INT_COLS = ("nodes", "units_per_node", "ranks_per_unit")


@dataclass
class ReportRow:
    scenario: str
    machine: str
    nodes: int
    units_per_node: int
    ranks_per_unit: int
    placement: str
    estimate: StepEstimate | None = None
    detail: str = ""

    @property
    def feasible(self) -> bool:
        return self.estimate is not None

    def as_dict(self) -> dict[str, object]:
        d: dict[str, object] = {
            "scenario": self.scenario, "machine": self.machine, "nodes": self.nodes,
            "units_per_node": self.units_per_node, "ranks_per_unit": self.ranks_per_unit,
            "placement": self.placement, "feasible": self.feasible, "detail": self.detail,
        }
        est = self.estimate
        if est is None:
            d.update(dict.fromkeys(_FLOAT_COLS))
            d["bottlenecks"] = ""
            return d
        t = est.traffic
        totals = t.class_totals
        d.update(
            step_ms=est.step_ms, compute_ms=est.compute_ms, comm_ms=est.comm_ms, other_ms=est.other_ms,
            fraction_in_compute=est.fraction_in_compute,
            gb_per_unit_max=t.per_unit_egress_max, gb_per_unit_mean=t.per_unit_egress_mean,
            gb_per_node_max=t.per_node_egress_max, gb_per_node_mean=t.per_node_egress_mean,
            bottlenecks=";".join(f"{label}:{cls}" for label, cls in est.bottleneck),
        )
        for c in LINK_CLASSES:
            d[f"{c}_gb"] = totals[c]
        return d


def write_report_csv(rows: Iterable[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in rows:
        d = row.as_dict()
        out = []
        for col in REPORT_COLUMNS:
            v = d[col]
            if v is None:
                out.append("")
            elif isinstance(v, bool):
                out.append("yes" if v else "no")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        w.writerow(out)
    return buf.getvalue()


def read_report_csv(text: str) -> list[dict[str, object]]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
        raise ValueError("not a report csv (header mismatch)")
    out = []
    for raw in reader:
        d: dict[str, object] = dict(raw)
        for col in _FLOAT_COLS:
            d[col] = float(raw[col]) if raw[col] != "" else None
        for col in _INT_COLS:
            d[col] = int(raw[col])
        d["feasible"] = raw["feasible"] == "yes"
        out.append(d)
    return out


def fmt_ms(v: float) -> str:
    return f"{v:.0f}"


def fmt_gb(v: float) -> str:
    return f"{v:.1f}"


def table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in headers]
    for r in rows:
        widths = [max(w, len(c)) for w, c in zip(widths, r)]

    def line(cells: Sequence[str]) -> str:
        parts = [c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in enumerate(zip(cells, widths))]
        return "  ".join(parts).rstrip()

    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(headers), sep, *(line(r) for r in rows)])


def step_table(rows: Sequence[ReportRow]) -> str:
    headers = ("scenario", "nodes", "units", "r/unit", "placement", "step ms", "compute ms", "comm ms",
               "other ms", "compute %", "GB/unit", "GB/node")
    body = []
    for row in rows:
        est = row.estimate
        head = [row.scenario, str(row.nodes), str(row.nodes * row.units_per_node), str(row.ranks_per_unit),
                row.placement]
        if est is None:
            body.append(head + ["infeasible"] + [""] * 6)
            continue
        t = est.traffic
        body.append(head + [fmt_ms(est.step_ms), fmt_ms(est.compute_ms), fmt_ms(est.comm_ms), fmt_ms(est.other_ms),
                            f"{est.fraction_pct}%", fmt_gb(t.per_unit_egress_mean),
                            fmt_gb(t.per_node_egress_mean) if row.nodes > 1 else "N/A"])
    return table(headers, body)


def traffic_table(est: StepEstimate) -> str:
    headers = ("phase", "kind", "comm", *(f"{c} GB" for c in LINK_CLASSES), "ms", "bottleneck")
    body = []
    times = dict(est.phase_ms)
    classes = dict(est.bottleneck)
    for pt in est.traffic.phases:
        ph = pt.phase
        body.append([ph.label, ph.kind, ph.comm, *(fmt_gb(pt.class_gb[c]) for c in LINK_CLASSES),
                     fmt_ms(times[ph.label]), classes[ph.label]])
    totals = est.traffic.class_totals
    body.append(["total", "", "", *(fmt_gb(totals[c]) for c in LINK_CLASSES), fmt_ms(est.comm_ms), ""])
    return table(headers, body)


def egress_lines(est: StepEstimate) -> str:
    t = est.traffic
    return (
        f"per-unit egress GB: max {fmt_gb(t.per_unit_egress_max)}  mean {fmt_gb(t.per_unit_egress_mean)}\n"
        f"per-node egress GB: max {fmt_gb(t.per_node_egress_max)}  mean {fmt_gb(t.per_node_egress_mean)}"
    )
