"""Planner-facing result assembly: weak-node lists, totals, exports.

The JSON report is deterministic for a fixed run configuration: volatile
quantities (wall time, worker count) are kept out of the serialized form so
byte-identical reports certify reproducible runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = "gridweld-report/1"
NONZERO_THRESHOLD = 1e-6


@dataclass
class NodeEntry:
    net: str
    bus: str
    phase: str
    components: dict[str, float]
    magnitude: float
    x: float | None = None
    y: float | None = None


@dataclass
class SolveReport:
    status: str
    mode: str
    norm: str
    source_kind: str | None
    q_only: bool
    objective: float
    per_node: list[NodeEntry]
    totals: dict[str, float]
    nonzero_count: int
    threshold: float
    kkt: dict[str, float]
    epochs: int
    inner_iterations: int
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0           # excluded from the JSON form

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_json_dict(self) -> dict:
        nodes = sorted(self.per_node, key=lambda e: (e.net, e.bus, e.phase))
        return {
            "schema_version": SCHEMA_VERSION,
            "status": self.status,
            "mode": self.mode,
            "norm": self.norm,
            "source_kind": self.source_kind,
            "q_only": self.q_only,
            "objective_pu": self.objective,
            "totals": dict(sorted(self.totals.items())),
            "nonzero_count": self.nonzero_count,
            "threshold": self.threshold,
            "kkt": dict(sorted(self.kkt.items())),
            "epochs": self.epochs,
            "inner_iterations": self.inner_iterations,
            "diagnostics": dict(sorted(self.diagnostics.items())),
            "per_node": [
                {"net": e.net, "bus": e.bus, "phase": e.phase,
                 "components": dict(sorted(e.components.items())),
                 "magnitude": e.magnitude,
                 **({"x": e.x, "y": e.y} if e.x is not None else {})}
                for e in nodes],
        }


def build_report(problem, state, status, *, mode, nets, epochs=1,
                 inner_iterations=0, kkt=None, diagnostics=None,
                 wall_time=0.0, threshold=NONZERO_THRESHOLD,
                 extra_nodes=None, norm=None, source_kind=None,
                 q_only=None) -> SolveReport:
    """Assemble a report from one solved problem (plus optional merged nodes).

    ``extra_nodes`` lets distributed drivers pass pre-extracted entries from
    other subproblems; this problem's sources are appended to them.
    """
    coords = {}
    for net in nets:
        for bus in net.buses:
            coords[(net.name, bus.id)] = (bus.x, bus.y)
    entries: list[NodeEntry] = list(extra_nodes) if extra_nodes else []
    have = {(e.net, e.bus, e.phase) for e in entries}
    if problem is not None:
        for src in problem.sources:
            comps = {c: float(state.x[i])
                     for c, i in zip(src.components, src.var_index)}
            mag = float(np.hypot.reduce(list(comps.values()))) if comps else 0.0
            xy = coords.get((src.net, src.bus), (None, None))
            entries.append(NodeEntry(net=src.net, bus=src.bus, phase=src.phase,
                                     components=comps, magnitude=mag,
                                     x=xy[0], y=xy[1]))
            have.add((src.net, src.bus, src.phase))
    for net in nets:
        for bus in net.buses:
            for ph in bus.phases:
                if (net.name, bus.id, ph) not in have:
                    entries.append(NodeEntry(net=net.name, bus=bus.id, phase=ph,
                                             components={}, magnitude=0.0,
                                             x=bus.x, y=bus.y))
    totals: dict[str, float] = {"magnitude": 0.0}
    for e in entries:
        totals["magnitude"] += abs(e.magnitude)
        for c, v in e.components.items():
            totals[c] = totals.get(c, 0.0) + abs(v)
    nz = sum(1 for e in entries if e.magnitude > threshold)
    norm = norm if norm is not None else (problem.norm if problem else "l2")
    source_kind = source_kind if source_kind is not None else (
        problem.source_kind if problem else None)
    q_only = q_only if q_only is not None else (
        problem.q_only if problem else False)
    objective = _merged_objective(entries, norm)
    return SolveReport(
        status=status, mode=mode, norm=norm, source_kind=source_kind,
        q_only=q_only,
        objective=objective, per_node=entries, totals=totals,
        nonzero_count=nz, threshold=threshold, kkt=kkt or {},
        epochs=epochs, inner_iterations=inner_iterations,
        diagnostics=diagnostics or {}, wall_time=wall_time)


def _merged_objective(entries, norm) -> float:
    vals = [v for e in entries for v in e.components.values()]
    if norm == "l2":
        return 0.5 * float(sum(v * v for v in vals))
    return float(sum(abs(v) for v in vals))


def localize_weak_nodes(report: SolveReport, threshold=NONZERO_THRESHOLD):
    """Ranked (bus, phase, magnitude) above threshold, largest first.

    Ties break on bus id, then phase, so rankings are reproducible.
    """
    picked = [(e.bus, e.phase, e.magnitude) for e in report.per_node
              if e.magnitude > threshold]
    return sorted(picked, key=lambda t: (-t[2], t[0], t[1]))


def export_heatmap(report: SolveReport, path):
    """Plot-ready CSV: one row per (bus, phase) with magnitude and coords."""
    nodes = sorted(report.per_node, key=lambda e: (e.net, e.bus, e.phase))
    with open(path, "w") as fh:
        fh.write("bus,phase,x,y,magnitude\n")
        for e in nodes:
            x = "" if e.x is None else repr(float(e.x))
            y = "" if e.y is None else repr(float(e.y))
            fh.write(f"{e.bus},{e.phase},{x},{y},{e.magnitude!r}\n")


def parse_heatmap(path):
    rows = []
    with open(path) as fh:
        header = fh.readline()
        for line in fh:
            bus, ph, x, y, mag = line.rstrip("\n").split(",")
            rows.append((bus, ph,
                         None if x == "" else float(x),
                         None if y == "" else float(y), float(mag)))
    return rows


def write_report(report: SolveReport, path):
    with open(path, "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
