import json

import pytest

from gridweld.netmodel import case_from_dict, case_to_dict
from gridweld.pdip import solve_centralized
from gridweld.report import (SCHEMA_VERSION, export_heatmap,
                             localize_weak_nodes, parse_heatmap, write_report)

from conftest import load


@pytest.fixture(scope="module")
def stressed_report():
    nets, coups = load("case_micro_td_stressed")
    return solve_centralized(nets, coups, source_kind="current", norm="l2")


def test_totals_equal_sum_of_per_node_values(stressed_report):
    rep = stressed_report
    by_comp = {}
    mag = 0.0
    for e in rep.per_node:
        mag += abs(e.magnitude)
        for c, v in e.components.items():
            by_comp[c] = by_comp.get(c, 0.0) + abs(v)
    assert rep.totals["magnitude"] == pytest.approx(mag, abs=1e-12)
    for c, v in by_comp.items():
        assert rep.totals[c] == pytest.approx(v, abs=1e-12)


def test_localize_empty_for_feasible_case():
    nets, coups = load("case_micro_td")
    rep = solve_centralized(nets, coups, source_kind="current", norm="l2")
    assert localize_weak_nodes(rep) == []


def test_localize_single_forced_bus():
    nets, coups = load("case_2bus_mismatch")
    rep = solve_centralized(nets, coups, source_kind="current", norm="l2")
    ranked = localize_weak_nodes(rep)
    assert [r[0] for r in ranked] == ["t2"]


def test_localize_ranked_descending_with_bus_tiebreak(stressed_report):
    ranked = localize_weak_nodes(stressed_report)
    mags = [m for _, _, m in ranked]
    assert mags == sorted(mags, reverse=True)
    for (b1, p1, m1), (b2, p2, m2) in zip(ranked, ranked[1:]):
        if m1 == m2:
            assert (b1, p1) < (b2, p2)


def test_l1_localizes_fewer_nodes_than_l2():
    nets, coups = load("case_micro_td_stressed")
    counts = {}
    for norm in ("l1", "l2"):
        rep = solve_centralized(nets, coups, source_kind="current", norm=norm)
        counts[norm] = len(localize_weak_nodes(rep))
    assert counts["l1"] < counts["l2"]


def test_heatmap_row_count_and_round_trip(tmp_path, stressed_report):
    nets, _ = load("case_micro_td_stressed")
    n_phase_nodes = sum(len(b.phases) for net in nets for b in net.buses)
    path = tmp_path / "heatmap.csv"
    export_heatmap(stressed_report, path)
    rows = parse_heatmap(path)
    assert len(rows) == n_phase_nodes
    by_key = {(e.bus, e.phase): e for e in stressed_report.per_node}
    for bus, ph, x, y, mag in rows:
        e = by_key[(bus, ph)]
        assert mag == pytest.approx(e.magnitude, abs=1e-12)
        if e.x is not None:
            assert x == pytest.approx(e.x, abs=1e-12)


def test_heatmap_header_only_for_empty_report(tmp_path):
    from gridweld.report import SolveReport
    rep = SolveReport(status="converged", mode="central", norm="l2",
                      source_kind="current", q_only=False, objective=0.0,
                      per_node=[], totals={"magnitude": 0.0}, nonzero_count=0,
                      threshold=1e-6, kkt={}, epochs=1, inner_iterations=0)
    path = tmp_path / "h.csv"
    export_heatmap(rep, path)
    assert path.read_text() == "bus,phase,x,y,magnitude\n"


def test_report_json_schema_and_volatile_exclusion(tmp_path, stressed_report):
    path = tmp_path / "report.json"
    write_report(stressed_report, path)
    doc = json.loads(path.read_text())
    assert doc["schema_version"] == SCHEMA_VERSION
    expected_keys = {"schema_version", "status", "mode", "norm", "source_kind",
                     "q_only", "objective_pu", "totals", "nonzero_count",
                     "threshold", "kkt", "epochs", "inner_iterations",
                     "diagnostics", "per_node"}
    assert set(doc) == expected_keys
    assert "wall_time" not in json.dumps(doc)
    assert doc["per_node"] == sorted(
        doc["per_node"], key=lambda e: (e["net"], e["bus"], e["phase"]))


def test_totals_invariant_under_bus_relabeling():
    nets, coups = load("case_micro_td_stressed")
    base = solve_centralized(nets, coups, source_kind="current", norm="l2")
    case = case_to_dict(nets, coups)
    relabeled = json.loads(json.dumps(case).replace('"d2"', '"zz_d2"')
                           .replace('"t3"', '"aa_t3"'))
    nets2, coups2 = case_from_dict(relabeled)
    rep2 = solve_centralized(nets2, coups2, source_kind="current", norm="l2")
    for key, val in base.totals.items():
        assert rep2.totals[key] == pytest.approx(val, abs=1e-10)
    assert rep2.nonzero_count == base.nonzero_count


def test_golden_report_structure(tmp_path):
    """Schema pin: field names and value kinds of the serialized report."""
    nets, coups = load("case_micro_td")
    rep = solve_centralized(nets, coups, source_kind="current", norm="l2")
    doc = rep.to_json_dict()
    assert doc["status"] == "converged"
    assert isinstance(doc["objective_pu"], float)
    assert isinstance(doc["kkt"]["stationarity"], float)
    node = doc["per_node"][0]
    assert {"net", "bus", "phase", "components", "magnitude"} <= set(node)
    assert doc["objective_pu"] < 1e-8
