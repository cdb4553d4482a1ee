import pytest

from gridweld import netmodel
from gridweld.netmodel import (CaseError, case_from_dict, case_to_dict,
                               default_partition, load_case, load_partition,
                               partition_from_dict)

from conftest import load, partition_path


def minimal_two_bus():
    return {
        "base_mva": 100.0,
        "networks": [{
            "name": "t0", "side": "transmission",
            "buses": [
                {"id": "b1", "kind": "slack", "phases": "1", "v_set": 1.0,
                 "v_min": 0.9, "v_max": 1.1, "infeasibility_eligible": False},
                {"id": "b2", "kind": "pq", "phases": "1",
                 "v_min": 0.9, "v_max": 1.1, "infeasibility_eligible": True},
            ],
            "branches": [{"from": "b1", "to": "b2", "G": [[1.0]], "B": [[0.0]]}],
            "loads": [{"bus": "b2", "p": {"1": 0.2}, "q": {"1": 0.05}}],
            "generators": [],
        }],
        "couplings": [],
    }


def test_minimal_two_bus_case():
    nets, coups = case_from_dict(minimal_two_bus())
    assert len(nets) == 1 and not coups
    net = nets[0]
    assert [b.kind for b in net.buses] == ["slack", "pq"]
    assert len(net.branches) == 1
    assert net.power_base_va == 100e6


def test_dangling_branch_reference_names_the_bus():
    case = minimal_two_bus()
    case["networks"][0]["branches"].append(
        {"from": "b1", "to": "b99", "G": [[1.0]], "B": [[0.0]]})
    with pytest.raises(CaseError, match="b99"):
        case_from_dict(case)


def test_duplicate_bus_ids_rejected():
    case = minimal_two_bus()
    case["networks"][0]["buses"].append(dict(case["networks"][0]["buses"][1]))
    with pytest.raises(CaseError, match="duplicate"):
        case_from_dict(case)


def test_nonpositive_base_rejected():
    case = minimal_two_bus()
    case["base_mva"] = 0.0
    with pytest.raises(CaseError, match="base_mva"):
        case_from_dict(case)


def test_slack_must_not_be_eligible():
    case = minimal_two_bus()
    case["networks"][0]["buses"][0]["infeasibility_eligible"] = True
    with pytest.raises(CaseError, match="slack"):
        case_from_dict(case)


def test_v_set_requirements():
    case = minimal_two_bus()
    del case["networks"][0]["buses"][0]["v_set"]
    with pytest.raises(CaseError, match="v_set"):
        case_from_dict(case)
    case = minimal_two_bus()
    case["networks"][0]["buses"][1]["v_set"] = 1.0
    with pytest.raises(CaseError, match="v_set"):
        case_from_dict(case)


def test_voltage_band_ordering_checked():
    case = minimal_two_bus()
    case["networks"][0]["buses"][1]["v_min"] = 1.2
    with pytest.raises(CaseError, match="v_min"):
        case_from_dict(case)


def test_disconnected_network_rejected():
    case = minimal_two_bus()
    case["networks"][0]["buses"].append(
        {"id": "b3", "kind": "pq", "phases": "1", "v_min": 0.9, "v_max": 1.1,
         "infeasibility_eligible": True})
    with pytest.raises(CaseError, match="disconnected"):
        case_from_dict(case)


def test_micro_case_counts():
    nets, coups = load("case_micro_td")
    t = [n for n in nets if n.side == "transmission"]
    d = [n for n in nets if n.side == "distribution"]
    assert len(t) == 1 and len(d) == 1 and len(coups) == 1
    assert len(t[0].buses) == 4
    assert len(d[0].buses) == 3
    assert all(b.phases == ("a", "b", "c") for b in d[0].buses)
    assert coups[0].kappa == pytest.approx(5e5 / 7500.0)


def test_coupling_node_must_be_pq_and_unique():
    nets, coups = load("case_micro_td")
    case = case_to_dict(nets, coups)
    case["couplings"].append(dict(case["couplings"][0]))
    with pytest.raises(CaseError, match="already has a port"):
        case_from_dict(case)
    case = case_to_dict(nets, coups)
    for b in case["networks"][1]["buses"]:
        if b["id"] == "d1":
            b["kind"] = "pv"
            b["v_set"] = 1.0
    with pytest.raises(CaseError, match="pq bus"):
        case_from_dict(case)


def test_distribution_needs_coupling():
    case = minimal_two_bus()
    case["networks"].append({
        "name": "d0", "side": "distribution",
        "buses": [{"id": "d1", "kind": "pq", "phases": "abc", "v_min": 0.9,
                   "v_max": 1.1, "infeasibility_eligible": False}],
        "branches": [], "loads": [], "generators": []})
    with pytest.raises(CaseError, match="coupling"):
        case_from_dict(case)


def test_roundtrip_serialization_field_by_field(tmp_path):
    for name in ("case_micro_td", "case_threefeeder_td", "case_feeder210"):
        nets, coups = load(name)
        out = tmp_path / f"{name}.json"
        netmodel.save_case(out, nets, coups)
        nets2, coups2 = load_case(out)
        assert case_to_dict(nets, coups) == case_to_dict(nets2, coups2)
        assert coups == coups2
        for a, b in zip(nets, nets2):
            assert a.buses == b.buses
            assert a.branches == b.branches
            assert a.loads == b.loads
            assert a.generators == b.generators


def test_per_unit_physical_round_trip():
    nets, _ = load("case_micro_td")
    for net in nets:
        for val in (0.013, 1.0, 7.3):
            there = netmodel.power_to_physical(net, val)
            back = netmodel.power_to_per_unit(net, there)
            assert abs(back - val) <= 1e-12 * abs(val)
        if net.voltage_base_v is not None:
            v = netmodel.voltage_to_per_unit(
                net, netmodel.voltage_to_physical(net, 0.97))
            assert abs(v - 0.97) <= 1e-12


def test_default_partition_micro():
    nets, coups = load("case_micro_td")
    part = default_partition(nets, coups)
    assert [s.name for s in part.subproblems] == ["t0", "d0"]
    assert part.external_couplings == [0]
    assert part.internal_couplings == []


def test_partition_file_micro_default():
    nets, coups = load("case_micro_td")
    part = load_partition(partition_path("micro_default"), nets, coups)
    assert len(part.subproblems) == 2
    assert len(part.external_couplings) == 1


def test_degenerate_single_subproblem_warns():
    nets, coups = load("case_micro_td")
    with pytest.warns(UserWarning, match="degenerate"):
        part = load_partition(partition_path("micro_single"), nets, coups)
    assert len(part.subproblems) == 1
    assert part.internal_couplings == [0]
    assert part.external_couplings == []


def test_threefeeder_partition_shape():
    nets, coups = load("case_threefeeder_td")
    part = load_partition(partition_path("threefeeder"), nets, coups)
    assert len(part.subproblems) == 4
    assert len(part.external_couplings) == 3


def test_partition_validates_assignment():
    nets, coups = load("case_micro_td")
    with pytest.raises(CaseError, match="assigned to both"):
        partition_from_dict({"subproblems": [
            {"name": "a", "networks": ["t0", "d0"]},
            {"name": "b", "networks": ["d0"]}]}, nets, coups)
    with pytest.raises(CaseError, match="not assigned"):
        partition_from_dict({"subproblems": [
            {"name": "a", "networks": ["t0"]}]}, nets, coups)
    with pytest.raises(CaseError, match="unknown network"):
        partition_from_dict({"subproblems": [
            {"name": "a", "networks": ["t0", "dX"]}]}, nets, coups)


def test_partition_covers_variables_once():
    nets, coups = load("case_threefeeder_td")
    part = load_partition(partition_path("threefeeder"), nets, coups)
    seen = [m for s in part.subproblems for m in s.networks]
    assert sorted(seen) == sorted(n.name for n in nets)
    assert len(seen) == len(set(seen))
