"""Shipped-case hygiene: feasible cases truly solve inside their bands,
stressed variants truly violate or lack a solution."""

import pytest

from conftest import load
from oracles import solve_power_flow, within_bounds

FEASIBLE = ("case_micro_td", "case_twofeeder_td", "case_threefeeder_td",
            "case_feeder210")
STRESSED_BY_BOUNDS = ("case_micro_qstress", "case_feeder210_stressed")
STRESSED_BY_DELIVERABILITY = ("case_micro_td_stressed", "case_tline_stressed",
                              "case_twofeeder_stressed", "case_2bus_mismatch")


@pytest.mark.parametrize("case", FEASIBLE)
def test_feasible_cases_have_in_band_power_flow(case):
    nets, coups = load(case)
    pf = solve_power_flow(nets, coups)
    assert pf.success, f"{case}: power flow did not solve ({pf.mismatch:.2e})"
    ok, worst = within_bounds(nets, pf)
    assert ok, f"{case}: bound violated at {worst}"


@pytest.mark.parametrize("case", STRESSED_BY_BOUNDS)
def test_band_stressed_cases_violate_their_bands(case):
    nets, coups = load(case)
    pf = solve_power_flow(nets, coups)
    assert pf.success
    ok, worst = within_bounds(nets, pf)
    assert not ok, f"{case}: expected a voltage-band violation"


@pytest.mark.parametrize("case", STRESSED_BY_DELIVERABILITY)
def test_deliverability_cases_have_no_network_solution(case):
    nets, coups = load(case)
    pf = solve_power_flow(nets, coups)
    assert not pf.success, \
        f"{case}: expected no plain network solution, mismatch {pf.mismatch:.2e}"


def test_flowcap_case_violates_its_caps_at_the_network_solution():
    from oracles import net_ybus
    nets, coups = load("case_micro_flowcap")
    pf = solve_power_flow(nets, coups)
    assert pf.success           # solvable, but only outside the flow caps
    worst = 0.0
    for net in nets:
        nodes, idx, Y = net_ybus(net)
        for br in net.branches:
            if br.flow_limit is None:
                continue
            for oi, phi in enumerate(br.phases):
                cur = 0j
                for oj, phj in enumerate(br.phases):
                    y = br.g[oi][oj] + 1j * br.b[oi][oj]
                    cur += y * (pf.volts[(net.name, br.from_bus, phj)]
                                - pf.volts[(net.name, br.to_bus, phj)])
                worst = max(worst, abs(cur) - br.flow_limit)
    assert worst > 0.01


def test_feeder_case_is_at_least_two_hundred_phase_nodes():
    nets, _ = load("case_feeder210_stressed")
    d = next(n for n in nets if n.side == "distribution")
    assert sum(len(b.phases) for b in d.buses) >= 200
