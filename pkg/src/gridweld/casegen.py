"""Deterministic generators for the bundled desk-scale cases.

Run ``python -m gridweld.casegen <directory>`` to (re)write every case and
partition file.  The cases share one per-unit convention: 100 MVA system
base on the transmission side; each distribution feeder on a 0.5 MVA
per-phase, 7500 V line-to-neutral base, which makes the coupling-port
current aggregation power-consistent between the sides.
"""

from __future__ import annotations

import json
import os
import sys

import numpy as np

S_BASE = 5e5          # VA per phase, distribution side
V_BASE = 7500.0       # volts line-to-neutral at every coupling node
BASE_MVA = 100.0


def _tline(r, x):
    y = 1.0 / complex(r, x)
    return [[y.real]], [[y.imag]]


def _dline(zs, zm, scale=1.0):
    z = np.full((3, 3), complex(*zm)) * scale
    np.fill_diagonal(z, complex(*zs) * scale)
    y = np.linalg.inv(z)
    return y.real.tolist(), y.imag.tolist()


def _bus(bid, kind="pq", phases="abc", v_set=None, v_min=0.9, v_max=1.1,
         eligible=True, x=None, y=None):
    b = {"id": bid, "kind": kind, "phases": phases, "v_min": v_min,
         "v_max": v_max, "infeasibility_eligible": eligible}
    if v_set is not None:
        b["v_set"] = v_set
    if x is not None:
        b["x"], b["y"] = x, y
    return b


def _load(bus, p, q, phases="abc"):
    return {"bus": bus, "p": {ph: p for ph in phases},
            "q": {ph: q for ph in phases}}


def _coupling(t_bus, d_bus):
    return {"t_bus": t_bus, "d_bus": d_bus, "s_base": S_BASE, "v_base": V_BASE}


def _t_micro(load_scale=1.0, v_min=0.9, v_max=1.1, extra_buses=()):
    g12, b12 = _tline(0.01, 0.05)
    g23, b23 = _tline(0.015, 0.06)
    g13, b13 = _tline(0.01, 0.04)
    g34, b34 = _tline(0.008, 0.035)
    net = {
        "name": "t0", "side": "transmission",
        "buses": [
            _bus("t1", "slack", "1", v_set=1.02, v_min=v_min, v_max=v_max,
                 eligible=False, x=0.0, y=0.0),
            _bus("t2", "pv", "1", v_set=1.01, v_min=v_min, v_max=v_max, x=1.0, y=0.0),
            _bus("t3", "pq", "1", v_min=v_min, v_max=v_max, x=1.0, y=1.0),
            _bus("t4", "pq", "1", v_min=v_min, v_max=v_max, eligible=False,
                 x=0.0, y=1.0),
        ],
        "branches": [
            {"from": "t1", "to": "t2", "G": g12, "B": b12},
            {"from": "t2", "to": "t3", "G": g23, "B": b23},
            {"from": "t1", "to": "t3", "G": g13, "B": b13},
            {"from": "t3", "to": "t4", "G": g34, "B": b34},
        ],
        "loads": [{"bus": "t3", "p": {"1": 0.4 * load_scale},
                   "q": {"1": 0.1 * load_scale}}],
        "generators": [{"bus": "t2", "mode": "pv", "p": {"1": 0.3},
                        "q_min": -0.5, "q_max": 0.5}],
    }
    net["buses"].extend(extra_buses)
    return net


def _d_feeder(name, prefix, n_bus, p, q, v_min=0.9, v_max=1.1, zs=(0.02, 0.05),
              zm=(0.005, 0.016), x0=0.0):
    g, b = _dline(zs, zm)
    buses = [_bus(f"{prefix}1", v_min=v_min, v_max=v_max, eligible=False,
                  x=x0, y=2.0)]
    branches, loads = [], []
    for k in range(2, n_bus + 1):
        buses.append(_bus(f"{prefix}{k}", v_min=v_min, v_max=v_max,
                          x=x0 + 0.3 * (k - 1), y=2.0))
        branches.append({"from": f"{prefix}{k-1}", "to": f"{prefix}{k}",
                         "G": g, "B": b})
        loads.append(_load(f"{prefix}{k}", p, q))
    return {"name": name, "side": "distribution", "buses": buses,
            "branches": branches, "loads": loads, "generators": []}


def case_micro_td(load_scale=1.0, v_min=0.9, v_max=1.1):
    """4-bus transmission ring plus a 3-node three-phase feeder, one port."""
    d = _d_feeder("d0", "d", 3, 0.30 * load_scale, 0.10 * load_scale,
                  v_min=v_min, v_max=v_max)
    return {"base_mva": BASE_MVA,
            "networks": [_t_micro(v_min=v_min, v_max=v_max), d],
            "couplings": [_coupling("t4", "d1")]}


def case_micro_td_stressed():
    """Deliverability infeasibility deep in the feeder (wide bounds)."""
    case = case_micro_td(load_scale=10.0, v_min=0.4, v_max=1.6)
    return case


def case_tline_stressed():
    """Transmission-side bottleneck: a large load behind a weak line."""
    extra = [_bus("t5", "pq", "1", v_min=0.4, v_max=1.6, x=2.0, y=1.0)]
    case = {"base_mva": BASE_MVA,
            "networks": [_t_micro(v_min=0.4, v_max=1.6, extra_buses=extra),
                         _d_feeder("d0", "d", 3, 0.30, 0.10,
                                   v_min=0.4, v_max=1.6)],
            "couplings": [_coupling("t4", "d1")]}
    g, b = _tline(0.02, 0.2)
    case["networks"][0]["branches"].append({"from": "t3", "to": "t5",
                                            "G": g, "B": b})
    case["networks"][0]["loads"].append({"bus": "t5", "p": {"1": 3.0},
                                         "q": {"1": 0.6}})
    return case


def case_twofeeder_td(feeder_b_scale=1.0, v_min=0.9, v_max=1.1):
    """3-bus transmission triangle feeding two feeders at two POIs."""
    g12, b12 = _tline(0.01, 0.05)
    g13, b13 = _tline(0.012, 0.055)
    g23, b23 = _tline(0.015, 0.06)
    t = {"name": "t0", "side": "transmission",
         "buses": [
             _bus("t1", "slack", "1", v_set=1.02, v_min=v_min, v_max=v_max,
                  eligible=False, x=0.0, y=0.0),
             _bus("t2", "pq", "1", v_min=v_min, v_max=v_max, eligible=False,
                  x=1.0, y=0.0),
             _bus("t3", "pq", "1", v_min=v_min, v_max=v_max, eligible=False,
                  x=-1.0, y=0.0),
         ],
         "branches": [
             {"from": "t1", "to": "t2", "G": g12, "B": b12},
             {"from": "t1", "to": "t3", "G": g13, "B": b13},
             {"from": "t2", "to": "t3", "G": g23, "B": b23},
         ],
         "loads": [], "generators": []}
    da = _d_feeder("dA", "da", 2, 0.40, 0.12, v_min=v_min, v_max=v_max, x0=1.0)
    db = _d_feeder("dB", "db", 3, 0.35 * feeder_b_scale, 0.10 * feeder_b_scale,
                   v_min=v_min, v_max=v_max, x0=-1.0)
    return {"base_mva": BASE_MVA, "networks": [t, da, db],
            "couplings": [_coupling("t2", "da1"), _coupling("t3", "db1")]}


def case_twofeeder_stressed():
    return case_twofeeder_td(feeder_b_scale=10.0, v_min=0.4, v_max=1.6)


def case_threefeeder_td():
    """One transmission network with three distribution feeders."""
    case = case_twofeeder_td()
    g, b = _tline(0.01, 0.045)
    t = case["networks"][0]
    t["buses"].append(_bus("t4", "pq", "1", eligible=False, x=0.0, y=-1.0))
    t["branches"].append({"from": "t1", "to": "t4", "G": g, "B": b})
    dc = _d_feeder("dC", "dc", 4, 0.25, 0.08, x0=0.0)
    case["networks"].append(dc)
    case["couplings"].append(_coupling("t4", "dc1"))
    return case


def case_micro_qstress():
    """Reactive-compensation study case: heavy feeder loading (the doubled
    nominal demand grown by the usual 1.5 stress factor) under tight
    voltage bands, so the band can only be met with reactive support."""
    return case_micro_td(load_scale=3.0, v_min=0.95, v_max=1.05)


def case_2bus_mismatch():
    """Two-bus deliverability toy: demand beyond the transfer limit."""
    return {"base_mva": BASE_MVA,
            "networks": [{
                "name": "t0", "side": "transmission",
                "buses": [
                    _bus("t1", "slack", "1", v_set=1.0, v_min=0.05, v_max=3.0,
                         eligible=False),
                    _bus("t2", "pq", "1", v_min=0.05, v_max=3.0),
                ],
                "branches": [{"from": "t1", "to": "t2", "G": [[1.0]],
                              "B": [[0.0]]}],
                "loads": [{"bus": "t2", "p": {"1": 0.5}, "q": {"1": 0.0}}],
                "generators": [],
            }],
            "couplings": []}


def case_micro_flowcap():
    """Binding branch-flow limits on relievable branches: a meshed
    transmission corridor and the feeder's head section, plus a small
    head-node load so every nonlinearity touches the torn boundary.
    Capped branches sit where eligible buses can absorb the overflow;
    a cap on the single radial tie into an ineligible POI would leave
    the torn transmission cell without an interior whenever the frozen
    draw exceeds the cap.  Consensus mode rejects head-node
    nonlinearities, so this case targets central/dpdip runs."""
    case = case_micro_td()
    t = case["networks"][0]
    for br in t["branches"]:
        if br["from"] == "t1" and br["to"] == "t3":
            br["flow_limit"] = 0.21       # base corridor flow is ~0.267
    d = case["networks"][1]
    d["loads"].append(_load("d1", 0.15, 0.05))
    for br in d["branches"]:
        if br["from"] == "d1":
            br["flow_limit"] = 0.52       # base head-section flow is ~0.64
    return case


def case_feeder210(load_scale=1.0, v_min=0.9, v_max=1.1):
    """Small transmission head with a 72-bus (216 phase-node) feeder.

    Trunk of 12 three-phase buses; each trunk bus past the head spawns a
    five-bus lateral carrying the load.  Two mid-feeder trunk sections are
    deliberately weak so that stressed variants localize there.
    """
    g12, b12 = _tline(0.005, 0.03)
    t = {"name": "t0", "side": "transmission",
         "buses": [
             _bus("t1", "slack", "1", v_set=1.02, v_min=v_min, v_max=v_max,
                  eligible=False, x=-2.0, y=0.0),
             _bus("t2", "pq", "1", v_min=v_min, v_max=v_max, eligible=False,
                  x=-1.0, y=0.0),
         ],
         "branches": [{"from": "t1", "to": "t2", "G": g12, "B": b12}],
         "loads": [], "generators": []}
    buses = [_bus("f1", v_min=v_min, v_max=v_max, eligible=False, x=0.0, y=0.0)]
    branches, loads = [], []
    n_trunk, n_lat = 12, 6
    for k in range(2, n_trunk + 1):
        weak = 2.6 if k in (7, 8) else 1.0
        g, b = _dline((0.004, 0.009), (0.001, 0.003), scale=weak)
        buses.append(_bus(f"f{k}", v_min=v_min, v_max=v_max,
                          x=float(k - 1), y=0.0))
        branches.append({"from": f"f{k-1}", "to": f"f{k}", "G": g, "B": b})
    for k in range(1, n_trunk + 1):
        if k == 1:
            continue
        for j in range(1, n_lat + 1):
            g, b = _dline((0.006, 0.012), (0.0015, 0.004))
            bid = f"f{k}l{j}"
            prev = f"f{k}" if j == 1 else f"f{k}l{j-1}"
            buses.append(_bus(bid, v_min=v_min, v_max=v_max,
                              x=float(k - 1), y=float(j)))
            branches.append({"from": prev, "to": bid, "G": g, "B": b})
            loads.append(_load(bid, 0.028 * load_scale, 0.011 * load_scale))
    d = {"name": "d0", "side": "distribution", "buses": buses,
         "branches": branches, "loads": loads, "generators": []}
    return {"base_mva": BASE_MVA, "networks": [t, d],
            "couplings": [_coupling("t2", "f1")]}


def case_feeder210_stressed():
    return case_feeder210(load_scale=1.5, v_min=0.95, v_max=1.05)


CASES = {
    "case_micro_td": case_micro_td,
    "case_micro_td_stressed": case_micro_td_stressed,
    "case_tline_stressed": case_tline_stressed,
    "case_twofeeder_td": case_twofeeder_td,
    "case_twofeeder_stressed": case_twofeeder_stressed,
    "case_threefeeder_td": case_threefeeder_td,
    "case_micro_qstress": case_micro_qstress,
    "case_micro_flowcap": case_micro_flowcap,
    "case_2bus_mismatch": case_2bus_mismatch,
    "case_feeder210": case_feeder210,
    "case_feeder210_stressed": case_feeder210_stressed,
}

PARTITIONS = {
    "micro_default": {"subproblems": [{"name": "T", "networks": ["t0"]},
                                      {"name": "D", "networks": ["d0"]}]},
    "micro_single": {"subproblems": [{"name": "ALL", "networks": ["t0", "d0"]}]},
    "twofeeder": {"subproblems": [{"name": "T", "networks": ["t0"]},
                                  {"name": "DA", "networks": ["dA"]},
                                  {"name": "DB", "networks": ["dB"]}]},
    "threefeeder": {"subproblems": [{"name": "T", "networks": ["t0"]},
                                    {"name": "DA", "networks": ["dA"]},
                                    {"name": "DB", "networks": ["dB"]},
                                    {"name": "DC", "networks": ["dC"]}]},
    "feeder210": {"subproblems": [{"name": "T", "networks": ["t0"]},
                                  {"name": "D", "networks": ["d0"]}]},
}


def write_all(directory):
    os.makedirs(directory, exist_ok=True)
    os.makedirs(os.path.join(directory, "partitions"), exist_ok=True)
    for name, fn in CASES.items():
        with open(os.path.join(directory, f"{name}.json"), "w") as fh:
            json.dump(fn(), fh, indent=1, sort_keys=True)
            fh.write("\n")
    for name, part in PARTITIONS.items():
        with open(os.path.join(directory, "partitions", f"{name}.json"), "w") as fh:
            json.dump(part, fh, indent=1, sort_keys=True)
            fh.write("\n")


if __name__ == "__main__":
    write_all(sys.argv[1] if len(sys.argv) > 1 else "cases")
