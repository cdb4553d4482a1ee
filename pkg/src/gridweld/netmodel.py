"""Typed data model for combined transmission / distribution networks.

A case file is a single self-describing JSON document holding one or more
networks (positive-sequence transmission, three-phase distribution), plus
the coupling specs that tie a transmission bus to a distribution feeder
head.  Everything numeric is per-unit on each side's own base: the
transmission side on ``base_mva``, each distribution side on the
``(s_base, v_base)`` pair of its coupling.  Loader output is immutable in
spirit: networks are plain dataclasses that downstream code treats as
read-only, so they are safe to share across worker threads.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

TRANSMISSION_PHASE = "1"
DIST_PHASES = ("a", "b", "c")

BUS_KINDS = ("slack", "pv", "pq")


class CaseError(ValueError):
    """Raised when a case or partition file violates the schema."""


def _phase_tuple(raw, where: str) -> tuple[str, ...]:
    if isinstance(raw, str):
        items = list(raw)
    elif isinstance(raw, (list, tuple)):
        items = [str(p) for p in raw]
    else:
        raise CaseError(f"{where}: 'phases' must be a string or list, got {raw!r}")
    if not items:
        raise CaseError(f"{where}: 'phases' must be non-empty")
    if items == [TRANSMISSION_PHASE]:
        return (TRANSMISSION_PHASE,)
    bad = [p for p in items if p not in DIST_PHASES]
    if bad:
        raise CaseError(f"{where}: unknown phase(s) {bad}; expected subset of 'abc' or '1'")
    if len(set(items)) != len(items):
        raise CaseError(f"{where}: repeated phase in {items}")
    return tuple(p for p in DIST_PHASES if p in items)


@dataclass(frozen=True)
class Bus:
    id: str
    kind: str                      # slack | pv | pq
    phases: tuple[str, ...]
    v_set: float | None            # pu magnitude, set iff kind != pq
    v_min: float
    v_max: float
    infeasibility_eligible: bool
    x: float | None = None         # optional plot coordinates
    y: float | None = None


@dataclass(frozen=True)
class Branch:
    from_bus: str
    to_bus: str
    phases: tuple[str, ...]        # shared phase set the matrices are indexed by
    g: tuple[tuple[float, ...], ...]
    b: tuple[tuple[float, ...], ...]
    flow_limit: float | None = None


@dataclass(frozen=True)
class Load:
    bus: str
    p: dict[str, float]            # phase -> pu demand
    q: dict[str, float]


@dataclass(frozen=True)
class Generator:
    bus: str
    mode: str                      # pq | pv
    p: dict[str, float]            # phase -> pu injection
    q: dict[str, float]            # pq-mode fixed injection; ignored for pv
    q_min: float = float("-inf")   # pv-mode reactive box, per phase
    q_max: float = float("inf")


@dataclass(frozen=True)
class CouplingSpec:
    t_bus: str
    d_bus: str
    s_base: float                  # VA, per-phase power base of the D side
    v_base: float                  # volts, nominal line-to-neutral at the coupling node

    @property
    def kappa(self) -> float:
        return self.s_base / self.v_base


@dataclass
class Network:
    name: str
    side: str                      # transmission | distribution
    buses: list[Bus]
    branches: list[Branch]
    loads: list[Load]
    generators: list[Generator]
    base_mva: float
    power_base_va: float = 0.0     # resolved at load time (T: base_mva*1e6, D: coupling s_base)
    voltage_base_v: float | None = None
    _by_id: dict[str, Bus] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_id = {b.id: b for b in self.buses}

    def bus(self, bus_id: str) -> Bus:
        return self._by_id[bus_id]

    def has_bus(self, bus_id: str) -> bool:
        return bus_id in self._by_id

    def phase_nodes(self) -> list[tuple[str, str]]:
        """All (bus_id, phase) pairs in case-file order, phase-minor."""
        return [(b.id, ph) for b in self.buses for ph in b.phases]

    @property
    def slack_buses(self) -> list[Bus]:
        return [b for b in self.buses if b.kind == "slack"]


@dataclass
class Subproblem:
    """One partition cell: the networks it owns, resolved at load time."""
    name: str
    networks: list[str]


@dataclass
class Partition:
    subproblems: list[Subproblem]
    internal_couplings: list[int]   # indices into the case coupling list
    external_couplings: list[int]

    def owner_of(self, net_name: str) -> str:
        for sub in self.subproblems:
            if net_name in sub.networks:
                return sub.name
        raise KeyError(net_name)


# ---------------------------------------------------------------------------
# validation helpers


def _require(cond: bool, msg: str):
    if not cond:
        raise CaseError(msg)


def _validate_bus(raw: dict, net_name: str) -> Bus:
    where = f"network '{net_name}' bus {raw.get('id', '<missing id>')!r}"
    for key in ("id", "kind", "phases", "v_min", "v_max", "infeasibility_eligible"):
        _require(key in raw, f"{where}: missing field '{key}'")
    kind = str(raw["kind"]).lower()
    _require(kind in BUS_KINDS, f"{where}: kind must be one of {BUS_KINDS}, got {raw['kind']!r}")
    phases = _phase_tuple(raw["phases"], where)
    v_min, v_max = float(raw["v_min"]), float(raw["v_max"])
    _require(0.0 < v_min < v_max, f"{where}: need 0 < v_min < v_max, got ({v_min}, {v_max})")
    v_set = raw.get("v_set")
    if kind == "pq":
        _require(v_set is None, f"{where}: 'v_set' only valid on slack/pv buses")
    else:
        _require(v_set is not None, f"{where}: kind '{kind}' requires 'v_set'")
        v_set = float(v_set)
        _require(v_set > 0, f"{where}: 'v_set' must be positive")
    eligible = bool(raw["infeasibility_eligible"])
    _require(not (kind == "slack" and eligible),
             f"{where}: slack buses must have infeasibility_eligible = false")
    return Bus(id=str(raw["id"]), kind=kind, phases=phases, v_set=v_set,
               v_min=v_min, v_max=v_max, infeasibility_eligible=eligible,
               x=None if raw.get("x") is None else float(raw["x"]),
               y=None if raw.get("y") is None else float(raw["y"]))


def _validate_matrix(raw, n: int, where: str, name: str) -> tuple[tuple[float, ...], ...]:
    _require(isinstance(raw, list) and len(raw) == n,
             f"{where}: '{name}' must be a {n}x{n} matrix over the shared phase set")
    rows = []
    for r in raw:
        _require(isinstance(r, list) and len(r) == n, f"{where}: '{name}' row length != {n}")
        vals = tuple(float(v) for v in r)
        _require(all(abs(v) < float("inf") and v == v for v in vals),
                 f"{where}: '{name}' must be finite")
        rows.append(vals)
    return tuple(rows)


def _validate_branch(raw: dict, net: Network) -> Branch:
    where = f"network '{net.name}' branch {raw.get('from', '?')}-{raw.get('to', '?')}"
    for key in ("from", "to", "G", "B"):
        _require(key in raw, f"{where}: missing field '{key}'")
    f, t = str(raw["from"]), str(raw["to"])
    for bid in (f, t):
        _require(net.has_bus(bid), f"{where}: references unknown bus id '{bid}'")
    shared = tuple(p for p in net.bus(f).phases if p in net.bus(t).phases)
    _require(len(shared) > 0, f"{where}: endpoints share no phase")
    g = _validate_matrix(raw["G"], len(shared), where, "G")
    b = _validate_matrix(raw["B"], len(shared), where, "B")
    lim = raw.get("flow_limit")
    if lim is not None:
        lim = float(lim)
        _require(lim > 0, f"{where}: 'flow_limit' must be positive")
    return Branch(from_bus=f, to_bus=t, phases=shared, g=g, b=b, flow_limit=lim)


def _validate_phase_map(raw, bus: Bus, where: str, name: str) -> dict[str, float]:
    if raw is None:
        return {}
    _require(isinstance(raw, dict), f"{where}: '{name}' must map phase -> value")
    out = {}
    for ph, val in raw.items():
        _require(ph in bus.phases, f"{where}: phase '{ph}' not connected at bus '{bus.id}'")
        out[ph] = float(val)
    return out


def _validate_load(raw: dict, net: Network) -> Load:
    where = f"network '{net.name}' load at {raw.get('bus', '?')!r}"
    _require("bus" in raw, f"{where}: missing field 'bus'")
    bid = str(raw["bus"])
    _require(net.has_bus(bid), f"{where}: references unknown bus id '{bid}'")
    bus = net.bus(bid)
    return Load(bus=bid, p=_validate_phase_map(raw.get("p"), bus, where, "p"),
                q=_validate_phase_map(raw.get("q"), bus, where, "q"))


def _validate_generator(raw: dict, net: Network) -> Generator:
    where = f"network '{net.name}' generator at {raw.get('bus', '?')!r}"
    _require("bus" in raw, f"{where}: missing field 'bus'")
    bid = str(raw["bus"])
    _require(net.has_bus(bid), f"{where}: references unknown bus id '{bid}'")
    bus = net.bus(bid)
    mode = str(raw.get("mode", "pq")).lower()
    _require(mode in ("pq", "pv"), f"{where}: mode must be 'pq' or 'pv'")
    if mode == "pv":
        _require(bus.kind == "pv", f"{where}: pv-mode generator requires a pv bus")
    q_min = float(raw.get("q_min", float("-inf")))
    q_max = float(raw.get("q_max", float("inf")))
    _require(q_min <= q_max, f"{where}: q_min must be <= q_max")
    return Generator(bus=bid, mode=mode,
                     p=_validate_phase_map(raw.get("p"), bus, where, "p"),
                     q=_validate_phase_map(raw.get("q"), bus, where, "q"),
                     q_min=q_min, q_max=q_max)


def _check_connected(net: Network):
    if len(net.buses) <= 1:
        return
    adj: dict[str, set[str]] = {b.id: set() for b in net.buses}
    for br in net.branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    seen = {net.buses[0].id}
    stack = [net.buses[0].id]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    missing = [b.id for b in net.buses if b.id not in seen]
    _require(not missing, f"network '{net.name}' is disconnected; unreachable buses {missing}")


def _validate_network(raw: dict, idx: int, base_mva: float) -> Network:
    side = str(raw.get("side", "")).lower()
    _require(side in ("transmission", "distribution"),
             f"network[{idx}]: 'side' must be transmission|distribution, got {raw.get('side')!r}")
    name = str(raw.get("name", f"{side[0]}{idx}"))
    buses = [_validate_bus(b, name) for b in raw.get("buses", [])]
    _require(buses, f"network '{name}': needs at least one bus")
    ids = [b.id for b in buses]
    dup = {i for i in ids if ids.count(i) > 1}
    _require(not dup, f"network '{name}': duplicate bus ids {sorted(dup)}")
    if side == "transmission":
        for b in buses:
            _require(b.phases == (TRANSMISSION_PHASE,),
                     f"network '{name}' bus '{b.id}': transmission buses carry phase '1' only")
    else:
        for b in buses:
            _require(TRANSMISSION_PHASE not in b.phases,
                     f"network '{name}' bus '{b.id}': distribution buses carry phases from 'abc'")
    net = Network(name=name, side=side, buses=buses, branches=[], loads=[],
                  generators=[], base_mva=base_mva)
    net.branches = [_validate_branch(br, net) for br in raw.get("branches", [])]
    net.loads = [_validate_load(ld, net) for ld in raw.get("loads", [])]
    net.generators = [_validate_generator(g, net) for g in raw.get("generators", [])]
    n_slack = len(net.slack_buses)
    if side == "transmission":
        _require(n_slack == 1, f"network '{name}': transmission networks need exactly one "
                               f"slack bus, found {n_slack}")
    else:
        _require(n_slack == 0, f"network '{name}': distribution networks take their reference "
                               f"from the coupling node, not an internal slack")
    _check_connected(net)
    return net


def load_case(path) -> tuple[list[Network], list[CouplingSpec]]:
    """Parse and validate a case file; returns per-unit in-memory networks."""
    with open(path) as fh:
        raw = json.load(fh)
    return case_from_dict(raw)


def case_from_dict(raw: dict) -> tuple[list[Network], list[CouplingSpec]]:
    _require("base_mva" in raw, "case: missing field 'base_mva'")
    base_mva = float(raw["base_mva"])
    _require(base_mva > 0, f"case: 'base_mva' must be positive, got {base_mva}")
    nets = [_validate_network(n, i, base_mva) for i, n in enumerate(raw.get("networks", []))]
    _require(nets, "case: needs at least one network")
    names = [n.name for n in nets]
    _require(len(set(names)) == len(names), f"case: duplicate network names {names}")
    all_ids: dict[str, str] = {}
    for net in nets:
        for b in net.buses:
            _require(b.id not in all_ids,
                     f"bus id '{b.id}' appears in both '{all_ids.get(b.id)}' and '{net.name}'")
            all_ids[b.id] = net.name
    by_name = {n.name: n for n in nets}

    couplings = []
    for i, c in enumerate(raw.get("couplings", [])):
        where = f"coupling[{i}]"
        for key in ("t_bus", "d_bus", "s_base", "v_base"):
            _require(key in c, f"{where}: missing field '{key}'")
        t_bus, d_bus = str(c["t_bus"]), str(c["d_bus"])
        _require(t_bus in all_ids, f"{where}: references unknown bus id '{t_bus}'")
        _require(d_bus in all_ids, f"{where}: references unknown bus id '{d_bus}'")
        t_net, d_net = by_name[all_ids[t_bus]], by_name[all_ids[d_bus]]
        _require(t_net.side == "transmission", f"{where}: 't_bus' must sit in a transmission network")
        _require(d_net.side == "distribution", f"{where}: 'd_bus' must sit in a distribution network")
        _require(d_net.bus(d_bus).phases == DIST_PHASES,
                 f"{where}: coupling node '{d_bus}' must carry all three phases")
        _require(d_net.bus(d_bus).kind == "pq",
                 f"{where}: coupling node '{d_bus}' must be a pq bus (its "
                 f"voltage is set by the transmission side)")
        _require(all(c2.d_bus != d_bus for c2 in couplings),
                 f"{where}: coupling node '{d_bus}' already has a port")
        s_base, v_base = float(c["s_base"]), float(c["v_base"])
        _require(s_base > 0 and v_base > 0, f"{where}: 's_base' and 'v_base' must be positive")
        spec = CouplingSpec(t_bus=t_bus, d_bus=d_bus, s_base=s_base, v_base=v_base)
        d_net.power_base_va = s_base
        d_net.voltage_base_v = v_base
        couplings.append(spec)

    coupled = {all_ids[c.d_bus] for c in couplings}
    for net in nets:
        if net.side == "transmission":
            net.power_base_va = base_mva * 1e6
        else:
            _require(net.name in coupled,
                     f"network '{net.name}': distribution network has no coupling node")
    return nets, couplings


# ---------------------------------------------------------------------------
# serialization (inverse of load_case, field-by-field)


def _phase_str(phases: tuple[str, ...]) -> str:
    return "".join(phases)


def case_to_dict(nets: list[Network], couplings: list[CouplingSpec]) -> dict:
    out = {"base_mva": nets[0].base_mva, "networks": [], "couplings": []}
    for net in nets:
        nd = {"name": net.name, "side": net.side, "buses": [], "branches": [],
              "loads": [], "generators": []}
        for b in net.buses:
            bd = {"id": b.id, "kind": b.kind, "phases": _phase_str(b.phases),
                  "v_min": b.v_min, "v_max": b.v_max,
                  "infeasibility_eligible": b.infeasibility_eligible}
            if b.v_set is not None:
                bd["v_set"] = b.v_set
            if b.x is not None:
                bd["x"] = b.x
            if b.y is not None:
                bd["y"] = b.y
            nd["buses"].append(bd)
        for br in net.branches:
            brd = {"from": br.from_bus, "to": br.to_bus,
                   "G": [list(r) for r in br.g], "B": [list(r) for r in br.b]}
            if br.flow_limit is not None:
                brd["flow_limit"] = br.flow_limit
            nd["branches"].append(brd)
        for ld in net.loads:
            nd["loads"].append({"bus": ld.bus, "p": dict(ld.p), "q": dict(ld.q)})
        for g in net.generators:
            gd = {"bus": g.bus, "mode": g.mode, "p": dict(g.p), "q": dict(g.q)}
            if g.q_min != float("-inf"):
                gd["q_min"] = g.q_min
            if g.q_max != float("inf"):
                gd["q_max"] = g.q_max
            nd["generators"].append(gd)
        out["networks"].append(nd)
    for c in couplings:
        out["couplings"].append({"t_bus": c.t_bus, "d_bus": c.d_bus,
                                 "s_base": c.s_base, "v_base": c.v_base})
    return out


def save_case(path, nets: list[Network], couplings: list[CouplingSpec]):
    with open(path, "w") as fh:
        json.dump(case_to_dict(nets, couplings), fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# physical-unit conversion (kept deliberately thin: each side has one power
# base and, on the distribution side, one voltage base)


def power_to_physical(net: Network, p_pu: float) -> float:
    return p_pu * net.power_base_va


def power_to_per_unit(net: Network, p_va: float) -> float:
    return p_va / net.power_base_va


def voltage_to_physical(net: Network, v_pu: float) -> float:
    if net.voltage_base_v is None:
        raise ValueError(f"network '{net.name}' has no voltage base")
    return v_pu * net.voltage_base_v


def voltage_to_per_unit(net: Network, v_volt: float) -> float:
    if net.voltage_base_v is None:
        raise ValueError(f"network '{net.name}' has no voltage base")
    return v_volt / net.voltage_base_v


# ---------------------------------------------------------------------------
# partitions


def default_partition(nets: list[Network], couplings: list[CouplingSpec]) -> Partition:
    """One subproblem per network, all coupling ports torn."""
    subs = [Subproblem(name=n.name, networks=[n.name]) for n in nets]
    return _finish_partition(subs, nets, couplings)


def load_partition(path, nets: list[Network],
                   couplings: list[CouplingSpec] | None = None) -> Partition:
    with open(path) as fh:
        raw = json.load(fh)
    return partition_from_dict(raw, nets, couplings or [])


def partition_from_dict(raw: dict, nets: list[Network],
                        couplings: list[CouplingSpec]) -> Partition:
    _require("subproblems" in raw, "partition: missing field 'subproblems'")
    known = {n.name for n in nets}
    assigned: dict[str, str] = {}
    subs = []
    for i, s in enumerate(raw["subproblems"]):
        name = str(s.get("name", f"sub{i}"))
        members = [str(m) for m in s.get("networks", [])]
        _require(members, f"partition subproblem '{name}': empty network list")
        for m in members:
            _require(m in known, f"partition subproblem '{name}': unknown network '{m}'")
            _require(m not in assigned,
                     f"network '{m}' assigned to both '{assigned.get(m)}' and '{name}'")
            assigned[m] = name
        subs.append(Subproblem(name=name, networks=members))
    missing = sorted(known - set(assigned))
    _require(not missing, f"partition: networks {missing} not assigned to any subproblem")
    return _finish_partition(subs, nets, couplings)


def _finish_partition(subs: list[Subproblem], nets: list[Network],
                      couplings: list[CouplingSpec]) -> Partition:
    owner = {}
    for sub in subs:
        for m in sub.networks:
            owner[m] = sub.name
    net_of_bus = {b.id: n.name for n in nets for b in n.buses}
    internal, external = [], []
    for i, c in enumerate(couplings):
        same = owner[net_of_bus[c.t_bus]] == owner[net_of_bus[c.d_bus]]
        if same:
            warnings.warn(f"coupling {c.t_bus}<->{c.d_bus}: both sides in subproblem "
                          f"'{owner[net_of_bus[c.t_bus]]}' (degenerate tearing)")
            internal.append(i)
        else:
            external.append(i)
    return Partition(subproblems=subs, internal_couplings=internal,
                     external_couplings=external)
