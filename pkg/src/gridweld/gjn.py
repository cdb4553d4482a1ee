"""Distributed Gauss-Jacobi-Newton coordinator.

Each epoch solves every subproblem's perturbed KKT system in parallel with
its boundary values frozen, then performs one Jacobi exchange across the
coupling ports: distribution port currents aggregate into transmission-side
draws, the transmission POI voltage distributes onto feeder heads, and the
POI balance duals distribute into distribution-side port-current prices.
The exchange reads only the epoch's finished snapshots, so the trajectory
is identical for any worker count.

The payload that crosses subproblem boundaries is restricted to per-port
boundary primal/dual values; internal states never leave their owner.
"""

from __future__ import annotations

import json
import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import pdip
from .coupling import (CouplingPort, aggregate_current_d_to_t,
                       distribute_voltage_t_to_d, port_dual_prices)
from .ecf import PortBuild, build_problem
from .netmodel import Network, Partition, default_partition
from .report import NodeEntry, build_report

log = logging.getLogger("gridweld.gjn")


@dataclass
class Subproblem:
    """One partition cell with its own problem, state and boundary ports."""
    name: str
    nets: list[Network]
    problem: object
    ports_t: list[CouplingPort]       # this cell owns the transmission side
    ports_d: list[CouplingPort]       # this cell owns the distribution side
    state: pdip.KktState | None = None
    status: str = "pending"
    inner_iterations: int = 0

    @property
    def external_dim(self) -> int:
        return 2 * len(self.ports_t) + 12 * len(self.ports_d)

    @property
    def internal_dim(self) -> int:
        return self.problem.nvar


@dataclass
class BoundaryState:
    """Exchange values for one coupling port (the only shared payload).

    ``draw`` and ``head_v`` are the primal exchange; ``price`` carries the
    transmission balance duals into the feeder's port-current rows, and
    ``v_price`` carries the feeder's marginal head-voltage sensitivity back
    into the POI voltage rows, so the union of cell conditions matches the
    combined first-order system at the fixed point.
    """
    draw: np.ndarray          # (2,) positive-sequence draw at the POI
    head_v: np.ndarray        # (6,) feeder-head phase voltages
    price: np.ndarray         # (6,) port-current prices (distribution duals)
    v_price: np.ndarray       # (2,) POI-voltage price (feeder sensitivity)
    t_voltage: np.ndarray = field(default_factory=lambda: np.zeros(2))
    t_dual: np.ndarray = field(default_factory=lambda: np.zeros(2))
    d_current: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.draw, self.head_v, self.price, self.v_price])

    def payload(self, key: str) -> dict:
        return {"port": key,
                "draw": self.draw.tolist(),
                "head_voltage": self.head_v.tolist(),
                "price": self.price.tolist(),
                "v_price": self.v_price.tolist(),
                "t_voltage": self.t_voltage.tolist(),
                "t_dual": self.t_dual.tolist(),
                "d_current": self.d_current.tolist()}


@dataclass
class EpochRecord:
    epoch: int
    metric: float
    boundary_before: dict[str, list]
    boundary_after: dict[str, list]
    inner: dict[str, tuple[str, int]]


def _initial_boundary(port: CouplingPort) -> BoundaryState:
    return BoundaryState(draw=np.zeros(2),
                         head_v=distribute_voltage_t_to_d(port, 1.0, 0.0),
                         price=np.zeros(6), v_price=np.zeros(2))


def build_subproblems(nets, couplings, partition: Partition, *, source_kind,
                      norm, q_only=False):
    """Instantiate per-cell problems plus the port list torn by the partition."""
    by_name = {n.name: n for n in nets}
    net_of_bus = {b.id: n.name for n in nets for b in n.buses}
    subs = []
    torn: list[tuple[str, CouplingPort, str, str]] = []   # (key, port, t_sub, d_sub)
    owner = {m: s.name for s in partition.subproblems for m in s.networks}
    ports_by_key = {}
    for idx in partition.external_couplings:
        spec = couplings[idx]
        port = CouplingPort(spec)
        key = f"{spec.t_bus}:{spec.d_bus}"
        torn.append((key, port, owner[net_of_bus[spec.t_bus]],
                     owner[net_of_bus[spec.d_bus]]))
        ports_by_key[key] = port
    for sub in partition.subproblems:
        members = [by_name[m] for m in sub.networks]
        port_builds = []
        ports_t, ports_d = [], []
        for idx in partition.internal_couplings:
            spec = couplings[idx]
            if net_of_bus[spec.t_bus] in sub.networks:
                port_builds.append(PortBuild(CouplingPort(spec), "internal"))
        for key, port, t_sub, d_sub in torn:
            if t_sub == sub.name:
                port_builds.append(PortBuild(port, "t_draw"))
                ports_t.append(port)
            if d_sub == sub.name:
                port_builds.append(PortBuild(port, "d_head"))
                ports_d.append(port)
        problem = build_problem(members, port_builds, source_kind=source_kind,
                                norm=norm, q_only=q_only)
        subs.append(Subproblem(name=sub.name, nets=members, problem=problem,
                               ports_t=ports_t, ports_d=ports_d))
    for sub in subs:
        if sub.external_dim and sub.external_dim > 0.2 * sub.internal_dim:
            warnings.warn(f"subproblem '{sub.name}': boundary dimension "
                          f"{sub.external_dim} exceeds 20% of internal "
                          f"dimension {sub.internal_dim}")
    return subs, torn


def gauss_boundary_update(torn, boundary, subs_by_name, damping=1.0,
                          dual_feedback=True):
    """Pure-Jacobi exchange: new boundary values from epoch-end snapshots.

    Reads only the finished subproblem states, so the result is independent
    of solve completion order.  Returns (new_boundary, metric).
    """
    from .coupling import _AGG
    new = {}
    metric = 0.0
    for key, port, t_sub, d_sub in torn:
        old = boundary[key]
        tsub = subs_by_name[t_sub]
        dsub = subs_by_name[d_sub]
        spec = port.spec
        tnet = next(n.name for n in tsub.nets if n.has_bus(spec.t_bus))
        iu, iv = tsub.problem.maps.v_slot[(tnet, spec.t_bus, "1")]
        v_t = np.array([tsub.state.x[iu], tsub.state.x[iv]])
        rr, ri = tsub.problem.maps.kcl_row[(tnet, spec.t_bus, "1")]
        lam_t = np.array([tsub.state.lam[rr], tsub.state.lam[ri]])
        i_d = dsub.state.x[np.array(dsub.problem.maps.port_dvar[key])]
        if dual_feedback:
            head_sens = dsub.problem.param_lagrangian_grad(
                dsub.state.x, dsub.state.lam, dsub.state.mu, f"headv:{key}")
            v_price = _AGG @ head_sens
        else:
            v_price = np.zeros(2)
        bs = BoundaryState(
            draw=np.asarray(aggregate_current_d_to_t(port, i_d)),
            head_v=distribute_voltage_t_to_d(port, v_t[0], v_t[1]),
            price=port_dual_prices(port, lam_t[0], lam_t[1]),
            v_price=v_price,
            t_voltage=v_t, t_dual=lam_t, d_current=np.asarray(i_d))
        if damping != 1.0:
            for attr in ("draw", "head_v", "price", "v_price"):
                setattr(bs, attr, (1 - damping) * getattr(old, attr)
                        + damping * getattr(bs, attr))
        metric = max(metric, float(np.max(np.abs(bs.stacked() - old.stacked()),
                                          initial=0.0)))
        new[key] = bs
    return new, metric


class Coordinator:
    """Owns the epoch loop; subproblem solves may run on worker threads."""

    def __init__(self, nets, couplings, partition=None, *, source_kind="current",
                 norm="l2", q_only=False, opts=None, gauss_tol=1e-6,
                 max_epochs=200, damping=1.0, workers=1, trace_path=None,
                 dual_feedback=True):
        self.nets = list(nets)
        self.couplings = list(couplings)
        self.partition = partition or default_partition(self.nets, self.couplings)
        self.opts = opts or pdip.SolverOptions()
        self.gauss_tol = gauss_tol
        self.max_epochs = max_epochs
        self.damping = damping
        self.workers = max(1, workers)
        self.trace_path = trace_path
        self.dual_feedback = dual_feedback
        self.subs, self.torn = build_subproblems(
            self.nets, self.couplings, self.partition, source_kind=source_kind,
            norm=norm, q_only=q_only)
        self.by_name = {s.name: s for s in self.subs}
        self.boundary = {key: _initial_boundary(port)
                         for key, port, _, _ in self.torn}
        self.epochs: list[EpochRecord] = []
        self.metric_history: list[float] = []

    # -- one epoch ------------------------------------------------------------

    def _external_of(self, sub: Subproblem) -> dict:
        ext = {}
        for port in sub.ports_t:
            key = f"{port.spec.t_bus}:{port.spec.d_bus}"
            ext[f"draw:{key}"] = self.boundary[key].draw
            ext[f"vprice:{key}"] = self.boundary[key].v_price
        for port in sub.ports_d:
            key = f"{port.spec.t_bus}:{port.spec.d_bus}"
            ext[f"headv:{key}"] = self.boundary[key].head_v
            ext[f"price:{key}"] = self.boundary[key].price
        return ext

    def _solve_one(self, sub: Subproblem):
        capped = bool(self.torn)
        start = sub.state.iterations if sub.state is not None else 0

        def attempt(warm):
            try:
                return pdip.solve_subproblem(sub.problem,
                                             self._external_of(sub),
                                             self.opts, warm=warm,
                                             capped=capped)
            except pdip.SolveFailure as exc:
                log.error("subproblem '%s': %s", sub.name, exc)
                return None, "failed"

        state, status = attempt(sub.state)
        if status == "failed" and sub.state is not None:
            # a boundary jump can strand a warm start; restart cold once
            log.warning("subproblem '%s': warm start failed, restarting cold",
                        sub.name)
            start = 0
            state, status = attempt(None)
        used = state.iterations - start if state is not None else 0
        return sub.name, state, status, used

    def run_epoch(self, epoch: int) -> EpochRecord:
        before = {k: b.stacked().tolist() for k, b in self.boundary.items()}
        if self.workers == 1 or len(self.subs) == 1:
            results = [self._solve_one(s) for s in self.subs]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(self._solve_one, self.subs))
        inner = {}
        for name, state, status, used in sorted(results, key=lambda r: r[0]):
            sub = self.by_name[name]
            if state is not None:
                sub.state = state
            sub.status = status
            sub.inner_iterations += used
            inner[name] = (status, used)
        if all(sub.state is not None for sub in self.subs):
            new_boundary, metric = gauss_boundary_update(
                self.torn, self.boundary, self.by_name, self.damping,
                self.dual_feedback)
            self.boundary = new_boundary
        else:
            metric = float("nan")
        rec = EpochRecord(epoch=epoch, metric=metric, boundary_before=before,
                          boundary_after={k: b.stacked().tolist()
                                          for k, b in self.boundary.items()},
                          inner=inner)
        self.epochs.append(rec)
        self.metric_history.append(metric)
        return rec

    # -- full run ----------------------------------------------------------------

    def run(self):
        t0 = time.perf_counter()
        status = "epoch-budget-exhausted"
        trace_fh = open(self.trace_path, "w") if self.trace_path else None
        try:
            for epoch in range(1, self.max_epochs + 1):
                rec = self.run_epoch(epoch)
                if trace_fh:
                    trace_fh.write(json.dumps(
                        {"type": "epoch", "epoch": epoch, "metric": rec.metric,
                         "inner": {k: {"status": v[0], "iterations": v[1]}
                                   for k, v in rec.inner.items()},
                         "ports": {k: self.boundary[k].payload(k)
                                   for k in sorted(self.boundary)}},
                        sort_keys=True) + "\n")
                all_inner = all(s.status == "converged" for s in self.subs)
                if any(s.status == "failed" for s in self.subs):
                    status = "failed"
                    break
                if (not self.torn or rec.metric <= self.gauss_tol) and all_inner:
                    status = "converged"
                    break
                if _diverging(self.metric_history):
                    log.error("boundary exchange diverging; stopping")
                    status = "diverged"
                    break
        finally:
            if trace_fh:
                trace_fh.close()
        wall = time.perf_counter() - t0
        return self._report(status, wall)

    def _report(self, status, wall):
        entries: list[NodeEntry] = []
        kkt: dict[str, float] = {}
        total_inner = 0
        coords = {(n.name, b.id): (b.x, b.y) for n in self.nets for b in n.buses}
        for sub in self.subs:
            total_inner += sub.inner_iterations
            if sub.state is None:
                continue
            try:
                res = pdip.assemble_kkt(sub.problem, sub.state)
            except pdip.SolveFailure:
                continue
            for name, val in (("stationarity", res.stationarity),
                              ("feasibility", res.feasibility),
                              ("complementarity", res.complementarity_raw)):
                kkt[name] = max(kkt.get(name, 0.0), val)
            kkt["mu_min"] = min(kkt.get("mu_min", np.inf), res.mu_min)
            kkt["g_max"] = max(kkt.get("g_max", -np.inf), res.g_max)
            for src in sub.problem.sources:
                comps = {c: float(sub.state.x[i])
                         for c, i in zip(src.components, src.var_index)}
                mag = float(np.hypot.reduce(list(comps.values())))
                xy = coords.get((src.net, src.bus), (None, None))
                entries.append(NodeEntry(net=src.net, bus=src.bus,
                                         phase=src.phase, components=comps,
                                         magnitude=mag, x=xy[0], y=xy[1]))
        any_sub = self.subs[0]
        diagnostics = {
            "gauss_metric": self.metric_history[-1] if self.metric_history else 0.0,
            "ext_int_ratio": {s.name: (s.external_dim / s.internal_dim)
                              for s in self.subs},
        }
        return build_report(None, None, status, mode="dpdip", nets=self.nets,
                            epochs=len(self.epochs), inner_iterations=total_inner,
                            kkt=kkt, diagnostics=diagnostics, wall_time=wall,
                            extra_nodes=entries, norm=any_sub.problem.norm,
                            source_kind=any_sub.problem.source_kind,
                            q_only=any_sub.problem.q_only)

    # -- diagnostics ----------------------------------------------------------------

    def spectral_radius(self, damping: float | None = None) -> float:
        """Gauss-Jacobi contraction factor of the global linearized system.

        Assembles the block system whose fixed point is the converged run:
        diagonal blocks are the subproblem KKT matrices plus an identity on
        the exchanged boundary values; off-diagonal blocks couple boundary
        parameters into subproblem rows and subproblem states into the
        exchange formulas.  ``damping=1`` (the default exchange) rates the
        raw iteration; values below one rate the relaxed update actually
        configured.  Dense eigensolve; intended for desk-scale cases.
        """
        sizes, offsets = [], {}
        pos = 0
        for sub in self.subs:
            n = sub.problem.nvar + sub.problem.n_eq + sub.problem.n_in
            offsets[sub.name] = pos
            sizes.append(n)
            pos += n
        y_offsets = {}
        for key, port, _, _ in self.torn:
            y_offsets[key] = pos
            pos += 16           # draw(2) + head_v(6) + price(6) + v_price(2)
        dim = pos
        Y = np.zeros((dim, dim))
        blocks = []
        for sub in self.subs:
            off = offsets[sub.name]
            for name, values in self._external_of(sub).items():
                sub.problem.set_params(name, values)
            system = pdip.NewtonSystem.build(sub.problem, sub.state)
            n = sizes[self.subs.index(sub)]
            Y[off:off + n, off:off + n] = system.matrix(0.0).toarray()
            blocks.append(np.arange(off, off + n))
            # boundary parameters entering this cell's equality rows
            B = sub.problem._B_eq.toarray()
            rows = off + sub.problem.nvar + np.arange(sub.problem.n_eq)
            for port in sub.ports_t:
                key = f"{port.spec.t_bus}:{port.spec.d_bus}"
                sl = sub.problem.param_slots[f"draw:{key}"]
                Y[np.ix_(rows, np.arange(y_offsets[key], y_offsets[key] + 2))] \
                    = B[:, sl]
                psl = sub.problem.param_slots[f"vprice:{key}"]
                for var, par in sub.problem._price_pairs:
                    if psl.start <= par < psl.stop:
                        Y[off + var, y_offsets[key] + 14 + (par - psl.start)] = 1.0
            for port in sub.ports_d:
                key = f"{port.spec.t_bus}:{port.spec.d_bus}"
                sl = sub.problem.param_slots[f"headv:{key}"]
                Y[np.ix_(rows, np.arange(y_offsets[key] + 2,
                                         y_offsets[key] + 8))] = B[:, sl]
                psl = sub.problem.param_slots[f"price:{key}"]
                for var, par in sub.problem._price_pairs:
                    if psl.start <= par < psl.stop:
                        Y[off + var, y_offsets[key] + 8 + (par - psl.start)] = 1.0
        from .coupling import _AGG, _DIST
        for key, port, t_sub, d_sub in self.torn:
            yo = y_offsets[key]
            Y[yo:yo + 16, yo:yo + 16] = np.eye(16)
            blocks.append(np.arange(yo, yo + 16))
            tsub, dsub = self.by_name[t_sub], self.by_name[d_sub]
            toff, doff = offsets[t_sub], offsets[d_sub]
            spec = port.spec
            idv = np.asarray(dsub.problem.maps.port_dvar[key])
            Y[yo:yo + 2, doff + idv] = -_AGG / (3.0 * port.kappa)
            tnet = next(n.name for n in tsub.nets if n.has_bus(spec.t_bus))
            iu, iv = tsub.problem.maps.v_slot[(tnet, spec.t_bus, "1")]
            Y[yo + 2:yo + 8, [toff + iu, toff + iv]] = -_DIST
            rr, ri = tsub.problem.maps.kcl_row[(tnet, spec.t_bus, "1")]
            lam_cols = [toff + tsub.problem.nvar + rr, toff + tsub.problem.nvar + ri]
            Y[yo + 8:yo + 14, lam_cols] = -_AGG.T / (3.0 * port.kappa)
            if self.dual_feedback:
                # head sensitivity is linear in the feeder duals through the
                # parameter columns of its equality rows
                hsl = dsub.problem.param_slots[f"headv:{key}"]
                Bd = dsub.problem._B_eq.toarray()[:, hsl]
                lam_cols_d = doff + dsub.problem.nvar + np.arange(dsub.problem.n_eq)
                Y[np.ix_(np.arange(yo + 14, yo + 16), lam_cols_d)] = -_AGG @ Bd.T
        gamma = self.damping if damping is None else damping
        T = _jacobi_iteration_matrix(Y, blocks)
        if gamma != 1.0:
            y_rows = np.concatenate([np.arange(yo, yo + 16)
                                     for yo in y_offsets.values()]) \
                if y_offsets else np.zeros(0, dtype=int)
            T[y_rows, :] *= gamma
            T[y_rows, y_rows] += 1.0 - gamma
        return float(np.max(np.abs(np.linalg.eigvals(T))))


def _diverging(history, factor=10.0, span=3) -> bool:
    """True when the exchange metric grew by `factor` over `span` epochs, thrice."""
    if len(history) < span + 3:
        return False
    return all(history[-i] > factor * history[-i - span] for i in (1, 2, 3))


def _jacobi_iteration_matrix(Y, blocks) -> np.ndarray:
    """M^-1 N for the block splitting M (diagonal blocks), N = M - Y."""
    Y = np.asarray(Y, dtype=float)
    M = np.zeros_like(Y)
    for idx in blocks:
        idx = np.asarray(idx, dtype=int)
        M[np.ix_(idx, idx)] = Y[np.ix_(idx, idx)]
    return np.linalg.solve(M, M - Y)


def spectral_radius_split(Y, blocks) -> float:
    """rho(M^-1 N) for the block-Jacobi splitting M (diagonal blocks), N = M - Y."""
    T = _jacobi_iteration_matrix(Y, blocks)
    return float(np.max(np.abs(np.linalg.eigvals(T))))


def run(nets, couplings, partition=None, *, source_kind="current", norm="l2",
        q_only=False, opts=None, gauss_tol=1e-6, max_epochs=200, damping=1.0,
        workers=1, trace_path=None):
    """One-call distributed solve; see :class:`Coordinator`."""
    return Coordinator(nets, couplings, partition, source_kind=source_kind,
                       norm=norm, q_only=q_only, opts=opts, gauss_tol=gauss_tol,
                       max_epochs=max_epochs, damping=damping, workers=workers,
                       trace_path=trace_path).run()


def compare_modes(nets, couplings, partition=None, *, source_kind="current",
                  norm="l2", q_only=False, opts=None, gauss_tol=1e-6,
                  admm_tol=1e-6, max_epochs=200, workers=1):
    """Run centralized, distributed and consensus baselines side by side.

    Returns a list of row dicts in the comparison-table layout; per-mode
    failures are reported as '—' entries rather than raised.
    """
    from . import admm as admm_mod
    rows = []
    t0 = time.perf_counter()
    central = pdip.solve_centralized(nets, couplings, source_kind=source_kind,
                                     norm=norm, q_only=q_only, opts=opts)
    rows.append(_mode_row("C-PDIP", central, central.inner_iterations))
    dist = run(nets, couplings, partition, source_kind=source_kind, norm=norm,
               q_only=q_only, opts=opts, gauss_tol=gauss_tol,
               max_epochs=max_epochs, workers=workers)
    rows.append(_mode_row("D-PDIP", dist, dist.epochs))
    adm = admm_mod.admm_solve(nets, couplings, partition,
                              source_kind=source_kind, norm=norm,
                              q_only=q_only, opts=opts, tol=admm_tol,
                              workers=workers)
    rows.append(_mode_row("ADMM", adm, adm.epochs))
    log.info("compare_modes finished in %.2fs", time.perf_counter() - t0)
    return rows


def _mode_row(name, rep, iters):
    ok = rep.converged
    return {"algorithm": name,
            "objective": rep.objective if ok else None,
            "iterations": iters if ok else None,
            "time_s": rep.wall_time,
            "status": rep.status}


def format_comparison(rows, case_name="case") -> str:
    out = [f"{'Algorithm':10s} {'Network':18s} {'OF (p.u)':>12s} {'Iter.':>6s} "
           f"{'Time(s)':>8s}"]
    for r in rows:
        of = "—" if r["objective"] is None else f"{r['objective']:.6f}"
        it = "—" if r["iterations"] is None else str(r["iterations"])
        out.append(f"{r['algorithm']:10s} {case_name:18s} {of:>12s} {it:>6s} "
                   f"{r['time_s']:8.2f}")
    return "\n".join(out)
