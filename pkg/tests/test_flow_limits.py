"""Branch-flow limits end to end, including limits on a torn feeder's head
section where the flow rows involve exchange parameters."""

import numpy as np
import pytest

from gridweld import gjn
from gridweld.coupling import CouplingPort, distribute_voltage_t_to_d
from gridweld.ecf import PortBuild, build_problem
from gridweld.pdip import solve_centralized, solve_nlp

from conftest import interior_point, load
from oracles import fd_gradient, fd_jacobian


@pytest.fixture(scope="module")
def flowcap():
    return load("case_micro_flowcap")


def d_cell(flowcap, kind="current"):
    nets, coups = flowcap
    dnet = next(n for n in nets if n.side == "distribution")
    spec = coups[0]
    prob = build_problem([dnet], [PortBuild(CouplingPort(spec), "d_head")],
                         source_kind=kind, norm="l2")
    key = f"{spec.t_bus}:{spec.d_bus}"
    prob.set_params(f"headv:{key}",
                    distribute_voltage_t_to_d(CouplingPort(spec), 1.01, 0.02))
    prob.set_params(f"price:{key}", 0.1 * np.arange(6))
    return prob, key


def test_limits_bind_at_the_optimum(flowcap):
    nets, coups = flowcap
    ports = [PortBuild(CouplingPort(c), "internal") for c in coups]
    prob = build_problem(nets, ports, source_kind="current", norm="l2")
    state, status = solve_nlp(prob)
    assert status == "converged"
    g = prob.residual_in(state.x)
    flows = {lbl: (g[i], state.mu[i]) for i, lbl in enumerate(prob.in_label)
             if lbl.startswith("flow")}
    binding = {lbl for lbl, (gv, mv) in flows.items() if gv > -1e-6}
    assert any("t1-t3" in lbl for lbl in binding)
    assert sum("d1-d2" in lbl for lbl in binding) == 3
    for lbl in binding:
        gv, mv = flows[lbl]
        assert gv <= 0.0 and mv > 1e-4, lbl


def test_distributed_matches_centralized_with_binding_flows(flowcap):
    nets, coups = flowcap
    cen = solve_centralized(nets, coups, source_kind="current", norm="l2")
    dis = gjn.run(nets, coups, source_kind="current", norm="l2")
    assert cen.converged and dis.converged
    assert abs(cen.objective - dis.objective) < 1e-4
    assert cen.objective > 1e-4


def test_parameterized_flow_rows_match_fd(flowcap, rng):
    prob, key = d_cell(flowcap)
    for _ in range(5):
        x = interior_point(prob, rng, scale=0.02)
        G = prob.jac_in(x).toarray()
        Gfd = fd_jacobian(prob.residual_in, x)
        assert np.max(np.abs(G - Gfd)) < 1e-5 * max(1.0, np.max(np.abs(G)))
        J = prob.jac_eq(x).toarray()
        Jfd = fd_jacobian(prob.residual_eq, x)
        assert np.max(np.abs(J - Jfd)) < 1e-5 * max(1.0, np.max(np.abs(J)))
        lam = rng.standard_normal(prob.n_eq)
        mu = np.abs(rng.standard_normal(prob.n_in))
        v = rng.standard_normal(prob.nvar)
        Wv = prob.hess_lagrangian(x, lam, mu) @ v

        def grad_lag(z):
            return (prob.grad_objective(z) + prob.jac_eq(z).T @ lam
                    + prob.jac_in(z).T @ mu)
        h = 1e-6
        Wv_fd = (grad_lag(x + h * v) - grad_lag(x - h * v)) / (2 * h)
        assert np.max(np.abs(Wv - Wv_fd)) < 2e-5 * max(1.0, np.max(np.abs(Wv)))


def test_head_sensitivity_gradient_matches_fd(flowcap, rng):
    """The boundary feedback quantity: dL/d(head voltage params), including
    head loads (current-injection rows) and a capped head branch."""
    prob, key = d_cell(flowcap)
    x = interior_point(prob, rng, scale=0.02)
    lam = rng.standard_normal(prob.n_eq)
    mu = np.abs(rng.standard_normal(prob.n_in))
    got = prob.param_lagrangian_grad(x, lam, mu, f"headv:{key}")
    sl = prob.param_slots[f"headv:{key}"]
    base = prob.params.copy()

    def lagrangian_of_params(p6):
        prob.params[sl] = p6
        val = (prob.objective(x) + lam @ prob.residual_eq(x)
               + mu @ prob.residual_in(x))
        prob.params[:] = base
        return val
    want = fd_gradient(lagrangian_of_params, base[sl].copy())
    assert np.max(np.abs(got - want)) < 1e-6 * max(1.0, np.max(np.abs(want)))


def test_head_load_supported_in_distributed_mode(flowcap):
    nets, coups = flowcap
    dnet = next(n for n in nets if n.side == "distribution")
    assert any(ld.bus == coups[0].d_bus for ld in dnet.loads)
    rep = gjn.run(nets, coups, source_kind="current", norm="l2")
    assert rep.converged


def test_consensus_mode_rejects_head_nonlinearities(flowcap):
    from gridweld import admm
    nets, coups = flowcap
    with pytest.raises(ValueError, match="coupling node"):
        admm.admm_solve(nets, coups, source_kind="current", norm="l2",
                        max_iterations=2)
