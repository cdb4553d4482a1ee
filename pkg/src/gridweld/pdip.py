"""Perturbed primal-dual interior-point solver.

Solves ``min f(x)  s.t.  c(x) = 0,  g(x) <= 0`` for any problem object
exposing the :class:`~gridweld.ecf.CircuitProblem` evaluation surface
(``objective/grad_objective``, ``residual_eq/jac_eq``,
``residual_in/jac_in``, ``hess_lagrangian``, ``x0``; ``interior_ok`` is
optional).  Complementarity is relaxed to ``mu * (-g) = eps`` and the
perturbation is driven to a floor on a monotone schedule; each step solves
the full unreduced Newton system

    [ W        Jc^T   Jg^T   ] [dx  ]     [ r_x ]
    [ Jc       0      0      ] [dlam] = - [ r_c ]
    [ -M Jg    0      -G     ] [dmu ]     [ r_m ]

with a direct sparse factorization, fraction-to-boundary step caps, an
Armijo backtracking line search on an L1-penalty merit function, and
inertia correction by growing multiples of the identity on W.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger("gridweld.pdip")


@dataclass
class SolverOptions:
    kkt_tolerance: float = 1e-8
    max_iterations: int = 500
    barrier_initial: float = 0.1
    barrier_decrease: float = 0.1
    barrier_floor: float = 1e-9
    tau_boundary: float = 0.995        # fraction-to-boundary
    inner_cap: int = 50                # per-epoch Newton cap in distributed mode
    max_backtracks: int = 40
    inertia_delta0: float = 1e-8
    inertia_delta_max: float = 1e4
    barrier_progress: float = 10.0     # decrease eps once residual <= this * eps
    initialization: str = "flat"       # cold-start mode; warm states override

    def __post_init__(self):
        if self.initialization != "flat":
            raise ValueError("only the 'flat' initialization mode is provided")
        if not (0.0 < self.tau_boundary < 1.0):
            raise ValueError("tau_boundary must lie in (0, 1)")
        for name in ("kkt_tolerance", "max_iterations", "barrier_initial",
                     "barrier_decrease", "barrier_floor", "inner_cap",
                     "max_backtracks"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class KktState:
    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    eps: float
    iterations: int = 0


@dataclass
class KktResiduals:
    stationarity: float
    feasibility: float
    complementarity: float        # |mu * (-g) - eps| at the current perturbation
    complementarity_raw: float    # |mu * (-g)| unperturbed
    mu_min: float
    g_max: float

    def converged(self, opts: SolverOptions) -> bool:
        return (self.stationarity <= opts.kkt_tolerance
                and self.feasibility <= opts.kkt_tolerance
                and self.complementarity_raw <= 10.0 * opts.barrier_floor
                and self.mu_min >= 0.0
                and self.g_max <= opts.kkt_tolerance)


@dataclass
class IterRecord:
    iteration: int
    eps: float
    kkt: float
    alpha: float
    objective: float
    merit: float


class SolveFailure(RuntimeError):
    pass


def _raw_residuals(problem, state: KktState):
    c = problem.residual_eq(state.x)
    g = problem.residual_in(state.x)
    r_x = problem.grad_objective(state.x)
    if c.size:
        r_x = r_x + problem.jac_eq(state.x).T @ state.lam
    if g.size:
        r_x = r_x + problem.jac_in(state.x).T @ state.mu
    r_m = -state.mu * g - state.eps if g.size else np.zeros(0)
    return r_x, c, g, r_m


def assemble_kkt(problem, state: KktState) -> KktResiduals:
    """Residuals of the perturbed first-order conditions at a state.

    Rejects non-interior points: every inequality must hold strictly so the
    barrier is well defined.
    """
    r_x, c, g, r_m = _raw_residuals(problem, state)
    if g.size and np.max(g) >= 0.0:
        raise SolveFailure(f"non-interior point: max g = {np.max(g):.3e}")
    return KktResiduals(
        stationarity=float(np.max(np.abs(r_x))) if r_x.size else 0.0,
        feasibility=float(np.max(np.abs(c))) if c.size else 0.0,
        complementarity=float(np.max(np.abs(r_m))) if r_m.size else 0.0,
        complementarity_raw=float(np.max(np.abs(state.mu * g))) if g.size else 0.0,
        mu_min=float(np.min(state.mu)) if g.size else 0.0,
        g_max=float(np.max(g)) if g.size else -np.inf)


@dataclass
class NewtonSystem:
    """One linearized perturbed-KKT system with a fixed sparsity pattern."""
    W: sp.csr_matrix
    Jc: sp.csr_matrix
    Jg: sp.csr_matrix
    g: np.ndarray
    mu: np.ndarray
    rhs: np.ndarray       # -(r_x, r_c, r_m) stacked
    n: int
    me: int
    mi: int

    @classmethod
    def build(cls, problem, state: KktState) -> "NewtonSystem":
        r_x, c, g, r_m = _raw_residuals(problem, state)
        W = problem.hess_lagrangian(state.x, state.lam, state.mu)
        Jc = problem.jac_eq(state.x) if c.size else sp.csr_matrix((0, problem.nvar))
        Jg = problem.jac_in(state.x) if g.size else sp.csr_matrix((0, problem.nvar))
        rhs = -np.concatenate([r_x, c, r_m])
        return cls(W=W.tocsr(), Jc=Jc.tocsr(), Jg=Jg.tocsr(), g=g, mu=state.mu,
                   rhs=rhs, n=problem.nvar, me=c.size, mi=g.size)

    def matrix(self, delta: float = 0.0) -> sp.csc_matrix:
        W = self.W
        if delta:
            W = W + delta * sp.identity(self.n, format="csr")
        blocks = [[W, self.Jc.T if self.me else None,
                   self.Jg.T if self.mi else None]]
        if self.me:
            blocks.append([self.Jc, None, None])
        if self.mi:
            mjg = -sp.diags(self.mu) @ self.Jg
            blocks.append([mjg, None, -sp.diags(self.g)])
        return sp.bmat(blocks, format="csc")


def newton_step(system: NewtonSystem, opts: SolverOptions | None = None,
                delta: float = 0.0):
    """Direct solve of the Newton system, growing delta*I on W if needed.

    Returns (dx, dlam, dmu, delta_used).  Raises :class:`SolveFailure` once
    the inertia-correction cap is exceeded.
    """
    opts = opts or SolverOptions()
    while True:
        try:
            Y = system.matrix(delta)
            lu = spla.splu(Y)
            v = lu.solve(system.rhs)
            if np.all(np.isfinite(v)):
                n, me = system.n, system.me
                return (v[:n], v[n:n + me], v[n + me:], delta)
        except RuntimeError:
            pass
        delta = opts.inertia_delta0 if delta == 0.0 else delta * 10.0
        if delta > opts.inertia_delta_max:
            raise SolveFailure("inertia correction exceeded its cap")


def _merit(problem, x, eps, nu, c=None, g=None):
    c = problem.residual_eq(x) if c is None else c
    g = problem.residual_in(x) if g is None else g
    if g.size and np.max(g) >= 0.0:
        return np.inf
    barrier = -eps * float(np.sum(np.log(-g))) if g.size else 0.0
    return problem.objective(x) + barrier + nu * float(np.sum(np.abs(c)))


def solve_nlp(problem, opts: SolverOptions | None = None,
              warm: KktState | None = None, newton_budget: int | None = None,
              trace: list | None = None) -> tuple[KktState, str]:
    """Run the interior-point iteration to convergence or a Newton budget.

    Returns (state, status) with status in {'converged', 'iteration-capped',
    'failed'}.  ``warm`` resumes from a previous state, keeping its barrier;
    ``trace`` (a list) collects one :class:`IterRecord` per accepted step.
    """
    opts = opts or SolverOptions()
    budget = newton_budget if newton_budget is not None else opts.max_iterations

    if warm is None:
        x = problem.x0()
        g = problem.residual_in(x)
        if g.size and np.max(g) >= 0.0:
            raise SolveFailure(f"initial point not strictly interior: "
                               f"max g = {np.max(g):.3e}")
        eps = opts.barrier_initial if g.size else opts.barrier_floor
        mu = eps / (-g) if g.size else np.zeros(0)
        state = KktState(x=x, lam=np.zeros(problem.n_eq), mu=mu, eps=eps)
    else:
        state = warm

    nu = 1.0
    tau = opts.tau_boundary
    for it in range(budget):
        res = assemble_kkt(problem, state)
        if res.converged(opts) and state.eps <= opts.barrier_floor * (1 + 1e-9):
            state.iterations += it
            return state, "converged"
        # barrier update once the current perturbed system is solved well enough
        current = max(res.stationarity, res.feasibility, res.complementarity)
        while (state.eps > opts.barrier_floor
               and current <= opts.barrier_progress * state.eps):
            state.eps = max(opts.barrier_floor, opts.barrier_decrease * state.eps)
            res = assemble_kkt(problem, state)
            current = max(res.stationarity, res.feasibility, res.complementarity)

        system = NewtonSystem.build(problem, state)
        delta = 0.0
        for _attempt in range(60):
            dx, dlam, dmu, delta = newton_step(system, opts, delta)
            nu = max(nu, 1.1 * float(np.max(np.abs(state.lam + dlam), initial=0.0)) + 0.1)
            # directional derivative of the merit along dx
            grad_barrier = problem.grad_objective(state.x)
            if system.mi:
                grad_barrier = grad_barrier + state.eps * (system.Jg.T @ (1.0 / (-system.g)))
            c_norm = float(np.sum(np.abs(problem.residual_eq(state.x))))
            dphi = float(grad_barrier @ dx) - nu * c_norm
            if dphi < 0.0 or dphi <= 1e-10 * (1.0 + abs(problem.objective(state.x))):
                break
            delta = opts.inertia_delta0 if delta == 0.0 else delta * 10.0
            if delta > opts.inertia_delta_max:
                state.iterations += it
                return state, "failed"
        alpha_max = 1.0
        if system.mi:
            s = -system.g
            ds = -(system.Jg @ dx)
            shrink = ds < 0.0
            if shrink.any():
                alpha_max = min(1.0, float(np.min(tau * s[shrink] / (-ds[shrink]))))
            dmu_neg = dmu < 0.0
            alpha_mu = 1.0
            if dmu_neg.any():
                alpha_mu = min(1.0, float(np.min(
                    tau * state.mu[dmu_neg] / (-dmu[dmu_neg]))))
        else:
            alpha_mu = 1.0

        phi0 = _merit(problem, state.x, state.eps, nu)
        kkt0 = max(res.stationarity, res.feasibility, res.complementarity)
        dual_only = float(np.max(np.abs(dx), initial=0.0)) <= \
            1e-12 * (1.0 + float(np.max(np.abs(state.x))))
        alpha = alpha_max
        accepted = False
        for _bt in range(opts.max_backtracks):
            x_new = state.x + alpha * dx
            ok = problem.interior_ok(x_new) if hasattr(problem, "interior_ok") else True
            if ok:
                phi = _merit(problem, x_new, state.eps, nu)
                if dual_only or phi <= phi0 + 1e-4 * alpha * dphi:
                    accepted = True
                    break
                if np.isfinite(phi):
                    # merit is flat near a solution when the step is mostly in
                    # the duals; accept on plain KKT-residual contraction
                    trial = KktState(x=x_new, lam=state.lam + alpha * dlam,
                                     mu=(np.maximum(state.mu + min(alpha_mu, alpha) * dmu,
                                                    1e-300) if system.mi
                                         else state.mu),
                                     eps=state.eps)
                    tres = assemble_kkt(problem, trial)
                    if max(tres.stationarity, tres.feasibility,
                           tres.complementarity) <= 0.9 * kkt0:
                        accepted = True
                        alpha_mu = min(alpha_mu, alpha)
                        break
            alpha *= 0.5
        if not accepted:
            state.iterations += it
            return state, "failed"

        state.x = x_new
        state.lam = state.lam + alpha * dlam
        if system.mi:
            state.mu = np.maximum(state.mu + alpha_mu * dmu, 1e-300)
            # keep multipliers commensurate with the barrier (re-centering clip)
            s = -problem.residual_in(state.x)
            lo = state.eps / (1e10 * s)
            hi = 1e10 * state.eps / s
            state.mu = np.clip(state.mu, lo, hi)
        if trace is not None:
            trace.append(IterRecord(iteration=it, eps=state.eps,
                                    kkt=max(res.stationarity, res.feasibility,
                                            res.complementarity),
                                    alpha=alpha,
                                    objective=problem.objective(state.x),
                                    merit=phi))

    res = assemble_kkt(problem, state)
    state.iterations += budget
    if res.converged(opts) and state.eps <= opts.barrier_floor * (1 + 1e-9):
        return state, "converged"
    return state, "iteration-capped"


def solve_centralized(nets, couplings, *, source_kind="current", norm="l2",
                      q_only=False, opts: SolverOptions | None = None,
                      trace: list | None = None):
    """Monolithic solve of the combined problem, coupling rows included.

    This is the oracle the distributed modes are compared against.  Returns
    a :class:`~gridweld.report.SolveReport`.
    """
    import time

    from .coupling import CouplingPort
    from .ecf import PortBuild, build_problem
    from .report import build_report

    opts = opts or SolverOptions()
    ports = [PortBuild(CouplingPort(c), "internal") for c in couplings]
    problem = build_problem(nets, ports, source_kind=source_kind, norm=norm,
                            q_only=q_only)
    t0 = time.perf_counter()
    try:
        state, status = solve_nlp(problem, opts, trace=trace)
        res = assemble_kkt(problem, state)
        kkt = {"stationarity": res.stationarity, "feasibility": res.feasibility,
               "complementarity": res.complementarity_raw, "mu_min": res.mu_min,
               "g_max": res.g_max}
    except SolveFailure as exc:
        log.error("centralized solve failed: %s", exc)
        state, status, kkt = None, "failed", {}
    wall = time.perf_counter() - t0
    return build_report(problem if state is not None else None, state, status,
                        mode="central", nets=nets,
                        inner_iterations=state.iterations if state else 0,
                        kkt=kkt, wall_time=wall)


def solve_subproblem(problem, external: dict | None = None,
                     opts: SolverOptions | None = None,
                     warm: KktState | None = None,
                     capped: bool = False,
                     trace: list | None = None) -> tuple[KktState, str]:
    """Solve one subproblem with its exchange parameters held fixed.

    ``external`` maps parameter-slot names (``draw:...``, ``headv:...``,
    ``price:...``) to value arrays; they stay constant for the whole solve.
    With ``capped`` the Newton budget is the distributed-mode inner cap.
    """
    opts = opts or SolverOptions()
    if external:
        for name, values in external.items():
            problem.set_params(name, values)
    budget = opts.inner_cap if capped else None
    return solve_nlp(problem, opts, warm=warm, newton_budget=budget, trace=trace)
