"""Infeasibility localization for combined transmission + distribution networks."""

from .netmodel import (Branch, Bus, CaseError, CouplingSpec, Generator, Load,
                       Network, Partition, case_from_dict, case_to_dict,
                       default_partition, load_case, load_partition, save_case)
from .coupling import (CouplingPort, aggregate_current_d_to_t,
                       distribute_dual_t_to_d, distribute_voltage_t_to_d,
                       port_dual_prices, round_trip_check)
from .ecf import (CircuitProblem, InfeasibilitySource, PortBuild, build_problem,
                  infeasibility_current, inequality_residuals, kcl_residual,
                  objective_and_gradient, pq_injection_residual,
                  pv_magnitude_residual)
from .pdip import (KktState, NewtonSystem, SolverOptions, assemble_kkt,
                   newton_step, solve_centralized, solve_nlp, solve_subproblem)
from .gjn import (BoundaryState, Coordinator, Subproblem, compare_modes,
                  gauss_boundary_update, spectral_radius_split)
from .admm import admm_solve
from .report import (SolveReport, build_report, export_heatmap,
                     localize_weak_nodes, write_report)

__version__ = "0.1.0"
