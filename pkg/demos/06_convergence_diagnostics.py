"""Why the boundary exchange converges: the block-Jacobi spectral radius.

Splitting the converged system matrix into its diagonal cell blocks M and
off-diagonal coupling N, the exchange contracts exactly when rho(M^-1 N)
stays below one, and that number predicts the epoch count.

Run from the repository root:  python3 demos/06_convergence_diagnostics.py
"""

import math
import warnings

import numpy as np

from gridweld import Coordinator, load_case
from gridweld.gjn import spectral_radius_split

warnings.filterwarnings("ignore", message="subproblem")

print("the classical warm-up: point Jacobi on [[2,-1],[-1,2]]")
Y = np.array([[2.0, -1.0], [-1.0, 2.0]])
r = spectral_radius_split(Y, [[0], [1]])
print(f"  rho = {r}  (block-diagonal systems give exactly 0)")

print()
print("the same number for real cases, next to the observed epoch counts:")
print(f"  {'case':28s} {'rho':>8s} {'epochs':>7s} {'predicted':>10s}")
for case in ("case_micro_td", "case_twofeeder_stressed",
             "case_micro_td_stressed"):
    nets, couplings = load_case(f"cases/{case}.json")
    co = Coordinator(nets, couplings, source_kind="current", norm="l2",
                     gauss_tol=1e-6)
    rep = co.run()
    rho = co.spectral_radius()
    # contraction from an O(0.1) initial defect down to the exchange tolerance
    predicted = math.ceil(math.log(1e-6 / 0.1) / math.log(rho)) if rho > 0 \
        else 1
    print(f"  {case:28s} {rho:8.4f} {rep.epochs:7d} {predicted:10d}")

print()
print("A radius near zero means the sides barely feel each other and a few")
print("epochs suffice; pushing a feeder deep into infeasibility stiffens")
print("the coupling and the radius (and epoch count) climbs toward one.")

print()
print("and past one: admittance sources on the collapsed feeder make the")
print("raw exchange non-contractive; relaxing the update restores it:")
nets, couplings = load_case("cases/case_micro_td_stressed.json")
co = Coordinator(nets, couplings, source_kind="admittance", norm="l2",
                 damping=0.5, max_epochs=300)
rep = co.run()
print(f"  raw radius      {co.spectral_radius(damping=1.0):.4f}  (diverges undamped)")
print(f"  relaxed (0.5)   {co.spectral_radius():.4f}  -> {rep.status} "
      f"in {rep.epochs} epochs")
