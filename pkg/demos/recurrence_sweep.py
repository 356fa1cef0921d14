"""Two periodic orbits with a common period in a box: p and 2p.

A state launched along both returns after T = 2L/p with an overlap set by the
interference of the two orbit contributions.  Sweeping p shifts the action
difference through a full 2 pi hbar cycle and the return overlap follows the
cosine modulation.
"""
import numpy as np

from semidyn.classical import find_periodic_orbits
from semidyn.doublesolution import recurrence_consistency
from semidyn.exactqm import Grid, evolve_well, gaussian
from semidyn.potentials import PotentialModel

hbar, weights = 1e-3, (1.0, 0.5)
well = PotentialModel.infinite_well(1.0, hbar=hbar)
g = Grid(0, 1, 8192, "dirichlet")
print("  dS/(pi hbar) mod 2   predicted   measured   rel. error")
for j in range(8):
    p1 = 1.0 + 2 * np.pi * (j + 0.5) / 8 * hbar / 3
    T = 2 / p1
    a = gaussian(g, well, 0.5, p1, 0.05)
    b = gaussian(g, well, 0.5, 2 * p1, 0.05)
    psi = a.with_values(np.sqrt(weights[0]) * a.values + np.sqrt(weights[1]) * b.values).normalized()
    orbits = [o for o in find_periodic_orbits(well, 0.5, (0.99 * T, 1.01 * T),
                                              [p1**2 / 2, 2 * p1**2], width=0.05)
              if o.trajectory.p[0] > 0]
    r = recurrence_consistency([psi, evolve_well(psi, well, T)], orbits, weights)
    print(f"  {(r.delta_action / (np.pi * hbar)) % 2:18.3f}   {r.predicted:9.5f}   "
          f"{r.measured:8.5f}   {r.relative_error:.1e}")
