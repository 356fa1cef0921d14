"""Coherent state in a harmonic trap, followed through the focal point at t = pi.

The Van Vleck kernel picks up a phase -pi/2 each time the Jacobi field passes
through zero.  Dropping it breaks the agreement after the first caustic; with
it the semiclassical state stays exact (the Hamiltonian is quadratic).
"""
import numpy as np

from semidyn.exactqm import Grid, coherent_state, fidelity, propagate_exact
from semidyn.potentials import PotentialModel
from semidyn.semiclassical import CausticMaskError, propagate_semiclassical

ho = PotentialModel.harmonic(1.0)
grid = Grid(-10, 10, 512)
psi = coherent_state(grid, ho, 2.0)

print("   t/pi   fidelity")
for frac in (0.25, 0.5, 0.9, 1.0, 1.1, 1.2, 1.5, 1.9):
    t = frac * np.pi
    exact = propagate_exact(psi, ho, t, 1e-3)[-1]
    try:
        sc = propagate_semiclassical(psi, ho, t)
        print(f"  {frac:5.2f}   {fidelity(sc, exact):.12f}")
    except CausticMaskError as exc:
        print(f"  {frac:5.2f}   kernel singular: {exc}")
