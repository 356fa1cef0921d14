"""Semiclassical accuracy as hbar shrinks at fixed classical data.

A packet in a box is propagated with the image-sum kernel and compared with
the exact sine-series evolution.  The grid is refined with 1/hbar so the
wavelength stays resolved.
"""
from semidyn.exactqm import Grid, evolve_well, fidelity, gaussian, l2_distance
from semidyn.potentials import PotentialModel
from semidyn.semiclassical import propagate_semiclassical

print("    hbar      N    L2 error     1 - fidelity")
for i, hbar in enumerate((0.02, 0.01, 0.005, 0.0025)):
    well = PotentialModel.infinite_well(1.0, hbar=hbar)
    g = Grid(0, 1, 512 * 2**i, "dirichlet")
    psi = gaussian(g, well, 0.4, 1.0, 0.04)
    sc = propagate_semiclassical(psi, well, 0.5)
    ex = evolve_well(psi, well, 0.5)
    print(f"  {hbar:7.4f}  {g.n:5d}   {l2_distance(sc, ex):.2e}     {1 - fidelity(sc, ex):.1e}")
