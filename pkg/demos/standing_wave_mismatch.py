"""A particle in a box, stationary state n = 5.

The guidance law gives zero velocity everywhere, so every Bohmian particle sits
still.  The classical orbit at the same energy bounces between the walls, and
that is also the path a branch-following soliton takes.  The two pictures
share a wavefunction and disagree about motion.
"""
import numpy as np

from semidyn.classical import PhasePoint, integrate_hamilton
from semidyn.doublesolution import attach_soliton, build_wfields, evolve_soliton
from semidyn.exactqm import Grid, propagate_exact, well_eigenstate
from semidyn.pilotwave import integrate_bohm, mismatch_report
from semidyn.potentials import PotentialModel
from semidyn.semiclassical import branch_frames, sign_split

well = PotentialModel.infinite_well(1.0)
grid = Grid(0, 1, 512, "dirichlet")
psi = well_eigenstate(grid, well, 5)
p = 5 * np.pi
period = 2 / p

frames = propagate_exact(psi, well, period, period / 200)
print(f"one classical period T = {period:.5f}\n")
print("   x0   Bohm sup|x - x0|   classical path   ratio")
for x0 in (0.1, 0.33, 0.5, 0.77):
    bohm = integrate_bohm(frames, x0)
    orbit = integrate_hamilton(well, PhasePoint(x0, p), period, period / 200)
    mm = mismatch_report(bohm, orbit)
    print(f"{x0:5.2f}   {np.max(np.abs(bohm.x - x0)):16.1e}   {mm.classical_path_length:14.6f}"
          f"   {mm.ratio:.1e}")

# the standing wave splits into two counter-propagating sheets
times = np.linspace(0, period, 9)
wf = [build_wfields(s) for s in branch_frames(psi, well, times, components=sign_split(psi))]
bump = attach_soliton(wf[0], 0.33, seed=2)
hist = evolve_soliton(bump, wf)
print(f"\nsoliton on sheet {bump.sheet} (p0 = {bump.momentum:+.3f}), peak a(t) and centre:")
for t, x, a in zip(hist.t, hist.x, hist.a):
    print(f"  t = {t:.4f}   x_b = {x:.4f}   a = {a:.4f}")
print(f"soliton path length {hist.path_length():.6f} = 2L; the peak tracks |sin(k x_b)|")
