"""Exact, semiclassical, pilot-wave and branch-following soliton dynamics in 1D."""
from .potentials import PotentialModel, WallError
from .classical import (ClassicalTrajectory, PhasePoint, find_paths, find_periodic_orbits,
                        integrate_hamilton, jacobi_determinant_factor, maslov_count)
from .exactqm import (Grid, Wavefunction, continuity_residual, polar_decompose,
                      propagate_exact, qhj_residual, quantum_potential)
from .semiclassical import (BVPConfig, Branch, SemiclassicalState, branch_decompose,
                            propagate_semiclassical, recurrence_strength, van_vleck_kernel)
from .pilotwave import (BohmTrajectory, TrajectoryEnsemble, equivariance_distance,
                        guiding_velocity, integrate_bohm, mismatch_report, sample_initial)
from .doublesolution import (SolitonBump, WField, attach_soliton, build_wfields,
                             couple_amplitude, evolve_soliton, recurrence_consistency,
                             soliton_ensemble_statistics)

__version__ = "0.1.0"
