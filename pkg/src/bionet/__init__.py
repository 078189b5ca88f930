"""Finite element simulation of the Cai-Hu biological network formation model."""
from .fem import TensorField, frobenius_norm_field
from .linsolve import (IncompatibleRHS, IndefinitenessDetected, NonConvergence,
                       SolverConfig, cg_solve, solve_neumann_singular)
from .mesh import TriMesh, build_unit_square_mesh, coarse_to_fine_injection, reflection_permutation
from .model import (ModelParams, SimRecord, SimState, SimulationError, build_source,
                    compute_energy, initial_conductivity, run_simulation, solve_pressure,
                    step_conductivity)

__version__ = "0.1.0"
