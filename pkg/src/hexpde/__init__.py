"""Q1/Q2 finite elements for the 3D Poisson problem on hexahedral meshes.

Hierarchical error estimation, MINRES with IC(0) or Ruge-Stueben AMG,
and a command line (``hexpde``) for the standard test problems.
"""
from .amg import AmgHierarchy, AmgMetrics, AmgParams
from .assembly import DiscreteSystem, assemble_mass, assemble_poisson, energy_norm_sq, impose_dirichlet
from .estimation import ErrorEstimate, Strategy, effectivity, estimate
from .mesh import HexMesh, build_borehole_mesh, build_cube_mesh, build_mesh, build_staircase_mesh
from .problems import ProblemSpec, builtin_problem, convergence_study, galerkin_error, solve_problem
from .solvers import SolveReport, direct_solve, minres

__version__ = "0.1.0"
