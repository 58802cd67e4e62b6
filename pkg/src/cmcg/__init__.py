"""Time-harmonic wave solutions via exact controllability of the wave equation.

The Helmholtz problem is recast as a search for T-periodic initial data of the
time-dependent wave equation; the periodicity mismatch J is minimized by a
conjugate-gradient iteration whose gradients come from the discrete adjoint.
A final projection onto e^{-iwt} removes the spurious modes that J-minimizers
may carry for Neumann and impedance boundaries.
"""

from .controllability import (CmcgOptions, CmcgResult, cmcg_solve, cmcg_solve_mixed, do_nothing_solve,
                              eval_J, eval_gradient, prepare, read_history, write_history)
from .fem import HelmholtzProblem, assemble_system, build_space, l2_error
from .filtering import FilteredSolution, eta_neumann, filter_first_order, filter_second_order, lambda_soundhard
from .helmholtz_ref import assemble_helmholtz, direct_solve, helmholtz_residual
from .mesh import BoundaryTag, Mesh, generate_interval, generate_rect_with_obstacle
from .timestepping import CFLError, ControlPair, RunupSchedule, Stepper

__version__ = "0.1.0"

__all__ = [
    "BoundaryTag", "CFLError", "CmcgOptions", "CmcgResult", "ControlPair", "FilteredSolution", "HelmholtzProblem",
    "Mesh", "RunupSchedule", "Stepper", "assemble_helmholtz", "assemble_system", "build_space", "cmcg_solve",
    "cmcg_solve_mixed", "direct_solve", "do_nothing_solve", "eta_neumann", "eval_J", "eval_gradient",
    "filter_first_order", "filter_second_order", "generate_interval", "generate_rect_with_obstacle",
    "helmholtz_residual", "l2_error", "lambda_soundhard", "prepare", "read_history", "write_history",
]
