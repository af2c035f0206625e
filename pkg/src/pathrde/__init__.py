"""Rough paths, controlled paths and path-dependent rough differential equations."""

from .controlled import (ControlledNorm, ControlledPath, controlled_norm, holder_seminorm,
                         kappa_beta, q_p, remainder, rho_control)
from .errors import (CapabilityError, DomainError, ExponentError, GridAlignmentError,
                     GuardError, HorizonError, NonConvergenceError, PathFormatError,
                     PathRdeError, ReferenceMismatchError)
from .functionals import (PathFunctional, StoppedPath, d_infty, discrete_time_functional,
                          functional_remainder, horizontal_derivative, integral_functional,
                          regularity_report, running_max, smoothed_running_max,
                          vertical_derivative)
from .path_core import (DiscretePath, IntervalControl, p_variation_exact, p_variation_greedy,
                        piecewise_linear_approx, vp_control)
from .rde_solver import RdeProblem, RdeSolution, solution_map, solve, verify_solution
from .rough_integral import (IntegralResult, compose_controlled, integrate_functional,
                             rough_integrate)
from .rough_lift import RoughPath, brownian_lift, chen_defect, chen_extend, smooth_lift

__all__ = [name for name in dir() if not name.startswith("_")]
