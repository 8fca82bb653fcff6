"""Differentiable LP layer built on a homogeneous self-dual interior point method."""

from .errors import (InfeasibleError, LPError, NumericalFailure, RankDeficient,
                     StructuralError, Unconverged)
from .grad import BackwardContext, GradConfig, Jacobian, jacobian, vjp
from .layer import cost_vjp, prepare, solve_problem
from .lp import GeneralProblem, StandardFormLP, presolve, to_standard_form
from .solver import LPSolution, SolverConfig, solve

__version__ = "0.1.0"
