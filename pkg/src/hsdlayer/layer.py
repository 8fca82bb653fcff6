"""
The LP layer end to end: general problem in, solution and gradients out.
"""

from dataclasses import dataclass

import numpy as np

from .grad import BackwardContext, GradConfig, jacobian
from .lp import presolve, to_standard_form
from .solver import SolverConfig, solve


@dataclass(frozen=True)
class LayerOutput:
    x: np.ndarray
    objective: float
    solution: object
    lp: object


def prepare(problem):
    """Standard form followed by presolve; returns ``(lp, report)``."""
    return presolve(to_standard_form(problem))


def solve_problem(problem, cfg=None, lp=None):
    """Solve ``problem`` and map the solution back to its variables.

    ``lp`` may be a prepared standard form of a problem with the same
    constraints; only its cost vector is replaced.
    """
    if lp is None:
        lp, _ = prepare(problem)
    lp = lp.with_cost(lp.embed_cost(problem.c))
    sol = solve(lp, cfg or SolverConfig())
    return LayerOutput(x=lp.original_solution(sol.x),
                       objective=lp.original_objective(sol.x), solution=sol, lp=lp)


def cost_vjp(out, grad_x, grad_cfg=None):
    """``d(grad_x . x) / d c`` in the original variables and sense.

    ``grad_x`` is indexed like the original variables; slack columns get
    zero weight.
    """
    grad_cfg = grad_cfg or GradConfig()
    lp = out.lp
    ctx = BackwardContext(lp, out.solution.point, grad_cfg.damping)
    g = np.zeros(lp.k)
    g[lp.var_map] = grad_x
    J = jacobian(ctx, grad_cfg).dxdc
    return lp.sign * (J.T @ g)[lp.var_map]
