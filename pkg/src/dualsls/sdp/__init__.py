"""Minimal conic-program model and solver front end."""
from __future__ import annotations

import numpy as np

from ..errors import ProgramValidationError
from . import expr
from .backends import DEFAULT_BACKEND, solve_cone_problem
from .expr import MatExpr, Variable, block, hstack, vstack
from .lowering import ConeProblem, extract_values, lower, smat, svec
from .program import (EQ_RESIDUAL_LIMIT, INACCURATE, INFEASIBLE, OPTIMAL,
                      PSD_EIG_LIMIT, UNBOUNDED, ConicProgram, Solution,
                      Tolerances, validate)

__all__ = [
    "ConicProgram", "Solution", "Tolerances", "Variable", "MatExpr",
    "block", "hstack", "vstack", "svec", "smat", "lower", "validate",
    "solve", "OPTIMAL", "INFEASIBLE", "UNBOUNDED", "INACCURATE",
]


def solve(program: ConicProgram, tol: Tolerances | None = None,
          backend: str = DEFAULT_BACKEND) -> Solution:
    """Solve a validated program; never returns a silent wrong answer.

    status == optimal guarantees equality residual <= 1e-6 and minimum
    PSD eigenvalue >= -1e-6, both recomputed from the returned values.
    """
    diags = validate(program)
    if diags:
        raise ProgramValidationError(diags)
    tol = tol or Tolerances()
    cone = lower(program)
    status, x, info = solve_cone_problem(cone, tol, backend)
    if x is None:
        obj = np.inf if status == INFEASIBLE else -np.inf
        return Solution(status=status, values={}, objective_value=float(obj),
                        eq_residual=np.nan, min_psd_eig=np.nan, info=info)
    values = extract_values(cone, x)
    eq_res, min_eig = program.residuals(values)
    if status == OPTIMAL and (eq_res > EQ_RESIDUAL_LIMIT or min_eig < PSD_EIG_LIMIT):
        status = INACCURATE
    return Solution(
        status=status,
        values=values,
        objective_value=program.objective_value(values),
        eq_residual=eq_res,
        min_psd_eig=min_eig,
        info=info,
    )
