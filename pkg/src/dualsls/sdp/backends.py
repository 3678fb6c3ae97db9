"""Solver backends for the standard cone form.

The default backend is Clarabel (mature interior-point solver); the
package also ships a self-contained homogeneous-embedding interior-point
routine in `native.py`. Both consume the same lowered ConeProblem, so
they can be swapped per call or cross-checked against each other.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse

from ..errors import SolverFailureError
from .lowering import ConeProblem
from .program import INACCURATE, INFEASIBLE, OPTIMAL, UNBOUNDED, Tolerances

DEFAULT_BACKEND = "clarabel"


def solve_cone_problem(problem: ConeProblem, tol: Tolerances, backend: str):
    """Returns (status, x, info). x is None unless status is optimal/inaccurate."""
    if backend == "clarabel":
        return _solve_clarabel(problem, tol)
    if backend == "native":
        from .native import solve_native
        return solve_native(problem, tol)
    raise SolverFailureError(f"unknown solver backend '{backend}'")


def _solve_clarabel(problem: ConeProblem, tol: Tolerances):
    import clarabel

    cones = []
    if problem.zero_dim:
        cones.append(clarabel.ZeroConeT(problem.zero_dim))
    if problem.nonneg_dim:
        cones.append(clarabel.NonnegativeConeT(problem.nonneg_dim))
    for d in problem.soc_dims:
        cones.append(clarabel.SecondOrderConeT(d))
    for d in problem.psd_dims:
        cones.append(clarabel.PSDTriangleConeT(d))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = tol.max_iters
    settings.tol_feas = tol.feas
    settings.tol_gap_abs = tol.gap
    settings.tol_gap_rel = tol.gap
    n = problem.c.shape[0]
    P = sparse.csc_matrix((n, n))
    A = sparse.csc_matrix(problem.A)
    solver = clarabel.DefaultSolver(P, problem.c, A, problem.b, cones, settings)
    sol = solver.solve()

    S = clarabel.SolverStatus
    status_map = {
        S.Solved: OPTIMAL,
        S.PrimalInfeasible: INFEASIBLE,
        S.DualInfeasible: UNBOUNDED,
        S.AlmostSolved: INACCURATE,
    }
    status = status_map.get(sol.status, INACCURATE)
    info = {
        "backend": "clarabel",
        "iterations": sol.iterations,
        "solve_time": sol.solve_time,
        "raw_status": str(sol.status),
    }
    x = np.asarray(sol.x, dtype=float) if status in (OPTIMAL, INACCURATE) else None
    if x is not None and x.shape[0] != n:
        raise SolverFailureError("backend returned a solution of the wrong size")
    return status, x, info
