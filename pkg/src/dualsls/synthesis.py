"""Controller synthesis: nominal H2, robust (small-gain certified), and the
two-phase dual-control convex program with a grid search over the second
multiplier."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, SynthesisInfeasibleError
from .identify import Model
from .lin_sys import CostWeights
from .sdp import (INFEASIBLE, OPTIMAL, ConicProgram, Solution, Tolerances,
                  solve)
from .sdp.backends import DEFAULT_BACKEND
from .sls_core import (FIRPair, H2Objective, HinfCertificate, PhiStack,
                       affine_constraints, hinf_structure,
                       linearized_uncertainty, response_taps,
                       robust_stability_lmi, stack_expression)


@dataclass
class SynthesisResult:
    phi: FIRPair
    cost: float                      # per-step stationary H2 cost, recomputed
    lam: float | None = None
    certificate: HinfCertificate | None = None
    solver: Solution | None = None
    heuristic_rescale: float | None = None  # set when D was inflated to recover


@dataclass
class GridPoint:
    lambda2: float
    objective: float
    status: str


@dataclass
class DualPlan:
    phi1: FIRPair
    phi2_planned: FIRPair
    lambda2: float
    lam1: float
    objective: float                 # T_e J(phi1) + (T - T_e) J(phi2), recomputed
    grid_table: list[GridPoint] = field(default_factory=list)
    solver: Solution | None = None


def default_lambda2_grid(lam_nominal: float | None = None, points: int = 24):
    """Geometric grid on [1e-3, 1], optionally augmented with the robust
    solve's multiplier so the single-phase solution stays feasible."""
    grid = list(np.geomspace(1e-3, 1.0, points))
    if lam_nominal is not None and 0.0 < lam_nominal <= 1.0:
        grid.append(float(lam_nominal))
    return sorted(set(grid))


def _clamp_lambda(value: float) -> float:
    return float(min(max(value, 0.0), 1.0))


def _extract_pair(values: dict, n_x: int, n_u: int, F: int, prefix: str) -> FIRPair:
    Px = np.empty((F, n_x, n_x))
    Px[0] = np.eye(n_x)
    for k in range(2, F + 1):
        Px[k - 1] = values[f"{prefix}Phi_x[{k}]"]
    Pu = np.stack([values[f"{prefix}Phi_u[{k}]"] for k in range(1, F + 1)])
    return FIRPair(Px, Pu)


def _add_response(prog: ConicProgram, A_hat, B_hat, n_x, n_u, F, prefix=""):
    x_taps, u_taps = response_taps(prog, n_x, n_u, F, prefix=prefix)
    for eq in affine_constraints(A_hat, B_hat, x_taps, u_taps):
        prog.add_equality(eq)
    return x_taps, u_taps


def _objective_unit(weights: CostWeights, sigma_w: float) -> float:
    """Magnitude used to scale solver objectives to O(1); the argmin is
    unaffected and reported costs are recomputed from the taps."""
    unit = sigma_w ** 2 * (np.trace(weights.Q) + np.trace(weights.R))
    return float(unit) if unit > 0 else 1.0


def _add_robust_block(prog: ConicProgram, stack, D_term, n_x, n_u, F,
                      prefix="", lam_fixed: float | None = None):
    """Certificate structure (gamma = 1) plus the 3x3 stability LMI.

    With lam_fixed None the multiplier is a variable (requires constant
    D_term); otherwise the multiplier is pinned and D_term may be affine.
    """
    P = prog.add_variable(f"{prefix}P", (n_x * F, n_x * F), symmetric=True)
    for eq in hinf_structure(P, F, n_x, 1.0):
        prog.add_equality(eq)
    if lam_fixed is None:
        lam = prog.add_scalar(f"{prefix}lam")
        prog.add_psd(lam)  # lam >= 0; lam <= 1 is implied by the middle block
        prog.add_psd(robust_stability_lmi(stack, P, lam, D_term, n_x, n_u))
    else:
        prog.add_psd(robust_stability_lmi(stack, P, float(lam_fixed), D_term,
                                          n_x, n_u))
    return P


def nominal_synthesis(model: Model, weights: CostWeights, F: int,
                      tol: Tolerances | None = None,
                      backend: str = DEFAULT_BACKEND) -> SynthesisResult:
    """Minimize the stationary H2 cost over the nominal affine subspace."""
    if F < 1:
        raise ContractViolationError("F must be >= 1")
    n_x, n_u = model.n_x, model.n_u
    prog = ConicProgram()
    x_taps, u_taps = _add_response(prog, model.A_hat, model.B_hat, n_x, n_u, F)
    objective = H2Objective(weights, model.sigma_w, F)
    scale = 1.0 / np.sqrt(_objective_unit(weights, model.sigma_w))
    for term in objective.quad_terms(x_taps, u_taps):
        prog.add_quad_term(scale * term)
    sol = solve(prog, tol=tol, backend=backend)
    if sol.status != OPTIMAL:
        raise SynthesisInfeasibleError(
            f"nominal synthesis failed: status {sol.status} "
            f"(backend {sol.info.get('raw_status', '?')})", sol)
    phi = _extract_pair(sol.values, n_x, n_u, F, "")
    return SynthesisResult(phi=phi, cost=objective.evaluate(phi), solver=sol)


def robust_synthesis(model: Model, weights: CostWeights, F: int,
                     tol: Tolerances | None = None,
                     backend: str = DEFAULT_BACKEND,
                     rescale_on_infeasible: float | None = None) -> SynthesisResult:
    """Nominal-cost synthesis subject to the small-gain robustness LMI over
    the model's credibility ellipsoid.

    With `rescale_on_infeasible` = alpha > 1, an infeasible program is
    retried once with D scaled by alpha (a smaller uncertainty set); the
    result is labeled heuristic via `heuristic_rescale` and loses the
    coverage guarantee. Off by default.
    """
    if F < 1:
        raise ContractViolationError("F must be >= 1")
    n_x, n_u = model.n_x, model.n_u
    prog = ConicProgram()
    x_taps, u_taps = _add_response(prog, model.A_hat, model.B_hat, n_x, n_u, F)
    stack = stack_expression(x_taps, u_taps)
    _add_robust_block(prog, stack, model.D, n_x, n_u, F)
    objective = H2Objective(weights, model.sigma_w, F)
    scale = 1.0 / np.sqrt(_objective_unit(weights, model.sigma_w))
    for term in objective.quad_terms(x_taps, u_taps):
        prog.add_quad_term(scale * term)
    sol = solve(prog, tol=tol, backend=backend)
    if sol.status != OPTIMAL:
        if rescale_on_infeasible is not None and rescale_on_infeasible > 1.0:
            scaled = Model(model.A_hat, model.B_hat,
                           rescale_on_infeasible * model.D, model.delta,
                           model.sigma_w, model.c_delta)
            retry = robust_synthesis(scaled, weights, F, tol=tol, backend=backend)
            retry.heuristic_rescale = float(rescale_on_infeasible)
            return retry
        d_min = float(np.linalg.eigvalsh(model.D).min())
        raise SynthesisInfeasibleError(
            f"robust synthesis failed: status {sol.status}; "
            f"min eigenvalue of D is {d_min:.3e} "
            f"(small or zero D means the uncertainty set is too large)", sol)
    phi = _extract_pair(sol.values, n_x, n_u, F, "")
    lam = _clamp_lambda(sol.values["lam"].item())
    cert = HinfCertificate(sol.values["P"], 1.0, n_x)
    return SynthesisResult(phi=phi, cost=objective.evaluate(phi), lam=lam,
                           certificate=cert, solver=sol)


def dual_synthesis(model: Model, weights: CostWeights, F: int, T: int, T_e: int,
                   lambda2_grid=None, nominal_result: SynthesisResult | None = None,
                   tol: Tolerances | None = None,
                   backend: str = DEFAULT_BACKEND) -> DualPlan:
    """Two-phase exploration/exploitation plan via the convex relaxation.

    For each grid value of the second multiplier, solves for the joint
    (phi1, phi2) pair: phi1 is constrained against the current uncertainty
    (variable multiplier), phi2 against the linearized post-exploration
    uncertainty (fixed multiplier). Returns the best feasible grid point.
    """
    if not 1 <= T_e < T:
        raise ContractViolationError(f"need 1 <= T_e < T, got T_e={T_e}, T={T}")
    if lambda2_grid is not None and len(list(lambda2_grid)) == 0:
        raise ContractViolationError("lambda2_grid must not be empty")
    if nominal_result is None:
        nominal_result = robust_synthesis(model, weights, F, tol=tol,
                                          backend=backend)
    if lambda2_grid is None:
        grid = default_lambda2_grid(nominal_result.lam)
    else:
        grid = sorted(set(float(v) for v in lambda2_grid))
        if any(not 0.0 < v <= 1.0 for v in grid):
            raise ContractViolationError("grid values must lie in (0, 1]")
    n_x, n_u = model.n_x, model.n_u
    stack_nom = nominal_result.phi.stack()
    d_lin = linearized_uncertainty(model.D, stack_nom, T_e, model.c_delta)
    objective = H2Objective(weights, model.sigma_w, F)
    unit_scale = 1.0 / (T * _objective_unit(weights, model.sigma_w))

    table: list[GridPoint] = []
    best = None
    for lam2 in grid:
        prog = ConicProgram()
        x1, u1 = _add_response(prog, model.A_hat, model.B_hat, n_x, n_u, F, "p1.")
        x2, u2 = _add_response(prog, model.A_hat, model.B_hat, n_x, n_u, F, "p2.")
        stack1 = stack_expression(x1, u1)
        stack2 = stack_expression(x2, u2)
        _add_robust_block(prog, stack1, model.D, n_x, n_u, F, prefix="p1.")
        _add_robust_block(prog, stack2, d_lin.as_expr(stack1), n_x, n_u, F,
                          prefix="p2.", lam_fixed=lam2)
        for term in objective.quad_terms(x1, u1):
            prog.add_quad_term(np.sqrt(T_e * unit_scale) * term)
        for term in objective.quad_terms(x2, u2):
            prog.add_quad_term(np.sqrt((T - T_e) * unit_scale) * term)
        sol = solve(prog, tol=tol, backend=backend)
        if sol.status != OPTIMAL:
            table.append(GridPoint(lam2, np.inf, sol.status))
            continue
        phi1 = _extract_pair(sol.values, n_x, n_u, F, "p1.")
        phi2 = _extract_pair(sol.values, n_x, n_u, F, "p2.")
        obj = T_e * objective.evaluate(phi1) + (T - T_e) * objective.evaluate(phi2)
        table.append(GridPoint(lam2, obj, sol.status))
        if best is None or (obj, lam2) < (best[0], best[1]):
            best = (obj, lam2, phi1, phi2, sol)
    if best is None:
        raise SynthesisInfeasibleError(
            "dual synthesis infeasible at every grid point: "
            + ", ".join(f"lam2={p.lambda2:.4g}:{p.status}" for p in table))
    obj, lam2, phi1, phi2, sol = best
    lam1 = _clamp_lambda(sol.values["p1.lam"].item())
    return DualPlan(phi1=phi1, phi2_planned=phi2, lambda2=lam2, lam1=lam1,
                    objective=obj, grid_table=table, solver=sol)
