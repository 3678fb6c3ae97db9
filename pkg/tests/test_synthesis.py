"""Tests for nominal, robust, and dual-control synthesis."""
import numpy as np
import pytest

from conftest import (A_TR, B_TR, Q_SEC4, R_SEC4, dare_cost_fixed_point,
                      initial_dataset, sample_boundary_members, sec4_model)
from dualsls.errors import ContractViolationError, SynthesisInfeasibleError
from dualsls.identify import Model, build_model, chi_square_quantile
from dualsls.lin_sys import CostWeights, closed_loop_matrix, spectral_radius
from dualsls.sls_core import H2Objective, affine_residual, propagated_uncertainty
from dualsls.synthesis import (DualPlan, default_lambda2_grid, dual_synthesis,
                               nominal_synthesis, robust_synthesis)

C_DELTA_8 = chi_square_quantile(8, 0.9)


def model_from_matrices(A, B, D, sigma_w=1.0, delta=0.1):
    return Model(A, B, D, delta, sigma_w,
                 chi_square_quantile(A.shape[0] ** 2 + A.shape[0] * B.shape[1],
                                     1 - delta))


def random_stable_model(seed, n_x=2, n_u=2, rho=0.8, d_scale=40.0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n_x, n_x))
    A *= rho / max(np.abs(np.linalg.eigvals(A)).max(), 1e-9)
    B = rng.standard_normal((n_x, n_u))
    M = rng.standard_normal((n_x + n_u, n_x + n_u))
    D = d_scale * (M @ M.T + 0.5 * np.eye(n_x + n_u))
    return model_from_matrices(A, B, D)


# ---------------------------------------------------------------------------
# nominal synthesis


def test_nominal_scalar_matches_dare_quadratic_formula():
    model = model_from_matrices(np.array([[0.5]]), np.array([[1.0]]), np.eye(2))
    weights = CostWeights([[1.0]], [[1.0]])
    res = nominal_synthesis(model, weights, F=30)
    p_star = (0.25 + np.sqrt(4.0625)) / 2.0  # scalar DARE by quadratic formula
    assert res.cost == pytest.approx(p_star, rel=1e-3)
    assert res.cost == pytest.approx(1.13278, rel=1e-3)
    assert affine_residual(model.A_hat, model.B_hat, res.phi) < 1e-6


def test_nominal_deadbeat_plant_needs_no_feedback():
    model = model_from_matrices(np.zeros((2, 2)), np.eye(2), np.eye(4))
    weights = CostWeights(np.diag([1.0, 2.0]), np.eye(2))
    res = nominal_synthesis(model, weights, F=5)
    assert res.cost == pytest.approx(3.0, abs=1e-6)  # sigma^2 tr(Q)
    assert np.abs(res.phi.Phi_u).max() < 1e-5


def test_nominal_sec4_converges_to_dare_with_F():
    # the F = 12 deadbeat constraint is far from the infinite-horizon cost on
    # this plant; the gap closes as F grows (see acceptance criterion 1)
    model = model_from_matrices(A_TR, B_TR, np.eye(4))
    weights = CostWeights(Q_SEC4, R_SEC4)
    oracle = dare_cost_fixed_point(A_TR, B_TR, Q_SEC4, R_SEC4, 1.0)
    costs = {F: nominal_synthesis(model, weights, F).cost for F in (12, 24, 32)}
    assert costs[24] == pytest.approx(oracle, rel=0.01)
    assert costs[32] == pytest.approx(oracle, rel=1e-3)
    assert costs[12] > costs[24] > costs[32] >= oracle - 1e-9


def test_nominal_unactuated_mode_infeasible():
    model = model_from_matrices(np.array([[0.5]]), np.array([[0.0]]), np.eye(2))
    with pytest.raises(SynthesisInfeasibleError):
        nominal_synthesis(model, CostWeights([[1.0]], [[1.0]]), F=6)


def test_nominal_rejects_bad_F():
    model = model_from_matrices(A_TR, B_TR, np.eye(4))
    with pytest.raises(ContractViolationError):
        nominal_synthesis(model, CostWeights(Q_SEC4, R_SEC4), F=0)


# ---------------------------------------------------------------------------
# robust synthesis


def test_robust_tiny_uncertainty_approaches_nominal():
    model = sec4_model(seed=1)
    weights = CostWeights(Q_SEC4, R_SEC4)
    nominal = nominal_synthesis(model, weights, F=12)
    scaled = Model(model.A_hat, model.B_hat, 1e6 * model.D, model.delta,
                   model.sigma_w, model.c_delta)
    robust = robust_synthesis(scaled, weights, F=12)
    assert robust.cost <= nominal.cost * 1.005
    assert robust.cost >= nominal.cost - 1e-6


def test_robust_boundary_samples_stabilized(rng):
    model = sec4_model(seed=2)
    res = robust_synthesis(model, CostWeights(Q_SEC4, R_SEC4), F=12)
    assert res.lam is not None and 0.0 <= res.lam <= 1.0
    assert res.certificate.structure_residual() < 1e-6
    for A_s, B_s in sample_boundary_members(model, 200, rng):
        assert spectral_radius(closed_loop_matrix(A_s, B_s, res.phi)) < 1.0


def test_robust_zero_uncertainty_matrix_infeasible():
    model = model_from_matrices(A_TR, B_TR, np.zeros((4, 4)))
    with pytest.raises(SynthesisInfeasibleError) as exc:
        robust_synthesis(model, CostWeights(Q_SEC4, R_SEC4), F=6)
    assert "min eigenvalue" in str(exc.value)


@pytest.mark.parametrize("seed", range(20))
def test_robust_cost_at_least_nominal(seed):
    model = random_stable_model(seed)
    weights = CostWeights(np.eye(2), np.eye(2))
    nominal = nominal_synthesis(model, weights, F=6)
    robust = robust_synthesis(model, weights, F=6)
    assert robust.cost >= nominal.cost - 1e-6
    assert spectral_radius(closed_loop_matrix(model.A_hat, model.B_hat,
                                              robust.phi)) < 1.0
    assert affine_residual(model.A_hat, model.B_hat, robust.phi) < 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_robust_cost_monotone_in_D_scaling(seed):
    model = random_stable_model(100 + seed)
    weights = CostWeights(np.eye(2), np.eye(2))
    costs = []
    for alpha in (1.0, 4.0, 16.0):
        scaled = Model(model.A_hat, model.B_hat, alpha * model.D, model.delta,
                       model.sigma_w, model.c_delta)
        costs.append(robust_synthesis(scaled, weights, F=6).cost)
    assert costs[0] >= costs[1] - 1e-7 >= costs[2] - 2e-7


# ---------------------------------------------------------------------------
# dual synthesis


def test_dual_upper_bound_property():
    model = sec4_model(seed=3)
    weights = CostWeights(Q_SEC4, R_SEC4)
    T, T_e = 100, 20
    robust = robust_synthesis(model, weights, F=12)
    plan = dual_synthesis(model, weights, 12, T, T_e,
                          lambda2_grid=[robust.lam], nominal_result=robust)
    assert plan.objective <= T * robust.cost * (1 + 1e-6) + 1e-6
    # the plan objective equals the recomputed weighted sum of its H2 costs
    obj = H2Objective(weights, model.sigma_w, 12)
    recomputed = T_e * obj.evaluate(plan.phi1) + (T - T_e) * obj.evaluate(plan.phi2_planned)
    assert plan.objective == pytest.approx(recomputed, abs=1e-6)
    assert 0.0 <= plan.lam1 <= 1.0


def test_dual_exploration_dominates_when_Te_near_T():
    model = sec4_model(seed=4)
    weights = CostWeights(Q_SEC4, R_SEC4)
    robust = robust_synthesis(model, weights, F=12)
    obj = H2Objective(weights, model.sigma_w, 12)
    T = 400
    plan = dual_synthesis(model, weights, 12, T, T - 1,
                          lambda2_grid=[0.5, 1.0, robust.lam],
                          nominal_result=robust)
    assert obj.evaluate(plan.phi1) <= robust.cost * 1.02
    assert obj.evaluate(plan.phi1) >= robust.cost * (1 - 1e-6)


def test_dual_grid_table_complete_and_minimal():
    model = sec4_model(seed=5)
    weights = CostWeights(Q_SEC4, R_SEC4)
    robust = robust_synthesis(model, weights, F=12)
    grid = [0.05, 0.3, 1.0]
    plan = dual_synthesis(model, weights, 12, 100, 20, lambda2_grid=grid,
                          nominal_result=robust)
    assert [p.lambda2 for p in plan.grid_table] == sorted(grid)
    feasible = [p for p in plan.grid_table if np.isfinite(p.objective)]
    assert plan.objective == min(p.objective for p in feasible)
    assert plan.lambda2 in [p.lambda2 for p in feasible]
    # every grid point has a recorded status
    assert all(p.status for p in plan.grid_table)
    # both returned responses stabilize the nominal plant
    for phi in (plan.phi1, plan.phi2_planned):
        assert spectral_radius(closed_loop_matrix(model.A_hat, model.B_hat,
                                                  phi)) < 1.0


def test_dual_empty_grid_rejected():
    model = sec4_model(seed=6)
    with pytest.raises(ContractViolationError):
        dual_synthesis(model, CostWeights(Q_SEC4, R_SEC4), 12, 100, 20,
                       lambda2_grid=[])


def test_dual_bad_phase_split_rejected():
    model = sec4_model(seed=6)
    with pytest.raises(ContractViolationError):
        dual_synthesis(model, CostWeights(Q_SEC4, R_SEC4), 12, 100, 100)


def test_dual_all_grid_points_infeasible():
    model = sec4_model(seed=7)
    weights = CostWeights(Q_SEC4, R_SEC4)
    robust = robust_synthesis(model, weights, F=12)
    with pytest.raises(SynthesisInfeasibleError):
        dual_synthesis(model, weights, 12, 100, 20, lambda2_grid=[1e-3],
                       nominal_result=robust)


def test_dual_feasibility_monotone_in_lambda2():
    # if a grid value is feasible, every larger value is feasible too
    model = sec4_model(seed=8)
    weights = CostWeights(Q_SEC4, R_SEC4)
    robust = robust_synthesis(model, weights, F=12)
    plan = dual_synthesis(model, weights, 12, 100, 20,
                          lambda2_grid=[0.01, 0.05, 0.2, 0.6, 1.0],
                          nominal_result=robust)
    feas = [np.isfinite(p.objective) for p in plan.grid_table]
    first = feas.index(True) if True in feas else len(feas)
    assert all(feas[first:])


def test_dual_exploration_grows_predicted_uncertainty():
    model = sec4_model(seed=9)
    weights = CostWeights(Q_SEC4, R_SEC4)
    robust = robust_synthesis(model, weights, F=12)
    plan = dual_synthesis(model, weights, 12, 100, 20,
                          lambda2_grid=[0.5, 1.0, robust.lam],
                          nominal_result=robust)
    d_tilde = propagated_uncertainty(model.D, plan.phi1.stack(), 20, model.c_delta)
    assert np.linalg.eigvalsh(d_tilde - model.D).min() >= -1e-10


def test_default_grid_contents():
    grid = default_lambda2_grid(0.37)
    assert len(grid) == 25
    assert min(grid) == pytest.approx(1e-3)
    assert max(grid) == 1.0
    assert any(abs(g - 0.37) < 1e-12 for g in grid)


def test_robust_infeasible_rescale_fallback_is_labeled():
    model = model_from_matrices(A_TR, B_TR, 1e-9 * np.eye(4))
    weights = CostWeights(Q_SEC4, R_SEC4)
    with pytest.raises(SynthesisInfeasibleError):
        robust_synthesis(model, weights, F=8)
    res = robust_synthesis(model, weights, F=8, rescale_on_infeasible=1e10)
    assert res.heuristic_rescale == 1e10
    assert np.isfinite(res.cost)
    # a normally-feasible solve is never labeled heuristic
    ok = robust_synthesis(sec4_model(seed=1), weights, F=8,
                          rescale_on_infeasible=1e10)
    assert ok.heuristic_rescale is None


def test_robust_synthesis_native_backend_cross_check():
    model = sec4_model(seed=1)
    weights = CostWeights(Q_SEC4, R_SEC4)
    a = robust_synthesis(model, weights, F=6, backend="clarabel")
    b = robust_synthesis(model, weights, F=6, backend="native")
    assert abs(a.cost - b.cost) <= 1e-5 * a.cost
