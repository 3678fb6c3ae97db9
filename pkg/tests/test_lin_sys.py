"""Tests for the plant model, simulation, and SLS controller realization."""
import numpy as np
import pytest

from dualsls.errors import (ContractViolationError, InstabilityError,
                            InvalidResponseError)
from dualsls.lin_sys import (CostWeights, LTISystem, LinearController,
                             SLSController, Trajectory, ZeroController,
                             closed_loop_matrix, evaluate_cost,
                             realize_controller, simulate, spectral_radius,
                             sls_stationary_statistics,
                             stationary_cost_with_excitation)
from dualsls.sls_core import FIRPair

A_TR = np.array([[0.5, 1.1], [0.0, 0.8]])
B_TR = np.eye(2)

rng = np.random.default_rng(42)


def lyapunov_fixed_point(A, W, tol=1e-13, max_iter=100000):
    """Independent oracle: iterate Sigma <- A Sigma A' + W to convergence."""
    S = np.zeros_like(W)
    for _ in range(max_iter):
        S_next = A @ S @ A.T + W
        if np.abs(S_next - S).max() < tol:
            return S_next
        S = S_next
    raise AssertionError("Lyapunov iteration did not converge")


def exact_fir_pair(A, B, K, F):
    """Affine-consistent pair: geometric taps closed with a terminal correction.

    Requires square invertible B. Phi_x(k) = (A+BK)^(k-1), Phi_u(k) = K Phi_x(k)
    for k < F, and Phi_u(F) = -B^-1 A Phi_x(F) so the terminal equality holds.
    """
    n_x = A.shape[0]
    Acl = A + B @ K
    Px = np.stack([np.linalg.matrix_power(Acl, k) for k in range(F)])
    Pu = np.stack([K @ Px[k] for k in range(F)])
    Pu[F - 1] = -np.linalg.solve(B, A @ Px[F - 1])
    return FIRPair(Px, Pu)


def pulse_pair(n_x, n_u, F):
    """Phi_x = (I, 0, ..., 0), Phi_u = 0."""
    Px = np.zeros((F, n_x, n_x))
    Px[0] = np.eye(n_x)
    return FIRPair(Px, np.zeros((F, n_u, n_x)))


# ---------------------------------------------------------------------------
# simulate


def test_simulate_zero_noise_zero_controller():
    sys = LTISystem(A_TR, B_TR, sigma_w=0.0)
    traj = simulate(sys, ZeroController(2), horizon=25, rng_seed=3)
    assert np.all(traj.states == 0.0) and np.all(traj.inputs == 0.0)


def test_simulate_covariance_matches_lyapunov_oracle():
    sys = LTISystem(A_TR, B_TR, sigma_w=1.0)
    traj = simulate(sys, ZeroController(2), horizon=100_000, rng_seed=7)
    emp = traj.states.T @ traj.states / len(traj)
    oracle = lyapunov_fixed_point(A_TR, np.eye(2))
    rel = np.linalg.norm(emp - oracle) / np.linalg.norm(oracle)
    assert rel < 0.05


def test_simulate_deterministic():
    sys = LTISystem(A_TR, B_TR, sigma_w=1.0)
    t1 = simulate(sys, LinearController(-0.2 * np.eye(2)), 50, rng_seed=11)
    t2 = simulate(sys, LinearController(-0.2 * np.eye(2)), 50, rng_seed=11)
    np.testing.assert_array_equal(t1.states, t2.states)
    np.testing.assert_array_equal(t1.inputs, t2.inputs)


def test_simulate_first_state_is_first_noise_draw():
    sys = LTISystem(A_TR, B_TR, sigma_w=1.0)
    traj = simulate(sys, ZeroController(2), 5, rng_seed=123)
    w0 = np.random.default_rng(123).standard_normal((5, 2))[0]
    np.testing.assert_allclose(traj.states[0], w0)


def test_simulate_dimension_mismatch():
    sys = LTISystem(A_TR, B_TR, sigma_w=1.0)
    with pytest.raises(ContractViolationError):
        simulate(sys, LinearController(np.zeros((2, 3))), 5, rng_seed=0)
    with pytest.raises(ContractViolationError):
        simulate(sys, ZeroController(3), 5, rng_seed=0)


# ---------------------------------------------------------------------------
# evaluate_cost


def test_cost_all_ones():
    traj = Trajectory(np.ones((5, 2)), np.ones((5, 2)))
    w = CostWeights(np.eye(2), np.eye(2))
    assert evaluate_cost(traj, w, (2, 4)) == pytest.approx(12.0)


def test_cost_zero_weights():
    traj = Trajectory(rng.standard_normal((9, 2)), rng.standard_normal((9, 2)))
    w = CostWeights(np.zeros((2, 2)), np.zeros((2, 2)))
    assert evaluate_cost(traj, w) == 0.0


def test_cost_quadratic_homogeneity():
    traj = Trajectory(rng.standard_normal((9, 2)), rng.standard_normal((9, 2)))
    scaled = Trajectory(2.0 * traj.states, 2.0 * traj.inputs)
    w = CostWeights(np.diag([1.0, 0.5]), np.eye(2))
    assert evaluate_cost(scaled, w) == pytest.approx(4.0 * evaluate_cost(traj, w))


def test_cost_invalid_range():
    traj = Trajectory(np.ones((4, 2)), np.ones((4, 2)))
    w = CostWeights(np.eye(2), np.eye(2))
    for bad in ((3, 2), (0, 2), (1, 5)):
        with pytest.raises(ContractViolationError):
            evaluate_cost(traj, w, bad)


def test_cost_orthogonal_invariance():
    traj = Trajectory(rng.standard_normal((20, 2)), rng.standard_normal((20, 2)))
    Q = np.array([[2.0, 0.3], [0.3, 1.0]])
    w = CostWeights(Q, np.eye(2))
    theta = 0.7
    U = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    traj_rot = Trajectory(traj.states @ U.T, traj.inputs)
    w_rot = CostWeights(U @ Q @ U.T, np.eye(2))
    assert evaluate_cost(traj_rot, w_rot) == pytest.approx(evaluate_cost(traj, w))


# ---------------------------------------------------------------------------
# realize_controller


def test_realized_zero_feedback():
    ctrl = realize_controller(pulse_pair(2, 2, 6))
    for _ in range(10):
        assert np.all(ctrl.control(rng.standard_normal(2)) == 0.0)


def test_realize_rejects_bad_first_tap():
    phi = pulse_pair(2, 2, 4)
    Px = phi.Phi_x.copy()
    Px[0] = 1.5 * np.eye(2)
    with pytest.raises(InvalidResponseError):
        realize_controller(FIRPair(Px, phi.Phi_u))


def test_internal_estimates_recover_noise():
    # on the nominal plant with an exact pair, delta_t = w_{t-1}
    F = 8
    K = np.array([[-0.3, -0.6], [0.0, -0.5]])
    phi = exact_fir_pair(A_TR, B_TR, K, F)
    ctrl = realize_controller(phi)
    W = rng.standard_normal((3 * F, 2))
    x = W[0].copy()
    for t in range(1, 3 * F + 1):
        u = ctrl.control(x)
        np.testing.assert_allclose(ctrl.delta_history[0], W[t - 1], atol=1e-9)
        if t < 3 * F:
            x = A_TR @ x + B_TR @ u + W[t]


def test_impulse_response_matches_taps():
    # single unit disturbance, zero noise afterwards: x_t = Phi_x(t) e_i
    F = 8
    K = np.array([[-0.3, -0.6], [0.0, -0.5]])
    phi = exact_fir_pair(A_TR, B_TR, K, F)
    for i in range(2):
        ctrl = realize_controller(phi)
        x = np.eye(2)[i]
        for t in range(1, F + 1):
            u = ctrl.control(x)
            np.testing.assert_allclose(x, phi.Phi_x[t - 1][:, i], atol=1e-6)
            np.testing.assert_allclose(u, phi.Phi_u[t - 1][:, i], atol=1e-6)
            x = A_TR @ x + B_TR @ u
        # FIR response: dies out exactly after F steps
        np.testing.assert_allclose(x, 0.0, atol=1e-6)


# ---------------------------------------------------------------------------
# closed_loop_matrix / spectral_radius


def test_closed_loop_exact_pair_internally_stable():
    K = np.array([[-0.3, -0.6], [0.0, -0.5]])
    phi = exact_fir_pair(A_TR, B_TR, K, 8)
    assert spectral_radius(closed_loop_matrix(A_TR, B_TR, phi)) < 1.0


def test_closed_loop_zero_plant_nilpotent():
    phi = pulse_pair(2, 2, 5)
    M = closed_loop_matrix(np.zeros((2, 2)), B_TR, phi)
    assert spectral_radius(M) == pytest.approx(0.0, abs=1e-12)


def test_closed_loop_open_loop_radius():
    phi = pulse_pair(2, 2, 5)
    M = closed_loop_matrix(A_TR, B_TR, phi)
    assert spectral_radius(M) == pytest.approx(0.8, abs=1e-12)


def test_spectral_radius_examples():
    assert spectral_radius(np.eye(3)) == pytest.approx(1.0)
    assert spectral_radius(A_TR) == pytest.approx(0.8)
    shift = np.diag(np.ones(3), k=-1)
    assert spectral_radius(shift) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ContractViolationError):
        spectral_radius(np.ones((2, 3)))


@pytest.mark.parametrize("trial", range(20))
def test_stability_vs_bounded_simulation(trial):
    # spectral radius < 1 iff state norms stay bounded over a long rollout
    local = np.random.default_rng(1000 + trial)
    n = 2
    A = local.standard_normal((n, n)) * 0.7
    if trial % 2:
        A = A * (1.6 / max(np.abs(np.linalg.eigvals(A)).max(), 1e-6))
    sys = LTISystem(A, np.eye(n), sigma_w=1.0)
    phi = pulse_pair(n, n, 4)
    M = closed_loop_matrix(A, np.eye(n), phi)
    stable = spectral_radius(M) < 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        traj = simulate(sys, realize_controller(phi), 10_000, rng_seed=trial)
    with np.errstate(invalid="ignore"):
        bounded = bool(np.abs(traj.states[-100:]).max() < 1e6)
    assert stable == bounded


# ---------------------------------------------------------------------------
# stationary_cost_with_excitation


def test_stationary_cost_identity_case():
    sys = LTISystem(np.zeros((2, 2)), np.eye(2), sigma_w=1.0)
    w = CostWeights(np.eye(2), np.eye(2))
    cost = stationary_cost_with_excitation(sys, np.zeros((2, 2)), 0.0, w)
    assert cost == pytest.approx(2.0)


def test_stationary_cost_monotone_in_excitation():
    sys = LTISystem(A_TR, B_TR, sigma_w=1.0)
    w = CostWeights(np.diag([1.0, 0.001]), 1e3 * np.eye(2))
    K = -0.5 * A_TR
    costs = [stationary_cost_with_excitation(sys, K, s, w) for s in (0.0, 0.1, 0.3)]
    assert costs[0] < costs[1] < costs[2]


def test_stationary_cost_scalar_geometric_series():
    sys = LTISystem([[0.5]], [[1.0]], sigma_w=1.0)
    w = CostWeights([[1.0]], [[0.0]])
    cost = stationary_cost_with_excitation(sys, [[0.0]], 0.0, w)
    assert cost == pytest.approx(1.0 / (1.0 - 0.25))


def test_stationary_cost_rejects_unstable():
    sys = LTISystem([[1.2]], [[1.0]], sigma_w=1.0)
    w = CostWeights([[1.0]], [[1.0]])
    with pytest.raises(InstabilityError):
        stationary_cost_with_excitation(sys, [[0.0]], 0.0, w)


def test_sls_stationary_statistics_matches_simulation():
    sys = LTISystem(A_TR, B_TR, sigma_w=1.0)
    w = CostWeights(np.diag([1.0, 0.5]), 0.1 * np.eye(2))
    K = np.array([[-0.3, -0.6], [0.0, -0.5]])
    phi = exact_fir_pair(A_TR, B_TR, K, 8)
    cost, Sx, Su, Sux = sls_stationary_statistics(sys, phi, w)
    traj = simulate(sys, realize_controller(phi), 200_000, rng_seed=5)
    emp = evaluate_cost(traj, w) / len(traj)
    assert emp == pytest.approx(cost, rel=0.03)
    emp_Sx = traj.states.T @ traj.states / len(traj)
    np.testing.assert_allclose(emp_Sx, Sx, rtol=0.08, atol=0.02)
