"""Shared helpers: data generation, oracles, and boundary sampling."""
import numpy as np
import pytest

from dualsls.identify import Dataset, Model, build_model
from dualsls.lin_sys import Trajectory

A_TR = np.array([[0.5, 1.1], [0.0, 0.8]])
B_TR = np.eye(2)
Q_SEC4 = np.diag([1.0, 0.001])
R_SEC4 = 1e3 * np.eye(2)


def open_loop_rollout(A, B, length, rng, sigma_w=1.0, input_std=1.0):
    n_x, n_u = A.shape[0], B.shape[1]
    U = input_std * rng.standard_normal((length, n_u))
    W = sigma_w * rng.standard_normal((length, n_x))
    X = np.empty((length, n_x))
    X[0] = W[0]
    for t in range(1, length):
        X[t] = A @ X[t - 1] + B @ U[t - 1] + W[t]
    return Trajectory(X, U)


def initial_dataset(A, B, rng, n_rollouts=10, length=6, sigma_w=1.0):
    return Dataset([open_loop_rollout(A, B, length, rng, sigma_w)
                    for _ in range(n_rollouts)])


def sec4_model(seed=0, n_rollouts=10, length=6):
    rng = np.random.default_rng(seed)
    return build_model(initial_dataset(A_TR, B_TR, rng, n_rollouts, length),
                       sigma_w=1.0, delta=0.1)


def dare_cost_fixed_point(A, B, Q, R, sigma_w, tol=1e-13, max_iter=100000):
    """Independent oracle: Riccati fixed-point iteration, cost sigma^2 tr(P)."""
    A, B, Q, R = map(np.atleast_2d, (A, B, Q, R))
    P = Q.copy()
    for _ in range(max_iter):
        BtPB = R + B.T @ P @ B
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(BtPB, B.T @ P @ A)
        if np.abs(P_next - P).max() < tol:
            return float(sigma_w ** 2 * np.trace(P_next))
        P = P_next
    raise AssertionError("Riccati iteration did not converge")


def sample_boundary_members(model: Model, n: int, rng):
    """Plants on the boundary of the credibility region: random direction
    scaled so the largest eigenvalue of X' D X equals one."""
    out = []
    d = model.n_x + model.n_u
    for _ in range(n):
        Xi = rng.standard_normal((d, model.n_x))
        lam_max = np.linalg.eigvalsh(Xi.T @ model.D @ Xi).max()
        X = Xi / np.sqrt(lam_max)
        dAB = X.T
        out.append((model.A_hat - dAB[:, :model.n_x],
                    model.B_hat - dAB[:, model.n_x:]))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
