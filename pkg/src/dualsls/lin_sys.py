"""Linear plant model, closed-loop simulation, and SLS controller realization."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg as sla

from .errors import ContractViolationError, InstabilityError, InvalidResponseError

if TYPE_CHECKING:  # pragma: no cover
    from .sls_core import FIRPair

PSD_EIG_TOL = -1e-10


def _frozen(a, shape=None) -> np.ndarray:
    a = np.array(a, dtype=float)
    if shape is not None and a.shape != shape:
        raise ContractViolationError(f"expected shape {shape}, got {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LTISystem:
    """x_{t+1} = A x_t + B u_t + w_t with w_t ~ N(0, sigma_w^2 I), x_0 = 0."""

    A: np.ndarray
    B: np.ndarray
    sigma_w: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ContractViolationError(f"A must be square, got {A.shape}")
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        if self.sigma_w < 0:
            raise ContractViolationError("sigma_w must be nonnegative")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "sigma_w", float(self.sigma_w))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class CostWeights:
    """Stage cost x'Qx + u'Ru; Q, R symmetric PSD."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("Q", "R"):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if M.shape[0] != M.shape[1]:
                raise ContractViolationError(f"{name} must be square")
            if np.abs(M - M.T).max(initial=0.0) > 1e-12:
                raise ContractViolationError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() < PSD_EIG_TOL:
                raise ContractViolationError(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, _frozen(M))

    def sqrt_q(self) -> np.ndarray:
        return _psd_sqrt(self.Q)

    def sqrt_r(self) -> np.ndarray:
        return _psd_sqrt(self.R)


def _psd_sqrt(M: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(M)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


@dataclass(frozen=True)
class Trajectory:
    """Recorded closed-loop data for t = 1..N (row t-1 holds time t)."""

    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        if states.shape[0] != inputs.shape[0]:
            raise ContractViolationError(
                f"state/input lengths differ: {states.shape[0]} vs {inputs.shape[0]}")
        object.__setattr__(self, "states", _frozen(states))
        object.__setattr__(self, "inputs", _frozen(inputs))

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def n_x(self) -> int:
        return self.states.shape[1]

    @property
    def n_u(self) -> int:
        return self.inputs.shape[1]


class ZeroController:
    """u = 0."""

    def __init__(self, n_u: int):
        self.n_u = n_u

    def reset(self):
        pass

    def control(self, x) -> np.ndarray:
        return np.zeros(self.n_u)


class LinearController:
    """Static feedback u = K x."""

    def __init__(self, K):
        self.K = np.atleast_2d(np.asarray(K, dtype=float))

    @property
    def n_x(self) -> int:
        return self.K.shape[1]

    @property
    def n_u(self) -> int:
        return self.K.shape[0]

    def reset(self):
        pass

    def control(self, x) -> np.ndarray:
        return self.K @ x


class SLSController:
    """Time-domain realization of an FIR response pair.

    Runs the internal disturbance-estimate recursion
        d_t = x_t - sum_{k=2..F} Phi_x(k) d_{t+1-k}
        u_t = sum_{k=1..F} Phi_u(k) d_{t+1-k}
    with d_s = 0 for s <= 0. The ring buffer holds F-1 past estimates.
    """

    def __init__(self, phi: "FIRPair"):
        self.phi = phi
        self._Px = np.asarray(phi.Phi_x)  # (F, n_x, n_x), tap 1 normalized to I
        self._Pu = np.asarray(phi.Phi_u)  # (F, n_u, n_x)
        self.n_x = self._Px.shape[1]
        self.n_u = self._Pu.shape[1]
        self.reset()

    def reset(self):
        self.delta_history = np.zeros((self._Px.shape[0] - 1, self.n_x))

    def control(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_x,):
            raise ContractViolationError(
                f"controller expects state of dim {self.n_x}, got {x.shape}")
        hist = self.delta_history
        if hist.shape[0]:
            d = x - np.einsum("kij,kj->i", self._Px[1:], hist)
            u = self._Pu[0] @ d + np.einsum("kij,kj->i", self._Pu[1:], hist)
            self.delta_history = np.vstack([d[None, :], hist[:-1]])
        else:
            d = x
            u = self._Pu[0] @ d
        return u


def simulate(system: LTISystem, controller, horizon: int, rng_seed) -> Trajectory:
    """Closed-loop rollout from x_0 = 0; states[1] = w_0.

    `rng_seed` may be an int, a SeedSequence, or a Generator; identical
    seeds produce bit-identical trajectories. The stream is used for
    process noise only, so controllers with internal randomness do not
    perturb it.
    """
    if horizon < 1:
        raise ContractViolationError("horizon must be >= 1")
    n_x_c = getattr(controller, "n_x", None)
    if n_x_c is not None and n_x_c != system.n_x:
        raise ContractViolationError(
            f"controller state dim {n_x_c} != system n_x {system.n_x}")
    rng = np.random.default_rng(rng_seed)
    W = system.sigma_w * rng.standard_normal((horizon, system.n_x))
    controller.reset()
    states = np.empty((horizon, system.n_x))
    inputs = np.empty((horizon, system.n_u))
    x = W[0].copy()
    for t in range(horizon):
        if t > 0:
            x = system.A @ x + system.B @ u + W[t]
        u = np.asarray(controller.control(x), dtype=float)
        if u.shape != (system.n_u,):
            raise ContractViolationError(
                f"controller emitted input of shape {u.shape}, expected ({system.n_u},)")
        states[t] = x
        inputs[t] = u
    return Trajectory(states, inputs)


def evaluate_cost(traj: Trajectory, weights: CostWeights, t_range=None) -> float:
    """Sum of x_t'Qx_t + u_t'Ru_t over t in [t1, t2] (1-based, inclusive)."""
    n = len(traj)
    t1, t2 = (1, n) if t_range is None else t_range
    if not (1 <= t1 <= t2 <= n):
        raise ContractViolationError(
            f"invalid range [{t1}, {t2}] for trajectory of length {n}")
    X = traj.states[t1 - 1:t2]
    U = traj.inputs[t1 - 1:t2]
    return float(np.einsum("ti,ij,tj->", X, weights.Q, X)
                 + np.einsum("ti,ij,tj->", U, weights.R, U))


def realize_controller(phi: "FIRPair", tol: float = 1e-6) -> SLSController:
    """Realize an FIR pair; requires Phi_x(1) = I within `tol`, then exact."""
    first = np.asarray(phi.Phi_x[0])
    dev = np.abs(first - np.eye(first.shape[0])).max()
    if dev > tol:
        raise InvalidResponseError(
            f"Phi_x(1) deviates from identity by {dev:.3e} (tolerance {tol:.0e})")
    normalized = phi.with_first_tap_identity()
    return SLSController(normalized)


def closed_loop_matrix(A, B, phi: "FIRPair") -> np.ndarray:
    """Update matrix of the augmented state (x_t, d_{t-1}, ..., d_{t-F+1})
    for the realized controller in closed loop with the plant (A, B)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Px = np.asarray(phi.Phi_x)
    Pu = np.asarray(phi.Phi_u)
    F, n_x = Px.shape[0], Px.shape[1]
    if A.shape != (n_x, n_x) or B.shape[1] != Pu.shape[1]:
        raise ContractViolationError("plant/response dimension mismatch")
    # u_t = Phi_u(1) x_t + sum_{k>=2} (Phi_u(k) - Phi_u(1) Phi_x(k)) d_{t+1-k}
    M = np.zeros((n_x * F, n_x * F))
    M[:n_x, :n_x] = A + B @ Pu[0]
    for k in range(1, F):
        M[:n_x, k * n_x:(k + 1) * n_x] = B @ (Pu[k] - Pu[0] @ Px[k])
    if F > 1:
        M[n_x:2 * n_x, :n_x] = np.eye(n_x)
        for k in range(1, F):
            M[n_x:2 * n_x, k * n_x:(k + 1) * n_x] = -Px[k]
        for j in range(2, F):
            M[j * n_x:(j + 1) * n_x, (j - 1) * n_x:j * n_x] = np.eye(n_x)
    return M


def spectral_radius(M) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ContractViolationError(f"matrix must be square, got {M.shape}")
    return float(np.abs(np.linalg.eigvals(M)).max())


def stationary_cost_with_excitation(system: LTISystem, K, sigma_e: float,
                                    weights: CostWeights) -> float:
    """Per-step stationary cost of u = Kx + e, e ~ N(0, sigma_e^2 I).

    Sigma solves Sigma = (A+BK) Sigma (A+BK)' + sigma_w^2 I + sigma_e^2 B B'.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    A, B = system.A, system.B
    Acl = A + B @ K
    if spectral_radius(Acl) >= 1.0:
        raise InstabilityError(
            f"A + BK is not stable (spectral radius {spectral_radius(Acl):.4f})")
    W = system.sigma_w ** 2 * np.eye(system.n_x) + sigma_e ** 2 * (B @ B.T)
    Sigma = sla.solve_discrete_lyapunov(Acl, W)
    return float(np.trace(weights.Q @ Sigma)
                 + np.trace(weights.R @ (K @ Sigma @ K.T
                                         + sigma_e ** 2 * np.eye(system.n_u))))


def sls_stationary_statistics(system: LTISystem, phi: "FIRPair",
                              weights: CostWeights, sigma_e: float = 0.0):
    """Exact stationary second-order statistics of the realized controller
    (plus optional input excitation) in closed loop with `system`.

    Returns (cost, Sigma_x, Sigma_u, Sigma_ux). Raises InstabilityError if
    the augmented closed loop is unstable.
    """
    Px = np.asarray(phi.Phi_x)
    Pu = np.asarray(phi.Phi_u)
    F, n_x = Px.shape[0], Px.shape[1]
    n_u = Pu.shape[1]
    M = closed_loop_matrix(system.A, system.B, phi)
    if spectral_radius(M) >= 1.0:
        raise InstabilityError("augmented closed loop is not stable")
    Cu = np.zeros((n_u, n_x * F))
    Cu[:, :n_x] = Pu[0]
    for k in range(1, F):
        Cu[:, k * n_x:(k + 1) * n_x] = Pu[k] - Pu[0] @ Px[k]
    Ew = np.zeros((n_x * F, n_x))
    Ew[:n_x] = np.eye(n_x)
    Ee = np.zeros((n_x * F, n_u))
    Ee[:n_x] = system.B
    W = system.sigma_w ** 2 * (Ew @ Ew.T) + sigma_e ** 2 * (Ee @ Ee.T)
    Sz = sla.solve_discrete_lyapunov(M, W)
    Sx = Sz[:n_x, :n_x]
    Su = Cu @ Sz @ Cu.T + sigma_e ** 2 * np.eye(n_u)
    Sux = Cu @ Sz[:, :n_x]
    cost = float(np.trace(weights.Q @ Sx) + np.trace(weights.R @ Su))
    return cost, Sx, Su, Sux
