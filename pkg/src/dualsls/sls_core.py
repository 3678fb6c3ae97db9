"""Finite-dimensional SLS objects: FIR response pairs, the nominal affine
subspace, the H2 objective, H-infinity certificate structure, the structured
robust stability LMI, and uncertainty propagation/linearization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BilinearityError, ContractViolationError
from .lin_sys import CostWeights
from .sdp import ConicProgram, MatExpr, Solution, Tolerances, block, hstack, solve, vstack
from .sdp import OPTIMAL


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


# ---------------------------------------------------------------------------
# response containers


@dataclass(frozen=True)
class FIRPair:
    """FIR closed-loop responses {Phi_x(k)}, {Phi_u(k)} for k = 1..F.

    Arrays are indexed Phi_x[k-1] = Phi_x(k). The k = 0 taps are
    identically zero (strictly proper responses) and never stored.
    """

    Phi_x: np.ndarray  # (F, n_x, n_x)
    Phi_u: np.ndarray  # (F, n_u, n_x)

    def __post_init__(self):
        Px = np.asarray(self.Phi_x, dtype=float)
        Pu = np.asarray(self.Phi_u, dtype=float)
        if Px.ndim != 3 or Pu.ndim != 3 or Px.shape[0] != Pu.shape[0]:
            raise ContractViolationError("tap arrays must be (F, ., n_x) with equal F")
        if Px.shape[1] != Px.shape[2] or Pu.shape[2] != Px.shape[1]:
            raise ContractViolationError("tap dimensions inconsistent")
        object.__setattr__(self, "Phi_x", Px)
        object.__setattr__(self, "Phi_u", Pu)

    @property
    def F(self) -> int:
        return self.Phi_x.shape[0]

    @property
    def n_x(self) -> int:
        return self.Phi_x.shape[1]

    @property
    def n_u(self) -> int:
        return self.Phi_u.shape[1]

    def with_first_tap_identity(self) -> "FIRPair":
        Px = self.Phi_x.copy()
        Px[0] = np.eye(self.n_x)
        return FIRPair(Px, self.Phi_u.copy())

    def stack(self) -> "PhiStack":
        blocks = [np.hstack([self.Phi_x[k].T, self.Phi_u[k].T])
                  for k in range(self.F)]
        return PhiStack(np.vstack(blocks), self.n_x, self.n_u)


@dataclass(frozen=True)
class PhiStack:
    """Row-block k of `matrix` is [Phi_x(k)', Phi_u(k)'], shape (n_x F, n_x+n_u)."""

    matrix: np.ndarray
    n_x: int
    n_u: int

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.shape[1] != self.n_x + self.n_u or M.shape[0] % self.n_x:
            raise ContractViolationError(f"bad stack shape {M.shape}")
        object.__setattr__(self, "matrix", M)

    @property
    def F(self) -> int:
        return self.matrix.shape[0] // self.n_x

    def to_fir_pair(self) -> "FIRPair":
        F, n_x, n_u = self.F, self.n_x, self.n_u
        Px = np.empty((F, n_x, n_x))
        Pu = np.empty((F, n_u, n_x))
        for k in range(F):
            blockk = self.matrix[k * n_x:(k + 1) * n_x]
            Px[k] = blockk[:, :n_x].T
            Pu[k] = blockk[:, n_x:].T
        return FIRPair(Px, Pu)

    def gram(self) -> np.ndarray:
        return _sym(self.matrix.T @ self.matrix)


@dataclass(frozen=True)
class HinfCertificate:
    """Trace-parameterized certificate: P in S^{block_dim * F} with
    sum_i P_ii = gamma I and zero banded block sums.

    Paired with the coupling [[P, Hbar], [Hbar', I]] >= 0 it certifies
    ||H||_inf <= sqrt(gamma); at gamma = 1 the threshold is 1.
    """

    P: np.ndarray
    gamma: float
    block_dim: int

    def __post_init__(self):
        P = _sym(np.asarray(self.P, dtype=float))
        object.__setattr__(self, "P", P)
        if P.shape[0] % self.block_dim:
            raise ContractViolationError("P size not a multiple of block_dim")

    @property
    def F(self) -> int:
        return self.P.shape[0] // self.block_dim

    def structure_residual(self) -> float:
        """Max violation of the trace/banded-sum conditions."""
        p, F = self.block_dim, self.F
        res = np.abs(_band_sum(self.P, p, 0) - self.gamma * np.eye(p)).max()
        for k in range(1, F):
            res = max(res, np.abs(_band_sum(self.P, p, k)).max())
        return float(res)


def _band_sum(P: np.ndarray, p: int, k: int) -> np.ndarray:
    F = P.shape[0] // p
    s = np.zeros((p, p))
    for i in range(F - k):
        s += P[i * p:(i + 1) * p, (i + k) * p:(i + k + 1) * p]
    return s


# ---------------------------------------------------------------------------
# constraint and objective builders


def response_taps(prog: ConicProgram, n_x: int, n_u: int, F: int,
                  prefix: str = "", first_tap_identity: bool = True):
    """Declare tap variables on `prog`; returns (x_taps, u_taps) expressions.

    With first_tap_identity the Phi_x(1) = I equality is eliminated by
    substituting the constant identity block.
    """
    x_taps = []
    if first_tap_identity:
        x_taps.append(MatExpr.constant(np.eye(n_x)))
        start = 2
    else:
        start = 1
    for k in range(start, F + 1):
        x_taps.append(prog.add_variable(f"{prefix}Phi_x[{k}]", (n_x, n_x)))
    u_taps = [prog.add_variable(f"{prefix}Phi_u[{k}]", (n_u, n_x))
              for k in range(1, F + 1)]
    return x_taps, u_taps


def affine_constraints(A_hat, B_hat, x_taps, u_taps) -> list:
    """Equalities of the nominal affine subspace, as expressions == 0:
    Phi_x(1) = I (skipped when tap 1 is the constant identity);
    Phi_x(k+1) = A Phi_x(k) + B Phi_u(k);  A Phi_x(F) + B Phi_u(F) = 0.
    """
    A_hat = np.atleast_2d(np.asarray(A_hat, dtype=float))
    B_hat = np.asarray(B_hat, dtype=float).reshape(A_hat.shape[0], -1)
    F = len(x_taps)
    if F < 1 or len(u_taps) != F:
        raise ContractViolationError("need F >= 1 taps with matching lengths")
    n_x = A_hat.shape[0]
    eqs = []
    if not x_taps[0].is_constant:
        eqs.append(x_taps[0] - np.eye(n_x))
    for k in range(F - 1):
        eqs.append(x_taps[k + 1] - (A_hat @ x_taps[k] + B_hat @ u_taps[k]))
    eqs.append(A_hat @ x_taps[F - 1] + B_hat @ u_taps[F - 1])
    return eqs


def affine_residual(A_hat, B_hat, phi: FIRPair) -> float:
    """Max violation of the nominal affine constraints at a concrete pair."""
    A_hat = np.atleast_2d(np.asarray(A_hat, dtype=float))
    B_hat = np.asarray(B_hat, dtype=float).reshape(A_hat.shape[0], -1)
    res = np.abs(phi.Phi_x[0] - np.eye(phi.n_x)).max()
    for k in range(phi.F - 1):
        res = max(res, np.abs(phi.Phi_x[k + 1]
                              - A_hat @ phi.Phi_x[k] - B_hat @ phi.Phi_u[k]).max())
    res = max(res, np.abs(A_hat @ phi.Phi_x[-1] + B_hat @ phi.Phi_u[-1]).max())
    return float(res)


class H2Objective:
    """J = sigma_w^2 sum_k ||Q^(1/2) Phi_x(k)||_F^2 + ||R^(1/2) Phi_u(k)||_F^2."""

    def __init__(self, weights: CostWeights, sigma_w: float, F: int):
        self.weights = weights
        self.sigma_w = float(sigma_w)
        self.F = int(F)
        self._Qh = weights.sqrt_q()
        self._Rh = weights.sqrt_r()

    def evaluate(self, phi: FIRPair) -> float:
        val = 0.0
        for k in range(phi.F):
            val += float(np.trace(phi.Phi_x[k].T @ self.weights.Q @ phi.Phi_x[k]))
            val += float(np.trace(phi.Phi_u[k].T @ self.weights.R @ phi.Phi_u[k]))
        return self.sigma_w ** 2 * val

    def quad_terms(self, x_taps, u_taps) -> list:
        """Vector expressions whose squared norms sum to the objective."""
        terms = []
        for tap in x_taps:
            terms.append(self.sigma_w * (self._Qh @ tap))
        for tap in u_taps:
            terms.append(self.sigma_w * (self._Rh @ tap))
        return terms


def stack_expression(x_taps, u_taps) -> MatExpr:
    """Phibar as an expression: row-block k is [Phi_x(k)', Phi_u(k)']."""
    return vstack([hstack([x_taps[k].T, u_taps[k].T]) for k in range(len(x_taps))])


def hinf_structure(P: MatExpr, F: int, block_dim: int, gamma) -> list:
    """Equalities sum_i P_ii = gamma I and sum_i P_{i,i+k} = 0, k = 1..F-1.

    `gamma` may be a scalar or a scalar expression.
    """
    p = block_dim
    if P.shape != (p * F, p * F):
        raise ContractViolationError(f"P must be {(p * F, p * F)}, got {P.shape}")
    eqs = []
    for k in range(F):
        s = None
        for i in range(F - k):
            sel_i = np.zeros((p, p * F))
            sel_i[:, i * p:(i + 1) * p] = np.eye(p)
            sel_j = np.zeros((p, p * F))
            sel_j[:, (i + k) * p:(i + k + 1) * p] = np.eye(p)
            term = sel_i @ P @ sel_j.T
            s = term if s is None else s + term
        if k == 0:
            target = gamma.times_matrix(np.eye(p)) if isinstance(gamma, MatExpr) \
                else float(gamma) * np.eye(p)
            eqs.append(s - target)
        else:
            eqs.append(s)
    return eqs


def robust_stability_lmi(stack, P, lam, D_expr, n_x: int, n_u: int) -> MatExpr:
    """The 3x3 block PSD constraint
        [[P, 0, Phibar], [0, (1-lam) I, 0], [Phibar', 0, lam D]] >= 0.

    Linear in (P, Phibar, lam) for constant D, and in (P, Phibar) for fixed
    lam with an affine D expression. Both symbolic at once is bilinear.
    """
    phibar = stack if isinstance(stack, MatExpr) \
        else MatExpr.constant(stack.matrix if isinstance(stack, PhiStack) else stack)
    P = P if isinstance(P, MatExpr) else MatExpr.constant(P)
    lam_symbolic = isinstance(lam, MatExpr)
    d_symbolic = isinstance(D_expr, MatExpr) and not D_expr.is_constant
    if lam_symbolic and d_symbolic:
        raise BilinearityError(
            "lambda and the uncertainty expression cannot both be symbolic; "
            "fix lambda to keep the constraint convex")
    nF = phibar.shape[0]
    if phibar.shape[1] != n_x + n_u or P.shape != (nF, nF):
        raise ContractViolationError("stack/certificate dimensions inconsistent")
    eye_mid = np.eye(n_x)
    if lam_symbolic:
        mid = MatExpr.constant(eye_mid) - lam.times_matrix(eye_mid)
        corner = lam.times_matrix(np.asarray(D_expr, dtype=float))
    else:
        lam = float(lam)
        mid = MatExpr.constant((1.0 - lam) * eye_mid)
        corner = D_expr * lam if isinstance(D_expr, MatExpr) \
            else MatExpr.constant(lam * np.asarray(D_expr, dtype=float))
    z1 = np.zeros((nF, n_x))
    z2 = np.zeros((n_x, n_x + n_u))
    return block([
        [P, z1, phibar],
        [z1.T, mid, z2],
        [phibar.T, z2.T, corner],
    ])


# ---------------------------------------------------------------------------
# uncertainty propagation


def propagated_uncertainty(D_1, stack: PhiStack, T_e: int, c_delta: float) -> np.ndarray:
    """D-tilde = D_1 + (T_e / c_delta) Phibar' Phibar (symmetric PSD shift)."""
    D_1 = _sym(np.asarray(D_1, dtype=float))
    return D_1 + (T_e / c_delta) * stack.gram()


@dataclass(frozen=True)
class UncertaintyExpr:
    """Affine under-approximation of the propagated uncertainty,
    linearized at a nominal response stack:
        D_l(Phibar) = D_1 + (T_e/c_delta) (Phibar' N + N' Phibar - N' N),
    with N the nominal stack. Satisfies D_l <= D-tilde with equality at N.
    """

    D_1: np.ndarray
    stack_nom: PhiStack
    T_e: int
    c_delta: float

    def __post_init__(self):
        object.__setattr__(self, "D_1", _sym(np.asarray(self.D_1, dtype=float)))

    @property
    def scale(self) -> float:
        return self.T_e / self.c_delta

    @property
    def constant(self) -> np.ndarray:
        return self.D_1 - self.scale * self.stack_nom.gram()

    def linear(self, phibar: np.ndarray) -> np.ndarray:
        N = self.stack_nom.matrix
        return self.scale * _sym(phibar.T @ N + N.T @ phibar)

    def evaluate(self, stack) -> np.ndarray:
        phibar = stack.matrix if isinstance(stack, PhiStack) else np.asarray(stack)
        return self.constant + self.linear(phibar)

    def as_expr(self, phibar: MatExpr) -> MatExpr:
        N = self.stack_nom.matrix
        lin = (phibar.T @ (self.scale * N)) + ((self.scale * N.T) @ phibar)
        return (lin + lin.T) * 0.5 + self.constant


def linearized_uncertainty(D_1, stack_nom: PhiStack, T_e: int,
                           c_delta: float) -> UncertaintyExpr:
    return UncertaintyExpr(np.asarray(D_1, dtype=float), stack_nom, int(T_e),
                           float(c_delta))


# ---------------------------------------------------------------------------
# certified H-infinity norm of a concrete FIR transfer matrix


def hinf_norm_bound(taps, tol: Tolerances | None = None,
                    backend: str = "clarabel") -> tuple[float, HinfCertificate, Solution]:
    """Least certified H-infinity norm of H(z) = sum_k H(k) z^-k, k = 1..F.

    Minimizes the trace parameter gamma subject to the banded structure and
    the coupling [[P, Hbar], [Hbar', I]] >= 0; returns (sqrt(gamma*), cert,
    solution). The bound is tight (the parameterization is exact).
    """
    taps = [np.atleast_2d(np.asarray(t, dtype=float)) for t in taps]
    p, m = taps[0].shape
    F = len(taps)
    Hbar = np.vstack(taps)
    prog = ConicProgram()
    P = prog.add_variable("P", (p * F, p * F), symmetric=True)
    gamma = prog.add_scalar("gamma")
    for eq in hinf_structure(P, F, p, gamma):
        prog.add_equality(eq)
    prog.add_psd(block([[P, Hbar], [Hbar.T, np.eye(m)]]))
    prog.set_linear_term(gamma)
    sol = solve(prog, tol=tol or Tolerances(feas=1e-9, gap=1e-9), backend=backend)
    if sol.status != OPTIMAL:
        raise RuntimeError(f"H-infinity bound solve failed: status {sol.status}")
    g = max(sol.values["gamma"].item(), 0.0)
    cert = HinfCertificate(sol.values["P"], g, p)
    return float(np.sqrt(g)), cert, sol


def h2_objective(weights: CostWeights, sigma_w: float, F: int) -> H2Objective:
    """Convex quadratic stationary-cost form over an F-tap response pair."""
    return H2Objective(weights, sigma_w, F)
