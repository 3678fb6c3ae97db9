"""Least-squares identification, uncertainty quantification, and datasets."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincinv

from .errors import ContractViolationError, UnderdeterminedDataError
from .lin_sys import Trajectory


@dataclass(frozen=True)
class Dataset:
    """A list of contiguous rollouts; regressor pairs never cross rollouts."""

    rollouts: tuple

    def __init__(self, rollouts=()):
        object.__setattr__(self, "rollouts", tuple(rollouts))
        dims = {(r.n_x, r.n_u) for r in self.rollouts}
        if len(dims) > 1:
            raise ContractViolationError(f"rollouts have mixed dimensions: {dims}")

    @property
    def n_x(self) -> int:
        return self.rollouts[0].n_x if self.rollouts else 0

    @property
    def n_u(self) -> int:
        return self.rollouts[0].n_u if self.rollouts else 0

    @property
    def n_pairs(self) -> int:
        return sum(max(len(r) - 1, 0) for r in self.rollouts)

    def regressors(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked ([x_t; u_t], x_{t+1}) pairs formed within each rollout."""
        Z, Y = [], []
        for r in self.rollouts:
            if len(r) < 2:
                continue
            Z.append(np.hstack([r.states[:-1], r.inputs[:-1]]))
            Y.append(r.states[1:])
        if not Z:
            d = self.n_x + self.n_u
            return np.zeros((0, d)), np.zeros((0, self.n_x))
        return np.vstack(Z), np.vstack(Y)


def merge(d1: Dataset, d2: Dataset) -> Dataset:
    if d1.rollouts and d2.rollouts and (d1.n_x, d1.n_u) != (d2.n_x, d2.n_u):
        raise ContractViolationError(
            f"dimension mismatch: ({d1.n_x},{d1.n_u}) vs ({d2.n_x},{d2.n_u})")
    return Dataset(d1.rollouts + d2.rollouts)


def regressor_gram(data: Dataset) -> np.ndarray:
    """Unscaled sum of [x;u][x;u]' over all usable pairs."""
    Z, _ = data.regressors()
    G = Z.T @ Z
    return 0.5 * (G + G.T)


def least_squares(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """OLS estimates (A_hat, B_hat); requires full-rank regressors."""
    Z, Y = data.regressors()
    d = data.n_x + data.n_u
    rank = int(np.linalg.matrix_rank(Z)) if Z.size else 0
    if rank < d:
        raise UnderdeterminedDataError(rank, d)
    theta, *_ = np.linalg.lstsq(Z, Y, rcond=None)
    theta = theta.T  # (n_x, n_x + n_u)
    return theta[:, :data.n_x].copy(), theta[:, data.n_x:].copy()


def estimate_sigma_w(data: Dataset, A_hat, B_hat) -> float:
    """Residual-variance estimate of sigma_w (optional; off by default)."""
    Z, Y = data.regressors()
    theta = np.hstack([np.atleast_2d(A_hat), np.atleast_2d(B_hat)])
    resid = Y - Z @ theta.T
    dof = max(resid.size - theta.size, 1)
    return float(np.sqrt((resid ** 2).sum() / dof))


def chi_square_quantile(dof: int, p: float) -> float:
    """c with CDF_{chi2_dof}(c) = p, via the regularized incomplete gamma."""
    if dof < 1:
        raise ContractViolationError("dof must be >= 1")
    if not 0.0 < p < 1.0:
        raise ContractViolationError(f"p must lie in (0, 1), got {p}")
    return float(2.0 * gammaincinv(dof / 2.0, p))


@dataclass(frozen=True)
class Model:
    """Nominal estimates with a scaled-Gram uncertainty matrix.

    The credibility region is {(A, B): X' D X <= I, X = [A_hat-A, B_hat-B]'};
    it contains the true parameters with probability 1 - delta.
    """

    A_hat: np.ndarray
    B_hat: np.ndarray
    D: np.ndarray
    delta: float
    sigma_w: float
    c_delta: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A_hat, dtype=float))
        B = np.asarray(self.B_hat, dtype=float).reshape(A.shape[0], -1)
        D = np.asarray(self.D, dtype=float)
        d = A.shape[0] + B.shape[1]
        if D.shape != (d, d):
            raise ContractViolationError(f"D must be {d}x{d}, got {D.shape}")
        if np.abs(D - D.T).max(initial=0.0) > 1e-9:
            raise ContractViolationError("D must be symmetric")
        D = 0.5 * (D + D.T)
        if np.linalg.eigvalsh(D).min() < -1e-9:
            raise ContractViolationError("D must be positive semidefinite")
        if not 0.0 < self.delta < 1.0:
            raise ContractViolationError("delta must lie in (0, 1)")
        if self.c_delta <= 0.0:
            raise ContractViolationError("c_delta must be positive")
        object.__setattr__(self, "A_hat", A)
        object.__setattr__(self, "B_hat", B)
        object.__setattr__(self, "D", D)

    @property
    def n_x(self) -> int:
        return self.A_hat.shape[0]

    @property
    def n_u(self) -> int:
        return self.B_hat.shape[1]


def build_model(data: Dataset, sigma_w: float, delta: float,
                quantile_tail: str = "upper") -> Model:
    """Model from data: OLS estimates plus D = Gram / (sigma_w^2 c_delta).

    `quantile_tail` selects the chi-squared convention for c_delta:
    "upper" (default) uses the 1-delta quantile, which matches the stated
    coverage of the credibility region; "literal" uses the delta quantile.
    """
    if sigma_w <= 0:
        raise ContractViolationError("sigma_w must be positive to scale D")
    if not 0.0 < delta < 1.0:
        raise ContractViolationError("delta must lie in (0, 1)")
    if quantile_tail not in ("upper", "literal"):
        raise ContractViolationError("quantile_tail must be 'upper' or 'literal'")
    A_hat, B_hat = least_squares(data)
    n_x, n_u = data.n_x, data.n_u
    dof = n_x * n_x + n_x * n_u
    p = 1.0 - delta if quantile_tail == "upper" else delta
    c_delta = chi_square_quantile(dof, p)
    D = regressor_gram(data) / (sigma_w ** 2 * c_delta)
    return Model(A_hat, B_hat, D, float(delta), float(sigma_w), c_delta)


def in_credibility_region(model: Model, A, B, tol: float = 1e-9) -> bool:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    if A.shape != model.A_hat.shape or B.shape != model.B_hat.shape:
        raise ContractViolationError("parameter dimensions do not match the model")
    X = np.hstack([model.A_hat - A, model.B_hat - B]).T
    lam_max = float(np.linalg.eigvalsh(0.5 * ((X.T @ model.D @ X)
                                              + (X.T @ model.D @ X).T)).max())
    return lam_max <= 1.0 + tol


# ---------------------------------------------------------------------------
# CSV interchange: rollout_id, t, x_1..x_nx, u_1..u_nu


def save_dataset_csv(data: Dataset, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = (["rollout_id", "t"]
                  + [f"x_{i + 1}" for i in range(data.n_x)]
                  + [f"u_{i + 1}" for i in range(data.n_u)])
        writer.writerow(header)
        for rid, roll in enumerate(data.rollouts):
            for t in range(len(roll)):
                writer.writerow([rid, t + 1]
                                + [repr(float(v)) for v in roll.states[t]]
                                + [repr(float(v)) for v in roll.inputs[t]])


def load_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ContractViolationError("dataset CSV is empty") from None
        if header[:2] != ["rollout_id", "t"]:
            raise ContractViolationError(
                "dataset CSV must start with columns rollout_id, t")
        n_x = sum(1 for h in header if h.startswith("x_"))
        n_u = sum(1 for h in header if h.startswith("u_"))
        if n_x == 0 or len(header) != 2 + n_x + n_u:
            raise ContractViolationError(f"unrecognized dataset header: {header}")
        rows = []
        for row in reader:
            if not row:
                continue
            rows.append((int(row[0]), int(row[1]),
                         [float(v) for v in row[2:2 + n_x]],
                         [float(v) for v in row[2 + n_x:2 + n_x + n_u]]))
    rollouts = []
    for rid in sorted({r[0] for r in rows}):
        chunk = sorted((r for r in rows if r[0] == rid), key=lambda r: r[1])
        states = np.array([r[2] for r in chunk])
        inputs = np.array([r[3] for r in chunk])
        rollouts.append(Trajectory(states, inputs))
    return Dataset(rollouts)
