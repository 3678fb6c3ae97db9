"""Affine matrix expressions over named matrix/scalar variables.

Expressions store a constant part plus, per variable, a dense Jacobian
mapping the variable's free parameters to the row-major vectorization of
the expression. Symmetric variables are parameterized by their upper
triangle so symmetry is structural, not a constraint.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Variable:
    """A named matrix (or scalar) decision variable."""

    name: str
    shape: tuple[int, int]
    symmetric: bool = False

    def __post_init__(self):
        r, c = self.shape
        if r < 1 or c < 1:
            raise ValueError(f"variable {self.name}: invalid shape {self.shape}")
        if self.symmetric and r != c:
            raise ValueError(f"variable {self.name}: symmetric requires square shape")

    @property
    def param_dim(self) -> int:
        r, c = self.shape
        return r * (r + 1) // 2 if self.symmetric else r * c

    def expansion(self) -> np.ndarray:
        """Map from free parameters to the row-major vectorization."""
        r, c = self.shape
        if not self.symmetric:
            return np.eye(r * c)
        E = np.zeros((r * r, self.param_dim))
        k = 0
        for i in range(r):
            for j in range(i, r):
                E[i * r + j, k] = 1.0
                E[j * r + i, k] = 1.0
                k += 1
        return E

    def params_from_value(self, value: np.ndarray) -> np.ndarray:
        value = np.asarray(value, dtype=float).reshape(self.shape)
        if not self.symmetric:
            return value.ravel()
        iu = np.triu_indices(self.shape[0])
        return value[iu]

    def value_from_params(self, params: np.ndarray) -> np.ndarray:
        r, c = self.shape
        return (self.expansion() @ params).reshape(r, c) if self.symmetric \
            else np.asarray(params).reshape(r, c)


class MatExpr:
    """Affine expression with a matrix value: const + sum_v J_v params_v."""

    __slots__ = ("shape", "const", "coeffs", "vars")

    # defer numpy binary operators to this class (ndarray @ MatExpr, ...)
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, shape, const, coeffs, variables):
        self.shape = tuple(shape)
        self.const = np.asarray(const, dtype=float).reshape(self.shape)
        self.coeffs = coeffs  # name -> (r*c, p) ndarray
        self.vars = variables  # name -> Variable

    # ---- constructors -------------------------------------------------
    @staticmethod
    def from_variable(v: Variable) -> "MatExpr":
        return MatExpr(v.shape, np.zeros(v.shape), {v.name: v.expansion()}, {v.name: v})

    @staticmethod
    def constant(arr) -> "MatExpr":
        arr = np.atleast_2d(np.asarray(arr, dtype=float))
        return MatExpr(arr.shape, arr, {}, {})

    @staticmethod
    def zeros(shape) -> "MatExpr":
        return MatExpr.constant(np.zeros(shape))

    # ---- helpers -------------------------------------------------------
    def _merged_vars(self, other) -> dict:
        merged = dict(self.vars)
        for name, var in other.vars.items():
            if name in merged and merged[name] != var:
                raise ValueError(f"conflicting declarations for variable '{name}'")
            merged[name] = var
        return merged

    @property
    def is_constant(self) -> bool:
        return not self.coeffs

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    # ---- arithmetic ----------------------------------------------------
    def __add__(self, other) -> "MatExpr":
        other = other if isinstance(other, MatExpr) else MatExpr.constant(other)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch: {self.shape} + {other.shape}")
        coeffs = {n: c.copy() for n, c in self.coeffs.items()}
        for n, c in other.coeffs.items():
            coeffs[n] = coeffs[n] + c if n in coeffs else c.copy()
        return MatExpr(self.shape, self.const + other.const, coeffs,
                       self._merged_vars(other))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        other = other if isinstance(other, MatExpr) else MatExpr.constant(other)
        return self.__add__(-other)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __neg__(self) -> "MatExpr":
        return MatExpr(self.shape, -self.const,
                       {n: -c for n, c in self.coeffs.items()}, dict(self.vars))

    def __mul__(self, scalar) -> "MatExpr":
        s = float(scalar)
        return MatExpr(self.shape, s * self.const,
                       {n: s * c for n, c in self.coeffs.items()}, dict(self.vars))

    __rmul__ = __mul__

    def lmul(self, L) -> "MatExpr":
        """Constant left multiplication L @ self."""
        L = np.atleast_2d(np.asarray(L, dtype=float))
        r, c = self.shape
        if L.shape[1] != r:
            raise ValueError(f"shape mismatch: {L.shape} @ {self.shape}")
        T = np.kron(L, np.eye(c))
        coeffs = {n: T @ cf for n, cf in self.coeffs.items()}
        return MatExpr((L.shape[0], c), L @ self.const, coeffs, dict(self.vars))

    def rmul(self, R) -> "MatExpr":
        """Constant right multiplication self @ R."""
        R = np.atleast_2d(np.asarray(R, dtype=float))
        r, c = self.shape
        if R.shape[0] != c:
            raise ValueError(f"shape mismatch: {self.shape} @ {R.shape}")
        T = np.kron(np.eye(r), R.T)
        coeffs = {n: T @ cf for n, cf in self.coeffs.items()}
        return MatExpr((r, R.shape[1]), self.const @ R, coeffs, dict(self.vars))

    def __matmul__(self, other):
        if isinstance(other, MatExpr):
            if other.is_constant:
                return self.rmul(other.const)
            if self.is_constant:
                return other.lmul(self.const)
            raise ValueError("product of two non-constant expressions is not affine")
        return self.rmul(other)

    def __rmatmul__(self, other):
        return self.lmul(other)

    def times_matrix(self, M) -> "MatExpr":
        """Scalar expression times a constant matrix."""
        if self.shape != (1, 1):
            raise ValueError("times_matrix requires a scalar expression")
        M = np.atleast_2d(np.asarray(M, dtype=float))
        vecM = M.ravel()[:, None]
        coeffs = {n: vecM @ c for n, c in self.coeffs.items()}
        return MatExpr(M.shape, self.const.item() * M, coeffs, dict(self.vars))

    @property
    def T(self) -> "MatExpr":
        r, c = self.shape
        perm = (np.arange(r * c).reshape(r, c).T).ravel()
        coeffs = {n: cf[perm] for n, cf in self.coeffs.items()}
        return MatExpr((c, r), self.const.T, coeffs, dict(self.vars))

    def sym(self) -> "MatExpr":
        """(E + E^T)/2; guards PSD checks against round-off asymmetry."""
        if self.shape[0] != self.shape[1]:
            raise ValueError("sym requires a square expression")
        return (self + self.T) * 0.5

    def trace(self) -> "MatExpr":
        r, c = self.shape
        if r != c:
            raise ValueError("trace requires a square expression")
        idx = np.arange(r) * r + np.arange(r)
        coeffs = {n: cf[idx].sum(axis=0, keepdims=True) for n, cf in self.coeffs.items()}
        return MatExpr((1, 1), np.array([[np.trace(self.const)]]), coeffs, dict(self.vars))

    def ravel(self) -> "MatExpr":
        """Reshape to a column vector (row-major order)."""
        rc = self.size
        return MatExpr((rc, 1), self.const.reshape(rc, 1),
                       {n: cf.copy() for n, cf in self.coeffs.items()}, dict(self.vars))

    # ---- evaluation ----------------------------------------------------
    def value(self, assignment: dict) -> np.ndarray:
        out = self.const.copy().ravel()
        for name, cf in self.coeffs.items():
            var = self.vars[name]
            if name not in assignment:
                raise KeyError(f"no value for variable '{name}'")
            out += cf @ var.params_from_value(assignment[name])
        return out.reshape(self.shape)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        if self.shape[0] != self.shape[1]:
            return False
        d = self - self.T
        if np.abs(d.const).max(initial=0.0) > tol:
            return False
        return all(np.abs(c).max(initial=0.0) <= tol for c in d.coeffs.values())

    def __repr__(self):
        names = ", ".join(sorted(self.coeffs)) or "const"
        return f"MatExpr{self.shape}[{names}]"


def block(rows) -> MatExpr:
    """Assemble a block matrix from a grid of expressions / arrays."""
    grid = [[e if isinstance(e, MatExpr) else MatExpr.constant(e) for e in row]
            for row in rows]
    heights = [row[0].shape[0] for row in grid]
    widths = [e.shape[1] for e in grid[0]]
    for i, row in enumerate(grid):
        if len(row) != len(widths):
            raise ValueError("ragged block structure")
        for j, e in enumerate(row):
            if e.shape != (heights[i], widths[j]):
                raise ValueError(f"block ({i},{j}) has shape {e.shape}, "
                                 f"expected {(heights[i], widths[j])}")
    R, C = sum(heights), sum(widths)
    const = np.zeros((R, C))
    variables: dict = {}
    coeffs: dict = {}
    ro = 0
    for i, row in enumerate(grid):
        co = 0
        for j, e in enumerate(row):
            br, bc = e.shape
            const[ro:ro + br, co:co + bc] = e.const
            if e.coeffs:
                gidx = ((ro + np.arange(br))[:, None] * C
                        + (co + np.arange(bc))[None, :]).ravel()
                for name, cf in e.coeffs.items():
                    var = e.vars[name]
                    if name in variables and variables[name] != var:
                        raise ValueError(f"conflicting declarations for variable '{name}'")
                    variables[name] = var
                    if name not in coeffs:
                        coeffs[name] = np.zeros((R * C, var.param_dim))
                    coeffs[name][gidx, :] += cf
            co += bc
        ro += heights[i]
    return MatExpr((R, C), const, coeffs, variables)


def hstack(exprs) -> MatExpr:
    return block([list(exprs)])


def vstack(exprs) -> MatExpr:
    return block([[e] for e in exprs])
