"""Lowering of a ConicProgram to standard conic form.

Standard form:  min c'x + obj_const  s.t.  s = b - A x,  s in K,
with K = {0}^zero_dim x R+^nonneg_dim x SOC(soc_dims) x PSD(psd_dims),
PSD blocks in scaled-svec coordinates (upper triangle, column-major,
off-diagonals scaled by sqrt(2)).

The quadratic objective is lowered to an epigraph second-order cone:
t >= ||v||^2 via the standard rotated-cone embedding.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .program import ConicProgram

_SQRT2 = np.sqrt(2.0)


def svec_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """(rows, cols) of the upper triangle in column-major order."""
    rows, cols = [], []
    for j in range(d):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def svec(M: np.ndarray) -> np.ndarray:
    d = M.shape[0]
    r, c = svec_indices(d)
    out = M[r, c].astype(float).copy()
    out[r != c] *= _SQRT2
    return out


def smat(v: np.ndarray, d: int) -> np.ndarray:
    r, c = svec_indices(d)
    vals = np.asarray(v, dtype=float).copy()
    vals[r != c] /= _SQRT2
    M = np.zeros((d, d))
    M[r, c] = vals
    M[c, r] = vals
    return M


@dataclass
class ConeProblem:
    c: np.ndarray
    A: np.ndarray  # dense (m, n); backends sparsify as needed
    b: np.ndarray
    zero_dim: int
    nonneg_dim: int
    soc_dims: list[int]
    psd_dims: list[int]
    obj_const: float
    var_slices: dict  # name -> slice into x
    variables: dict   # name -> Variable
    epigraph_slice: slice | None = None
    info: dict = field(default_factory=dict)


def lower(program: ConicProgram) -> ConeProblem:
    var_slices = {}
    offset = 0
    for v in program.variables:
        var_slices[v.name] = slice(offset, offset + v.param_dim)
        offset += v.param_dim

    quad_rows = sum(t.size for t in program.quad_terms)
    epi_slice = None
    n = offset
    if quad_rows:
        epi_slice = slice(n, n + 1)
        n += 1

    def expr_rows(e):
        """(J, k) with row-major vec(e) = k + J x."""
        J = np.zeros((e.size, n))
        for name, cf in e.coeffs.items():
            J[:, var_slices[name]] = cf
        return J, e.const.ravel().copy()

    # objective: c'x
    c = np.zeros(n)
    for name, cf in program.linear_term.coeffs.items():
        c[var_slices[name]] += cf[0]
    obj_const = program.linear_term.const.item()
    if epi_slice is not None:
        c[epi_slice] = 1.0

    A_blocks, b_blocks = [], []

    # zero cone: equalities, expr == 0  ->  s = 0 - (-J) x ... use s = -k - J?? keep
    # convention s = b - A x with s = expr value: A = -J, b = k is wrong sign; the
    # zero cone wants expr(x) = 0, i.e. s := expr(x) in {0}: s = k + Jx = b - Ax
    # with b = k, A = -J.
    zero_dim = 0
    for e in program.equalities:
        J, k = expr_rows(e)
        A_blocks.append(-J)
        b_blocks.append(k)
        zero_dim += e.size

    nonneg_dim = 0  # no bare inequalities in this IR (1x1 PSD covers them)

    # epigraph SOC: [ (1+t)/2 ; (1-t)/2 ; v ] in SOC  <=>  t >= ||v||^2
    soc_dims = []
    if quad_rows:
        rows = 2 + quad_rows
        J = np.zeros((rows, n))
        k = np.zeros(rows)
        ti = epi_slice.start
        k[0] = 0.5
        J[0, ti] = 0.5
        k[1] = 0.5
        J[1, ti] = -0.5
        r0 = 2
        for term in program.quad_terms:
            Jt, kt = expr_rows(term)
            J[r0:r0 + term.size] = Jt
            k[r0:r0 + term.size] = kt
            r0 += term.size
        A_blocks.append(-J)
        b_blocks.append(k)
        soc_dims.append(rows)

    # psd cones, in scaled svec coordinates
    psd_dims = []
    for e in program.psd_constraints:
        d = e.shape[0]
        r, cidx = svec_indices(d)
        flat = r * d + cidx  # row-major index of the (i, j) upper-triangle entry
        scale = np.where(r != cidx, _SQRT2, 1.0)
        J, k = expr_rows(e)
        # symmetrize numerically: average entry (i,j) with (j,i)
        flat_t = cidx * d + r
        Js = 0.5 * (J[flat] + J[flat_t]) * scale[:, None]
        ks = 0.5 * (k[flat] + k[flat_t]) * scale
        A_blocks.append(-Js)
        b_blocks.append(ks)
        psd_dims.append(d)

    if A_blocks:
        A = np.vstack(A_blocks)
        b = np.concatenate(b_blocks)
    else:
        A = np.zeros((0, n))
        b = np.zeros(0)

    return ConeProblem(
        c=c, A=A, b=b, zero_dim=zero_dim, nonneg_dim=nonneg_dim,
        soc_dims=soc_dims, psd_dims=psd_dims, obj_const=obj_const,
        var_slices=var_slices,
        variables={v.name: v for v in program.variables},
        epigraph_slice=epi_slice,
    )


def extract_values(problem: ConeProblem, x: np.ndarray) -> dict:
    values = {}
    for name, sl in problem.var_slices.items():
        var = problem.variables[name]
        values[name] = var.value_from_params(x[sl])
    return values
