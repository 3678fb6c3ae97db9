"""Self-contained primal-dual interior-point solver for small dense cone
programs (nonnegative, second-order, and PSD cones, plus equalities).

Implements the homogeneous self-dual embedding with Nesterov-Todd scaling
and a Mehrotra predictor-corrector, solving

    min c'x  s.t.  A x = b,  G x + s = h,  s in K.

Dense linear algebra throughout; intended for the problem sizes in this
package (a few hundred variables, PSD blocks of a few dozen rows). The
Clarabel backend is the default; this routine is the swap-in alternative
and is cross-checked against it in the test suite.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .lowering import ConeProblem, svec_indices
from .program import INACCURATE, INFEASIBLE, OPTIMAL, UNBOUNDED, Tolerances

_STEP = 0.99
_SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# cone block helpers


@dataclass
class _Block:
    kind: str        # "nonneg" | "soc" | "psd"
    dim: int         # vector length in the residual system
    order: int       # matrix side length for psd blocks

    @property
    def degree(self) -> int:
        return {"nonneg": self.dim, "soc": 1, "psd": self.order}[self.kind]


def _blocks_of(problem: ConeProblem) -> list[_Block]:
    blocks = []
    if problem.nonneg_dim:
        blocks.append(_Block("nonneg", problem.nonneg_dim, 0))
    for d in problem.soc_dims:
        blocks.append(_Block("soc", d, 0))
    for d in problem.psd_dims:
        blocks.append(_Block("psd", d * (d + 1) // 2, d))
    return blocks


def _smat(v, d):
    r, c = svec_indices(d)
    vals = np.asarray(v, dtype=float).copy()
    vals[r != c] /= _SQRT2
    M = np.zeros((d, d))
    M[r, c] = vals
    M[c, r] = vals
    return M


def _svec(M):
    d = M.shape[0]
    r, c = svec_indices(d)
    out = M[r, c].copy()
    out[r != c] *= _SQRT2
    return out


def _identity(blocks) -> np.ndarray:
    parts = []
    for blk in blocks:
        if blk.kind == "nonneg":
            parts.append(np.ones(blk.dim))
        elif blk.kind == "soc":
            e = np.zeros(blk.dim)
            e[0] = 1.0
            parts.append(e)
        else:
            parts.append(_svec(np.eye(blk.order)))
    return np.concatenate(parts) if parts else np.zeros(0)


def _split(v, blocks):
    out = []
    i = 0
    for blk in blocks:
        out.append(v[i:i + blk.dim])
        i += blk.dim
    return out


def _max_step(v, dv, blocks) -> float:
    """Largest alpha with v + alpha dv in the cone interior (up to 1e12)."""
    alpha = np.inf
    for u, du, blk in zip(_split(v, blocks), _split(dv, blocks), blocks):
        if blk.kind == "nonneg":
            neg = du < 0
            if np.any(neg):
                alpha = min(alpha, np.min(-u[neg] / du[neg]))
        elif blk.kind == "soc":
            # largest step keeping (u0 + a d0)^2 >= ||u1 + a d1||^2, u0 + a d0 > 0
            a = du[0] ** 2 - du[1:] @ du[1:]
            b = 2 * (u[0] * du[0] - u[1:] @ du[1:])
            c = u[0] ** 2 - u[1:] @ u[1:]
            roots = []
            if abs(a) > 1e-14:
                disc = b * b - 4 * a * c
                if disc >= 0:
                    sq = np.sqrt(disc)
                    roots += [(-b - sq) / (2 * a), (-b + sq) / (2 * a)]
            elif abs(b) > 1e-14:
                roots.append(-c / b)
            if du[0] < 0:
                roots.append(-u[0] / du[0])
            pos = [r for r in roots if r > 1e-14]
            if pos:
                alpha = min(alpha, min(pos))
        else:
            S = _smat(u, blk.order)
            dS = _smat(du, blk.order)
            try:
                L = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                L = np.linalg.cholesky(S + 1e-12 * np.eye(blk.order))
            T = sla.solve_triangular(L, sla.solve_triangular(
                L, dS, lower=True).T, lower=True)
            w = np.linalg.eigvalsh(0.5 * (T + T.T)).min()
            if w < 0:
                alpha = min(alpha, -1.0 / w)
    return min(alpha, 1e12)


# ---------------------------------------------------------------------------
# Nesterov-Todd scaling


class _Scaling:
    """Per-block NT scaling; provides W z, W^-T applied to vectors/matrices,
    and the scaled point lambda = W z = W^-T s."""

    def __init__(self, s, z, blocks):
        self.blocks = blocks
        self.data = []
        for u, v, blk in zip(_split(s, blocks), _split(z, blocks), blocks):
            if blk.kind == "nonneg":
                w = np.sqrt(u / v)
                self.data.append(("nonneg", w))
            elif blk.kind == "soc":
                js = u[0] ** 2 - u[1:] @ u[1:]
                jz = v[0] ** 2 - v[1:] @ v[1:]
                sbar = u / np.sqrt(js)
                zbar = v / np.sqrt(jz)
                gamma = np.sqrt((1.0 + sbar @ zbar) / 2.0)
                wbar = (sbar + np.concatenate(([zbar[0]], -zbar[1:]))) / (2 * gamma)
                beta = (js / jz) ** 0.25
                # W = beta * Q^(1/2) of the normalized scaling point:
                # Q^(1/2) u = (a u0 + b'u1, u0 b + u1 + b (b'u1)/(1+a))
                self.data.append(("soc", (beta, wbar[0], wbar[1:])))
            else:
                d = blk.order
                S = _smat(u, d)
                Z = _smat(v, d)
                Ls = np.linalg.cholesky(S)
                Lz = np.linalg.cholesky(Z)
                U, lam, Vt = np.linalg.svd(Lz.T @ Ls)
                R = Ls @ Vt.T @ np.diag(1.0 / np.sqrt(lam))
                Rinv = np.diag(np.sqrt(lam)) @ Vt @ np.linalg.inv(Ls)
                self.data.append(("psd", (R, Rinv, lam)))

    def lam(self) -> np.ndarray:
        parts = []
        for kind, d in self.data:
            if kind == "nonneg":
                # lambda = W z = sqrt(s z)
                parts.append(None)
            elif kind == "soc":
                parts.append(None)
            else:
                parts.append(_svec(np.diag(d[2])))
        return parts

    def apply_W(self, vec) -> np.ndarray:
        """W applied blockwise (maps z-space to the scaled point space)."""
        out = []
        for (kind, d), u, blk in zip(self.data, _split(vec, self.blocks),
                                     self.blocks):
            if kind == "nonneg":
                out.append(d * u)
            elif kind == "soc":
                beta, a, bvec = d
                bu = bvec @ u[1:]
                out.append(beta * np.concatenate(
                    ([a * u[0] + bu], u[0] * bvec + u[1:] + bvec * (bu / (1 + a)))))
            else:
                R = d[0]
                out.append(_svec(R.T @ _smat(u, blk.order) @ R))
        return np.concatenate(out) if out else vec

    def apply_WinvT(self, vec) -> np.ndarray:
        """W^-T applied blockwise (maps s-space to the scaled point space)."""
        out = []
        for (kind, d), u, blk in zip(self.data, _split(vec, self.blocks),
                                     self.blocks):
            if kind == "nonneg":
                out.append(u / d)
            elif kind == "soc":
                out.append(self._soc_inv(d, u))
            else:
                _, Rinv, _ = d
                out.append(_svec(Rinv @ _smat(u, blk.order) @ Rinv.T))
        return np.concatenate(out) if out else vec

    @staticmethod
    def _soc_inv(d, u):
        # W^-1 = (1/beta) Q^(1/2) of the Jordan inverse (a, -b); symmetric
        beta, a, bvec = d
        bu = bvec @ u[1:]
        return np.concatenate(([a * u[0] - bu],
                               -u[0] * bvec + u[1:] + bvec * (bu / (1 + a)))) / beta

    def apply_Winv(self, vec) -> np.ndarray:
        """W^-1 applied blockwise (maps the scaled point space to z-space)."""
        out = []
        for (kind, d), u, blk in zip(self.data, _split(vec, self.blocks),
                                     self.blocks):
            if kind == "nonneg":
                out.append(u / d)
            elif kind == "soc":
                out.append(self._soc_inv(d, u))
            else:
                _, Rinv, _ = d
                out.append(_svec(Rinv.T @ _smat(u, blk.order) @ Rinv))
        return np.concatenate(out) if out else vec

    def apply_WT(self, vec) -> np.ndarray:
        """W' applied blockwise; W is symmetric except on PSD blocks."""
        out = []
        for (kind, d), u, blk in zip(self.data, _split(vec, self.blocks),
                                     self.blocks):
            if kind == "nonneg":
                out.append(d * u)
            elif kind == "soc":
                beta, a, bvec = d
                bu = bvec @ u[1:]
                out.append(beta * np.concatenate(
                    ([a * u[0] + bu], u[0] * bvec + u[1:] + bvec * (bu / (1 + a)))))
            else:
                R = d[0]
                out.append(_svec(R @ _smat(u, blk.order) @ R.T))
        return np.concatenate(out) if out else vec

    def scale_rows(self, G: np.ndarray) -> np.ndarray:
        """W^-T G, applied column by column (vectorized per block)."""
        out = np.empty_like(G)
        i = 0
        for (kind, d), blk in zip(self.data, self.blocks):
            rows = slice(i, i + blk.dim)
            if kind == "nonneg":
                out[rows] = G[rows] / d[:, None]
            elif kind == "soc":
                for j in range(G.shape[1]):
                    out[rows, j] = self._soc_inv(d, G[rows, j])
            else:
                _, Rinv, _ = d
                r, c = svec_indices(blk.order)
                scale = np.where(r != c, _SQRT2, 1.0)
                n = G.shape[1]
                mats = np.zeros((n, blk.order, blk.order))
                vals = G[rows].T / scale
                mats[:, r, c] = vals
                mats[:, c, r] = vals
                res = np.einsum("ij,njk,lk->nil", Rinv, mats, Rinv)
                out[rows] = (res[:, r, c] * scale).T
            i += blk.dim
        return out

    def apply_WinvT_block(self, kind, d, u, blk):
        return self._soc_inv(d, u)


# ---------------------------------------------------------------------------
# jordan algebra products


def _jordan(u, v, blocks):
    out = []
    for a, b, blk in zip(_split(u, blocks), _split(v, blocks), blocks):
        if blk.kind == "nonneg":
            out.append(a * b)
        elif blk.kind == "soc":
            out.append(np.concatenate(([a @ b], a[0] * b[1:] + b[0] * a[1:])))
        else:
            A = _smat(a, blk.order)
            B = _smat(b, blk.order)
            out.append(_svec(0.5 * (A @ B + B @ A)))
    return np.concatenate(out) if out else u


def _jordan_solve(lam, d, blocks):
    """Solve lam o x = d for x (lam in the cone interior)."""
    out = []
    for a, rhs, blk in zip(_split(lam, blocks), _split(d, blocks), blocks):
        if blk.kind == "nonneg":
            out.append(rhs / a)
        elif blk.kind == "soc":
            a0, a1 = a[0], a[1:]
            det = a0 ** 2 - a1 @ a1
            x0 = (a0 * rhs[0] - a1 @ rhs[1:]) / det
            x1 = (rhs[1:] - a1 * x0) / a0
            out.append(np.concatenate(([x0], x1)))
        else:
            L = _smat(a, blk.order)
            lam_diag = np.diag(L).copy()
            # NT scaling makes lambda diagonal; fall back to eigен if not
            if np.abs(L - np.diag(lam_diag)).max() > 1e-9 * max(lam_diag.max(), 1.0):
                w, V = np.linalg.eigh(L)
                Dm = V.T @ _smat(rhs, blk.order) @ V
                X = 2.0 * Dm / np.add.outer(w, w)
                out.append(_svec(V @ X @ V.T))
            else:
                Dm = _smat(rhs, blk.order)
                X = 2.0 * Dm / np.add.outer(lam_diag, lam_diag)
                out.append(_svec(X))
    return np.concatenate(out) if out else d


# ---------------------------------------------------------------------------
# main solver


def solve_native(problem: ConeProblem, tol: Tolerances):
    n = problem.c.shape[0]
    p = problem.zero_dim
    A = problem.A[:p]
    b = problem.b[:p]
    G = problem.A[p:]
    h = problem.b[p:]
    c = problem.c
    blocks = _blocks_of(problem)
    m = G.shape[0]
    deg = sum(blk.degree for blk in blocks)

    info = {"backend": "native", "iterations": 0}

    if m == 0 and p == 0:
        x = np.zeros(n)
        status = OPTIMAL if np.linalg.norm(c) == 0 else UNBOUNDED
        return status, (x if status == OPTIMAL else None), info

    x = np.zeros(n)
    y = np.zeros(p)
    s = _identity(blocks)
    z = _identity(blocks)
    tau, kappa = 1.0, 1.0

    norm_b = max(1.0, np.linalg.norm(np.concatenate([b, h])))
    norm_c = max(1.0, np.linalg.norm(c))

    def kkt_factor(scaling):
        Gt = scaling.scale_rows(G) if m else G
        H = Gt.T @ Gt
        K = np.zeros((n + p, n + p))
        K[:n, :n] = H + 1e-11 * np.eye(n)
        if p:
            K[:n, n:] = A.T
            K[n:, :n] = A
            K[n:, n:] = -1e-11 * np.eye(p)
        lu = sla.lu_factor(K)
        return lu, Gt

    def kkt_base_solve(lu, Gt, scaling, bx, by, bz):
        bz_t = scaling.apply_WinvT(bz) if m else bz
        rhs = np.concatenate([bx + (Gt.T @ bz_t if m else 0.0), by])
        sol = sla.lu_solve(lu, rhs)
        dx = sol[:n]
        dy = sol[n:]
        dz_t = (Gt @ dx - bz_t) if m else np.zeros(0)
        dz = scaling.apply_Winv(dz_t) if m else dz_t
        return dx, dy, dz

    def kkt_solve(lu, Gt, scaling, bx, by, bz):
        # solve: A'dy + G'dz = bx ; A dx = by ; G dx - W'W dz = bz,
        # with iterative refinement against the unreduced system
        dx, dy, dz = kkt_base_solve(lu, Gt, scaling, bx, by, bz)
        for _ in range(3):
            rx_ = bx - ((A.T @ dy if p else 0.0) + G.T @ dz)
            ry_ = by - A @ dx if p else np.zeros(0)
            rz_ = bz - (G @ dx - scaling.apply_WT(scaling.apply_W(dz))) if m \
                else np.zeros(0)
            err = max(np.abs(rx_).max(initial=0.0), np.abs(ry_).max(initial=0.0),
                      np.abs(rz_).max(initial=0.0))
            if err < 1e-11 * max(1.0, np.abs(bx).max(initial=0.0)):
                break
            cx, cy, cz = kkt_base_solve(lu, Gt, scaling, rx_, ry_, rz_)
            dx = dx + cx
            dy = dy + cy if p else dy
            dz = dz + cz
        return dx, dy, dz

    best = None
    for it in range(max(tol.max_iters, 5)):
        info["iterations"] = it
        # residuals
        rx = A.T @ y + G.T @ z + c * tau if p else G.T @ z + c * tau
        ry = A @ x - b * tau if p else np.zeros(0)
        rz = G @ x + s - h * tau
        rtau = -(c @ x) - (b @ y if p else 0.0) - h @ z - kappa
        mu = (s @ z + tau * kappa) / (deg + 1)

        pcost = c @ x / tau
        dcost = -((b @ y if p else 0.0) + h @ z) / tau
        gap = s @ z / tau ** 2
        relgap = gap / max(1.0, abs(pcost))
        pres = np.linalg.norm(np.concatenate([ry, rz])) / tau / norm_b
        dres = np.linalg.norm(rx) / tau / norm_c
        best = (x / tau, pres, dres)

        if os.environ.get("DUALSLS_IPM_TRACE"):
            print(f"it={it} pres={pres:.2e} dres={dres:.2e} gap={gap:.2e} "
                  f"tau={tau:.3e} kappa={kappa:.3e} mu={mu:.2e}")
        if pres <= tol.feas and dres <= tol.feas and (gap <= tol.gap
                                                      or relgap <= tol.gap):
            return OPTIMAL, x / tau, info
        # infeasibility certificates
        hz_by = (b @ y if p else 0.0) + h @ z
        if hz_by < -1e-12:
            cert = np.linalg.norm(A.T @ y + G.T @ z if p else G.T @ z)
            if cert / norm_c <= tol.feas * max(1.0, -hz_by) and -hz_by > 1e-10 * tau:
                if cert / max(1e-30, -hz_by) <= tol.feas * norm_c:
                    return INFEASIBLE, None, info
        if c @ x < -1e-12:
            cert = np.linalg.norm(np.concatenate([A @ x if p else np.zeros(0),
                                                  G @ x + s]))
            if cert / max(1e-30, -(c @ x)) <= tol.feas * norm_b:
                return UNBOUNDED, None, info

        scaling = _Scaling(s, z, blocks)
        lam = scaling.apply_W(z)
        lu, Gt = kkt_factor(scaling)

        # u1 = K^-1 (c, -b, -h)
        u1 = kkt_solve(lu, Gt, scaling, c, -b if p else np.zeros(0), -h)

        def direction(eta, ds_rhs, dtau_rhs):
            bx = -(1 - eta) * rx
            by = -(1 - eta) * ry
            bz = -(1 - eta) * rz - scaling.apply_WT(_jordan_solve(lam, ds_rhs,
                                                                  blocks))
            u2 = kkt_solve(lu, Gt, scaling, bx, by, bz)
            num = ((1 - eta) * rtau - dtau_rhs / tau
                   - (c @ u2[0] + (b @ u2[1] if p else 0.0) + h @ u2[2]))
            den = -(c @ u1[0] + (b @ u1[1] if p else 0.0) + h @ u1[2]) - kappa / tau
            dtau = num / den
            dx = u2[0] - dtau * u1[0]
            dy = u2[1] - dtau * u1[1] if p else np.zeros(0)
            dz = u2[2] - dtau * u1[2]
            ds = scaling.apply_WT(_jordan_solve(lam, ds_rhs, blocks)
                                  - scaling.apply_W(dz))
            dkappa = (dtau_rhs - kappa * dtau) / tau
            if os.environ.get("DUALSLS_IPM_CHECK"):
                c1 = (A.T @ dy + G.T @ dz + c * dtau + (1 - eta) * rx
                      if p else G.T @ dz + c * dtau + (1 - eta) * rx)
                c2 = A @ dx - b * dtau + (1 - eta) * ry if p else np.zeros(0)
                c3 = G @ dx + ds - h * dtau + (1 - eta) * rz
                c4 = (-(c @ dx) - (b @ dy if p else 0.0) - h @ dz - dkappa
                      + (1 - eta) * rtau)
                c5 = _jordan(lam, scaling.apply_W(dz)
                             + scaling.apply_WinvT(ds), blocks) - ds_rhs
                c6 = tau * dkappa + kappa * dtau - dtau_rhs
                print("  newton residuals:",
                      " ".join(f"{np.abs(v).max() if np.size(v) else 0.0:.1e}"
                               for v in (c1, c2, c3, c4, c5, c6)))
            return dx, dy, dz, ds, dtau, dkappa

        # predictor
        ds_aff = -_jordan(lam, lam, blocks)
        dxa, dya, dza, dsa, dtaua, dkappaa = direction(0.0, ds_aff, -tau * kappa)
        alpha = min(_max_step(s, dsa, blocks), _max_step(z, dza, blocks))
        if dtaua < 0:
            alpha = min(alpha, -tau / dtaua)
        if dkappaa < 0:
            alpha = min(alpha, -kappa / dkappaa)
        alpha = min(alpha, 1.0)
        sigma = (1 - alpha) ** 3

        # corrector
        corr = _jordan(scaling.apply_WinvT(dsa), scaling.apply_W(dza), blocks)
        e = _identity(blocks)
        ds_rhs = -_jordan(lam, lam, blocks) - corr + sigma * mu * e
        dtau_rhs = -tau * kappa - dtaua * dkappaa + sigma * mu
        dx, dy, dz, ds, dtau, dkappa = direction(sigma, ds_rhs, dtau_rhs)

        alpha = min(_max_step(s, ds, blocks), _max_step(z, dz, blocks))
        if dtau < 0:
            alpha = min(alpha, -tau / dtau)
        if dkappa < 0:
            alpha = min(alpha, -kappa / dkappa)
        alpha = min(_STEP * alpha, 1.0)
        if not np.isfinite(alpha) or alpha <= 1e-12:
            break

        x = x + alpha * dx
        y = y + alpha * dy if p else y
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa
        if tau <= 1e-14:
            break

    info["raw_status"] = "max_iterations_or_stall"
    return INACCURATE, best[0] if best is not None else None, info
