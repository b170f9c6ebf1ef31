"""Dense homogeneous self-dual interior-point method for small conic programs.

Solves::

    minimize    c'x
    subject to  A x = b
                G x + s = h,   s in K = R_+^l x S_+^{n_1} x ... x S_+^{n_p}

with PSD slacks stored in svec form (upper triangle, row-major, off-diagonal
entries scaled by sqrt(2)). Steps use Nesterov-Todd scaling and a Mehrotra
predictor-corrector. Newton systems are solved in the scaled space and the
scaling is carried from one iterate to the next in factored form, so nearly
singular blocks near the optimum keep their accuracy. Everything is dense:
this backend is meant for small instances and for cross-checking the
external solver.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
STEP_FRACTION = 0.99
MIN_STEP = 1e-8
REFINEMENT_STEPS = 2


class IPMStatus(Enum):
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"
    MAX_ITER = "max_iter"
    NUMERICAL_TROUBLE = "numerical_trouble"


@dataclass
class ConeDims:
    """Sizes of the nonnegative orthant and of each PSD block."""

    l: int = 0
    s: List[int] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.l + sum(n * (n + 1) // 2 for n in self.s)

    @property
    def degree(self) -> int:
        return self.l + sum(self.s)

    def slices(self) -> List[slice]:
        offset = self.l
        result = []
        for n in self.s:
            width = n * (n + 1) // 2
            result.append(slice(offset, offset + width))
            offset += width
        return result

    def identity(self) -> np.ndarray:
        e = np.zeros(self.size)
        e[: self.l] = 1.0
        for n, sl in zip(self.s, self.slices()):
            e[sl] = svec(np.eye(n))
        return e


@dataclass
class IPMResult:
    status: IPMStatus
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    z: np.ndarray
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    solve_time: float
    message: str = ""

    @property
    def reduced_accuracy(self) -> bool:
        return self.status is IPMStatus.OPTIMAL and self.message.startswith("reduced accuracy")


def svec(mat: np.ndarray) -> np.ndarray:
    rows, cols = np.triu_indices(mat.shape[0])
    vec = mat[rows, cols].astype(float)
    vec[rows != cols] *= SQRT2
    return vec


def smat(vec: np.ndarray, n: int) -> np.ndarray:
    rows, cols = np.triu_indices(n)
    vals = np.array(vec, dtype=float)
    vals[rows != cols] /= SQRT2
    mat = np.zeros((n, n))
    mat[rows, cols] = vals
    mat[cols, rows] = vals
    return mat


def _smat_columns(block: np.ndarray, n: int) -> np.ndarray:
    """Stack smat of every column of ``block`` into an array of shape (k, n, n)."""
    rows, cols = np.triu_indices(n)
    vals = block.T / np.where(rows == cols, 1.0, SQRT2)
    mats = np.zeros((block.shape[1], n, n))
    mats[:, rows, cols] = vals
    mats[:, cols, rows] = vals
    return mats


def _svec_stack(mats: np.ndarray) -> np.ndarray:
    """svec of every matrix in a (k, n, n) stack, as the columns of an array."""
    n = mats.shape[1]
    rows, cols = np.triu_indices(n)
    return (mats[:, rows, cols] * np.where(rows == cols, 1.0, SQRT2)).T


class _Scaling:
    """Nesterov-Todd scaling W with W z = W^{-T} s = lambda.

    Orthant: W = diag(w). PSD block: W V = R' V R, with lambda diagonal in the
    block. The iterates s and z are never stored; they are W' lambda and
    W^{-1} lambda.
    """

    def __init__(self, dims: ConeDims, w: np.ndarray, lam_lp: np.ndarray,
                 R: List[np.ndarray], Rinv: List[np.ndarray], lam_psd: List[np.ndarray]):
        self.dims = dims
        self.psd = dims.slices()
        self.w = w
        self.lam_lp = lam_lp
        self.R = R
        self.Rinv = Rinv
        self.lam_psd = lam_psd

    @classmethod
    def identity(cls, dims: ConeDims) -> "_Scaling":
        """The scaling of s = z = e."""
        eyes = [np.eye(n) for n in dims.s]
        return cls(dims, np.ones(dims.l), np.ones(dims.l), eyes, [e.copy() for e in eyes],
                   [np.ones(n) for n in dims.s])

    @property
    def lam(self) -> np.ndarray:
        out = np.zeros(self.dims.size)
        out[: self.dims.l] = self.lam_lp
        for lam, sl in zip(self.lam_psd, self.psd):
            out[sl] = svec(np.diag(lam))
        return out

    def primal_slack(self) -> np.ndarray:
        """s = W' lambda."""
        out = np.empty(self.dims.size)
        l = self.dims.l
        out[:l] = self.w * self.lam_lp
        for sl, r, lam in zip(self.psd, self.R, self.lam_psd):
            out[sl] = svec((r * lam) @ r.T)
        return out

    def dual_slack(self) -> np.ndarray:
        """z = W^{-1} lambda."""
        out = np.empty(self.dims.size)
        l = self.dims.l
        out[:l] = self.lam_lp / self.w
        for sl, rinv, lam in zip(self.psd, self.Rinv, self.lam_psd):
            out[sl] = svec((rinv.T * lam) @ rinv)
        return out

    def apply_inverse_transpose(self, v: np.ndarray) -> np.ndarray:
        """W^{-T} v."""
        out = np.empty_like(v)
        l = self.dims.l
        out[:l] = v[:l] / self.w
        for n, sl, rinv in zip(self.dims.s, self.psd, self.Rinv):
            out[sl] = svec(rinv @ smat(v[sl], n) @ rinv.T)
        return out

    def scale_rows(self, G: np.ndarray) -> np.ndarray:
        """W^{-T} G, column by column."""
        out = np.zeros_like(G)
        l = self.dims.l
        out[:l] = G[:l] / self.w[:, None]
        for n, sl, rinv in zip(self.dims.s, self.psd, self.Rinv):
            block = G[sl]
            cols = np.flatnonzero(np.any(block != 0.0, axis=0))
            if cols.size == 0:
                continue
            mats = _smat_columns(block[:, cols], n)
            scaled = np.einsum("ab,jbc,dc->jad", rinv, mats, rinv)
            out[sl, cols] = _svec_stack(scaled)
        return out

    def lam_product(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Jordan product u o v in the scaled space."""
        out = np.empty_like(u)
        l = self.dims.l
        out[:l] = u[:l] * v[:l]
        for n, sl in zip(self.dims.s, self.psd):
            U, V = smat(u[sl], n), smat(v[sl], n)
            out[sl] = svec((U @ V + V @ U) / 2)
        return out

    def lam_divide(self, d: np.ndarray) -> np.ndarray:
        """lambda \\ d, the inverse of v -> lambda o v."""
        out = np.empty_like(d)
        l = self.dims.l
        out[:l] = d[:l] / self.lam_lp
        for n, sl, lam in zip(self.dims.s, self.psd, self.lam_psd):
            D = smat(d[sl], n)
            out[sl] = svec(2.0 * D / (lam[:, None] + lam[None, :]))
        return out

    def max_step(self, v: np.ndarray) -> float:
        """Largest alpha with lambda + alpha v in the cone."""
        alpha = math.inf
        l = self.dims.l
        if l:
            neg = v[:l] < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-self.lam_lp[neg] / v[:l][neg])))
        for n, sl, lam in zip(self.dims.s, self.psd, self.lam_psd):
            root = 1.0 / np.sqrt(lam)
            worst = float(np.linalg.eigvalsh(smat(v[sl], n) * np.outer(root, root))[0])
            if worst < 0:
                alpha = min(alpha, -1.0 / worst)
        return alpha

    def step(self, ds: np.ndarray, dz: np.ndarray, alpha: float) -> "_Scaling":
        """Scaling of the next iterate, from scaled directions ds and dz.

        With s~ = lambda + alpha ds and z~ = lambda + alpha dz the new scaling
        is the NT scaling of (s~, z~) composed with the current one.
        """
        lam = self.lam
        st = lam + alpha * ds
        zt = lam + alpha * dz
        l = self.dims.l
        w = self.w * np.sqrt(st[:l] / zt[:l])
        lam_lp = np.sqrt(st[:l] * zt[:l])
        R, Rinv, lam_psd = [], [], []
        for n, sl, r, rinv in zip(self.dims.s, self.psd, self.R, self.Rinv):
            ls = la.cholesky(smat(st[sl], n), lower=True)
            lz = la.cholesky(smat(zt[sl], n), lower=True)
            _, sv, vt = la.svd(lz.T @ ls)
            root = np.sqrt(sv)
            rt = ls @ vt.T / root
            rt_inv = (root[:, None] * vt) @ la.solve_triangular(ls, np.eye(n), lower=True)
            R.append(r @ rt)
            Rinv.append(rt_inv @ rinv)
            lam_psd.append(sv)
        return _Scaling(self.dims, w, lam_lp, R, Rinv, lam_psd)


def _presolve(A: np.ndarray, b: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray, bool]:
    """Drop linearly dependent equality rows; flag inconsistent systems."""
    if A.shape[0] == 0:
        return A, b, True
    _, r, piv = la.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    cutoff = max(diag[0], 1.0) * tol if diag.size else 0.0
    rank = int(np.sum(diag > cutoff))
    keep = np.sort(piv[:rank])
    A_red, b_red = A[keep], b[keep]
    if rank < A.shape[0]:
        sol, *_ = la.lstsq(A_red, b_red)
        if np.linalg.norm(A @ sol - b) > tol * max(1.0, np.linalg.norm(b)) * 1e3:
            return A_red, b_red, False
        logger.debug("presolve dropped %d dependent equality rows", A.shape[0] - rank)
    return A_red, b_red, True


def solve_conic(c: np.ndarray, G, h: np.ndarray, dims: ConeDims, A=None,
                b: Optional[np.ndarray] = None, tol: float = 1e-8,
                max_iter: int = 200, regularization: float = 1e-11) -> IPMResult:
    """Run the homogeneous self-dual method.

    Iterates that stop making progress before reaching ``tol`` are returned as
    OPTIMAL with a "reduced accuracy" message when their residuals and gap are
    below ``sqrt(tol)``, and as NUMERICAL_TROUBLE otherwise.
    """
    started = time.perf_counter()
    c = np.asarray(c, dtype=float)
    nx = c.size
    G = G.toarray() if sp.issparse(G) else np.asarray(G, dtype=float).reshape(-1, nx)
    h = np.asarray(h, dtype=float)
    if A is None:
        A = np.zeros((0, nx))
        b = np.zeros(0)
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float).reshape(-1, nx)
    b = np.asarray(b, dtype=float)
    if G.shape[0] != dims.size or h.size != dims.size:
        raise ValueError(f"G has {G.shape[0]} rows but the cone has dimension {dims.size}")

    def result(status: IPMStatus, x, y, s, z, pcost, dcost, pres, dres, it, msg=""):
        return IPMResult(status, x, y, s, z, pcost, dcost, pres, dres, it,
                         time.perf_counter() - started, msg)

    A, b, consistent = _presolve(A, b, 1e-10)
    ny = A.shape[0]
    if not consistent:
        empty = np.zeros(nx)
        return result(IPMStatus.PRIMAL_INFEASIBLE, empty, np.zeros(ny), np.zeros(dims.size),
                      np.zeros(dims.size), math.nan, math.nan, math.inf, math.nan, 0,
                      "inconsistent equality constraints")

    e = dims.identity()
    W = _Scaling.identity(dims)
    x, y = np.zeros(nx), np.zeros(ny)
    tau, kappa = 1.0, 1.0
    nu = dims.degree
    bnorm = max(1.0, np.linalg.norm(b), np.linalg.norm(h))
    cnorm = max(1.0, np.linalg.norm(c))
    reduced_tol = math.sqrt(tol)

    pres = dres = math.inf
    pcost = dcost = math.nan
    s = z = e
    stalled = ""
    for it in range(max_iter + 1):
        s, z = W.primal_slack(), W.dual_slack()
        lam = W.lam
        r1 = A.T @ y + G.T @ z + c * tau
        r2 = -A @ x + b * tau
        r3 = -G @ x + h * tau - s
        r4 = -c @ x - b @ y - h @ z - kappa
        mu = (lam @ lam + tau * kappa) / (nu + 1)

        pcost = c @ x / tau
        dcost = -(b @ y + h @ z) / tau
        pres = max(np.linalg.norm(r2), np.linalg.norm(r3)) / tau / bnorm
        dres = np.linalg.norm(r1) / tau / cnorm
        rel_gap = abs(pcost - dcost) / (1.0 + abs(pcost))
        logger.debug("ipm it=%d pcost=%.9g dcost=%.9g pres=%.2e dres=%.2e mu=%.2e tau=%.2e",
                     it, pcost, dcost, pres, dres, mu, tau)
        if pres <= tol and dres <= tol and rel_gap <= tol:
            return result(IPMStatus.OPTIMAL, x / tau, y / tau, s / tau, z / tau,
                          pcost, dcost, pres, dres, it)
        by_hz = b @ y + h @ z
        if by_hz < 0 and np.linalg.norm(A.T @ y + G.T @ z) / -by_hz <= tol:
            return result(IPMStatus.PRIMAL_INFEASIBLE, x, y / -by_hz, s, z / -by_hz,
                          math.nan, math.nan, pres, dres, it, "dual ray certifies infeasibility")
        cx = c @ x
        if cx < 0 and max(np.linalg.norm(A @ x), np.linalg.norm(G @ x + s)) / -cx <= tol:
            return result(IPMStatus.DUAL_INFEASIBLE, x / -cx, y, s / -cx, z,
                          math.nan, math.nan, pres, dres, it, "primal ray certifies unboundedness")
        if it == max_iter:
            break
        if stalled:
            break

        try:
            Gs = W.scale_rows(G)
            hs = W.apply_inverse_transpose(h)
            r3s = W.apply_inverse_transpose(r3)
            full = np.block([[Gs.T @ Gs, A.T], [A, np.zeros((ny, ny))]])
            shift = regularization * max(1.0, float(np.max(np.abs(np.diag(full)), initial=0.0)))
            factor = la.lu_factor(full + np.diag(np.concatenate([np.full(nx, shift),
                                                                  np.full(ny, -shift)])))
        except (la.LinAlgError, ValueError) as err:
            return result(IPMStatus.NUMERICAL_TROUBLE, x / tau, y / tau, s / tau, z / tau,
                          pcost, dcost, pres, dres, it, f"scaling failed: {err}")

        def kkt_solve(rx, ry, rz):
            # [0 A' Gs'; A 0 0; Gs 0 -I] [dx; dy; dz] = [rx; ry; rz], dz scaled
            rhs = np.concatenate([rx + Gs.T @ rz, ry])
            sol = la.lu_solve(factor, rhs)
            for _ in range(REFINEMENT_STEPS):
                sol = sol + la.lu_solve(factor, rhs - full @ sol)
            dx, dy = sol[:nx], sol[nx:]
            return dx, dy, Gs @ dx - rz

        dx1, dy1, dz1 = kkt_solve(-c, b, hs)
        denom = kappa / tau - (c @ dx1 + b @ dy1 + hs @ dz1)

        def direction(sigma: float, ds_rhs: np.ndarray, dk_rhs: float):
            eta = 1.0 - sigma
            shifted = W.lam_divide(ds_rhs)
            dx2, dy2, dz2 = kkt_solve(-eta * r1, eta * r2, eta * r3s - shifted)
            dtau = (-eta * r4 + c @ dx2 + b @ dy2 + hs @ dz2 + dk_rhs / tau) / denom
            dx = dx2 + dtau * dx1
            dy = dy2 + dtau * dy1
            dz = dz2 + dtau * dz1
            ds = shifted - dz
            dkappa = (dk_rhs - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def step_length(dz, ds, dtau, dkappa) -> float:
            alpha = min(W.max_step(ds), W.max_step(dz))
            if dtau < 0:
                alpha = min(alpha, -tau / dtau)
            if dkappa < 0:
                alpha = min(alpha, -kappa / dkappa)
            return alpha

        try:
            lam_sq = W.lam_product(lam, lam)
            # predictor
            aff = direction(0.0, -lam_sq, -tau * kappa)
            alpha_aff = min(1.0, step_length(aff[2], aff[3], aff[4], aff[5]))
            sigma = (1.0 - alpha_aff) ** 3
            # corrector
            ds_rhs = -lam_sq - W.lam_product(aff[3], aff[2]) + sigma * mu * e
            dk_rhs = -tau * kappa - aff[4] * aff[5] + sigma * mu
            dx, dy, dz, ds, dtau, dkappa = direction(sigma, ds_rhs, dk_rhs)
            alpha = min(1.0, STEP_FRACTION * step_length(dz, ds, dtau, dkappa))
            if alpha < MIN_STEP:
                # recentre before giving up
                dx, dy, dz, ds, dtau, dkappa = direction(1.0, -lam_sq + mu * e,
                                                         -tau * kappa + mu)
                alpha = min(1.0, STEP_FRACTION * step_length(dz, ds, dtau, dkappa))
            if alpha < MIN_STEP:
                stalled = f"step length {alpha:.1e}"
                continue
            W = W.step(ds, dz, alpha)
        except la.LinAlgError as err:
            return result(IPMStatus.NUMERICAL_TROUBLE, x / tau, y / tau, s / tau, z / tau,
                          pcost, dcost, pres, dres, it, f"step failed: {err}")

        x = x + alpha * dx
        y = y + alpha * dy
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        if not (np.all(np.isfinite(x)) and math.isfinite(tau)) or tau <= 0:
            return result(IPMStatus.NUMERICAL_TROUBLE, x / tau, y / tau, s / tau, z / tau,
                          pcost, dcost, pres, dres, it, "iterates left the cone")

    if stalled:
        if max(pres, dres, abs(pcost - dcost) / (1.0 + abs(pcost))) <= reduced_tol:
            logger.warning("ipm stopped early (%s); returning a reduced accuracy solution",
                           stalled)
            return result(IPMStatus.OPTIMAL, x / tau, y / tau, s / tau, z / tau,
                          pcost, dcost, pres, dres, it, f"reduced accuracy: {stalled}")
        return result(IPMStatus.NUMERICAL_TROUBLE, x / tau, y / tau, s / tau, z / tau,
                      pcost, dcost, pres, dres, it, f"stalled: {stalled}")
    return result(IPMStatus.MAX_ITER, x / tau, y / tau, s / tau, z / tau,
                  pcost, dcost, pres, dres, max_iter)
