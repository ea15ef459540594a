"""Primal-dual interior-point solver for standard-form conic programs.

Homogeneous self-dual embedding with Nesterov-Todd scaling and a
Mehrotra predictor-corrector step.  The Schur complement is formed densely
(its assembly over PSD blocks is the compiled kernel) and free variables
enter through an augmented system ``[[M, A_f], [A_f^T, 0]]``.

Sizes handled comfortably: PSD blocks up to ~60 rows, about a thousand
equalities.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from . import kernels
from .sos_program import FREE, NONNEG, PSD, ConicProgram

log = logging.getLogger(__name__)


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ILL_CONDITIONED = "ill_conditioned"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class SolveReport:
    status: SolveStatus
    primal: np.ndarray
    dual: np.ndarray
    dual_slack: np.ndarray
    objective: float
    dual_objective: float
    kkt_residuals: tuple
    iterations: int
    history: list = field(default_factory=list)
    infeasibility: str = ""  # "primal" or "dual" when status is INFEASIBLE

    @property
    def ok(self) -> bool:
        return self.status == SolveStatus.OPTIMAL


class _PsdData:
    """Per-block sparse view of the equality matrix used by the kernels."""

    def __init__(self, blk, A_csc):
        n = blk.size
        self.blk = blk
        self.n = n
        self.iu = np.triu_indices(n)
        sub = A_csc[:, blk.offset : blk.offset + blk.length].tocoo()
        rows, cols, vals = sub.row, sub.col, sub.data
        i_loc = self.iu[0][cols]
        j_loc = self.iu[1][cols]
        diag = i_loc == j_loc
        # both triangles; off-diagonal coefficient is split between them
        r_all = np.concatenate([rows, rows[~diag]])
        i_all = np.concatenate([i_loc, j_loc[~diag]])
        j_all = np.concatenate([j_loc, i_loc[~diag]])
        v_all = np.concatenate([np.where(diag, vals, 0.5 * vals), 0.5 * vals[~diag]])
        order = np.lexsort((j_all, i_all, r_all))
        r_all, i_all, j_all, v_all = r_all[order], i_all[order], j_all[order], v_all[order]
        eq, counts = np.unique(r_all, return_counts=True)
        self.eq = eq.astype(np.int64)
        self.ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.ii = i_all.astype(np.int32)
        self.jj = j_all.astype(np.int32)
        self.vv = v_all.astype(float)

    def mat(self, v):
        """Symmetric matrix from upper-triangular values."""
        out = np.zeros((self.n, self.n))
        out[self.iu] = v
        return out + np.triu(out, 1).T

    def vec(self, m):
        return m[self.iu]


class _Cone:
    def __init__(self, program: ConicProgram):
        self.program = program
        A = program.A.tocsr()
        self.A = A
        self.AT = A.T.tocsr()
        self.psd = [_PsdData(blk, A.tocsc()) for blk in program.blocks if blk.kind == PSD]
        self.lp = np.concatenate(
            [np.arange(b.offset, b.offset + b.size) for b in program.blocks if b.kind == NONNEG] or [np.zeros(0, int)]
        ).astype(int)
        self.free = np.concatenate(
            [np.arange(b.offset, b.offset + b.size) for b in program.blocks if b.kind == FREE] or [np.zeros(0, int)]
        ).astype(int)
        n = program.n_vars
        self.weight = np.ones(n)
        for pd in self.psd:
            off = pd.blk.offset
            self.weight[off : off + pd.blk.length] = np.where(pd.iu[0] == pd.iu[1], 1.0, 2.0)
        self.coef_to_val = 1.0 / self.weight
        self.cone_mask = np.ones(n, dtype=bool)
        self.cone_mask[self.free] = False
        self.degree = len(self.lp) + sum(pd.n for pd in self.psd)
        self.A_free = A[:, self.free].toarray() if len(self.free) else np.zeros((A.shape[0], 0))

    def identity(self):
        e = np.zeros(self.program.n_vars)
        e[self.lp] = 1.0
        for pd in self.psd:
            off = pd.blk.offset
            e[off : off + pd.blk.length] = (pd.iu[0] == pd.iu[1]).astype(float)
        return e

    def inner(self, x, z):
        return float(np.dot(self.weight[self.cone_mask] * x[self.cone_mask], z[self.cone_mask]))


class _Scaling:
    """NT scaling point for the current iterate."""

    def __init__(self, cone: _Cone, x, z):
        self.cone = cone
        self.R = []
        self.Rinv = []
        self.W = []
        self.lam = []
        for pd in cone.psd:
            off, ln = pd.blk.offset, pd.blk.length
            X = pd.mat(x[off : off + ln])
            Z = pd.mat(z[off : off + ln])
            L1 = la.cholesky(X, lower=True)
            L2 = la.cholesky(Z, lower=True)
            U, s, Vt = la.svd(L2.T @ L1)
            R = L1 @ Vt.T / np.sqrt(s)[None, :]
            Rinv = (U.T / np.sqrt(s)[:, None]) @ L2.T
            self.R.append(R)
            self.Rinv.append(Rinv)
            self.W.append(R @ R.T)
            self.lam.append(s)
        xl = x[cone.lp]
        zl = z[cone.lp]
        if np.any(xl <= 0) or np.any(zl <= 0):
            raise la.LinAlgError("LP iterate left the cone")
        self.w_lp = np.sqrt(xl / zl)
        self.lam_lp = np.sqrt(xl * zl)

    def apply_H(self, v):
        """``H(v)``: ``W V W`` on PSD blocks, ``w^2 v`` on LP entries (value convention)."""
        out = np.zeros_like(v)
        for pd, W in zip(self.cone.psd, self.W):
            off, ln = pd.blk.offset, pd.blk.length
            out[off : off + ln] = pd.vec(W @ pd.mat(v[off : off + ln]) @ W)
        out[self.cone.lp] = self.w_lp**2 * v[self.cone.lp]
        return out

    def scaled_x(self, dx):
        out = []
        for pd, Ri in zip(self.cone.psd, self.Rinv):
            off, ln = pd.blk.offset, pd.blk.length
            out.append(Ri @ pd.mat(dx[off : off + ln]) @ Ri.T)
        out.append(dx[self.cone.lp] / self.w_lp)
        return out

    def scaled_z(self, dz):
        out = []
        for pd, R in zip(self.cone.psd, self.R):
            off, ln = pd.blk.offset, pd.blk.length
            out.append(R.T @ pd.mat(dz[off : off + ln]) @ R)
        out.append(self.w_lp * dz[self.cone.lp])
        return out

    def lambdas(self):
        return self.lam + [self.lam_lp]

    def unscale_rc(self, ds):
        """``R (lambda <> ds) R^T`` per block, ``w ds / lambda`` on LP entries."""
        out = np.zeros(self.cone.program.n_vars)
        for pd, R, lam, d in zip(self.cone.psd, self.R, self.lam, ds[:-1]):
            off, ln = pd.blk.offset, pd.blk.length
            U = 2.0 * d / (lam[:, None] + lam[None, :])
            out[off : off + ln] = pd.vec(R @ U @ R.T)
        out[self.cone.lp] = self.w_lp * ds[-1] / self.lam_lp
        return out


def _jordan(a, b):
    return 0.5 * (a @ b + b @ a)


def _max_step(lams, dirs):
    """Largest ``t`` with ``lambda + t d`` in the cone, per block (inf if unbounded)."""
    alpha = np.inf
    for lam, d in zip(lams[:-1], dirs[:-1]):
        if lam.size == 0:
            continue
        s = 1.0 / np.sqrt(lam)
        ev = la.eigvalsh(s[:, None] * d * s[None, :])
        if ev[0] < 0:
            alpha = min(alpha, -1.0 / ev[0])
    lam, d = lams[-1], dirs[-1]
    if lam.size:
        ratio = d / lam
        neg = ratio < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-1.0 / ratio[neg])))
    return alpha


def _independent_rows(program: ConicProgram, rtol: float = 1e-10):
    """Rows of ``A`` kept after presolve, or ``None`` if ``Ax = b`` is inconsistent."""
    A = program.A.toarray()
    if A.shape[0] == 0:
        return np.arange(0)
    R, piv = la.qr(A.T, mode="r", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > rtol * max(d[0], 1e-300))) if d.size else 0
    if rank == A.shape[0]:
        return np.arange(A.shape[0])
    keep = np.sort(piv[:rank])
    sol = la.lstsq(A[keep], program.b[keep])[0]
    if np.linalg.norm(A @ sol - program.b) > 1e3 * rtol * max(1.0, np.linalg.norm(program.b)):
        return None
    return keep


def _dependent_free_columns(program: ConicProgram, rtol: float = 1e-10):
    """Free columns of ``A`` that are linear combinations of the others.

    Returns ``(cols, consistent)``.  When ``consistent`` the objective does not
    move along the null space of the free columns, so those variables can be
    pinned at zero without changing the optimum; otherwise the dual has no
    feasible point.
    """
    free = np.concatenate(
        [np.arange(b.offset, b.offset + b.size) for b in program.blocks if b.kind == FREE] or [np.zeros(0, int)]
    )
    if free.size == 0:
        return free, True
    A_f = program.A[:, free].toarray()
    c_f = program.c[free]
    if A_f.shape[0] == 0:
        return free, not np.any(c_f)
    R, piv = la.qr(A_f, mode="r", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > rtol * max(d[0], 1e-300))) if d.size else 0
    y = la.lstsq(A_f.T, c_f)[0]
    consistent = np.linalg.norm(A_f.T @ y - c_f) <= 1e3 * rtol * max(1.0, np.linalg.norm(c_f))
    return np.sort(free[piv[rank:]]), bool(consistent)


def solve(program: ConicProgram, tol: float = 1e-8, max_iter: int = 200) -> SolveReport:
    """Solve ``program``; see :class:`SolveReport` for the outcome.

    Linearly dependent equalities are dropped first; inconsistent ones make
    the program infeasible without iterating.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    dep, consistent = _dependent_free_columns(program)
    if not consistent:
        n = program.n_vars
        return SolveReport(SolveStatus.INFEASIBLE, np.zeros(n), np.zeros(program.n_eq), np.zeros(n), np.nan, np.nan, (np.inf, np.inf, np.inf), 0, [], "dual")
    if dep.size:
        pin = sp.csr_matrix((np.ones(dep.size), (np.arange(dep.size), dep)), shape=(dep.size, program.n_vars))
        pinned = ConicProgram(program.c, sp.vstack([program.A, pin]).tocsr(), np.concatenate([program.b, np.zeros(dep.size)]), program.blocks, [], program.metadata)
        rep = solve(pinned, tol, max_iter)
        rep.dual = rep.dual[: program.n_eq]
        return rep
    keep = _independent_rows(program)
    if keep is None:
        n = program.n_vars
        return SolveReport(SolveStatus.INFEASIBLE, np.zeros(n), np.zeros(program.n_eq), np.zeros(n), np.nan, np.nan, (np.inf, np.inf, np.inf), 0, [], "primal")
    if len(keep) < program.n_eq:
        reduced = ConicProgram(program.c, program.A[keep], program.b[keep], program.blocks, [], program.metadata)
        rep = solve(reduced, tol, max_iter)
        y = np.zeros(program.n_eq)
        y[keep] = rep.dual
        rep.dual = y
        return rep
    cone = _Cone(program)
    A, AT = cone.A, cone.AT
    b = program.b
    c = program.c.astype(float)
    m = program.n_eq
    n_free = len(cone.free)
    c_cone = c.copy()
    c_cone[cone.free] = 0.0
    c_free = c[cone.free]
    A_f = cone.A_free

    if m == 0 and n_free == 0:
        x = np.zeros(program.n_vars)
        if np.any(c[cone.lp] < 0):
            return SolveReport(SolveStatus.INFEASIBLE, x, np.zeros(0), c, 0.0, 0.0, (0.0, 0.0, 0.0), 0, [], "dual")
        return SolveReport(SolveStatus.OPTIMAL, x, np.zeros(0), c * cone.coef_to_val, 0.0, 0.0, (0.0, 0.0, 0.0), 0)

    x = cone.identity()
    z = cone.identity()
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0
    nu_deg = cone.degree
    bnorm = max(1.0, np.linalg.norm(b))
    cnorm = max(1.0, np.linalg.norm(c))
    history = []
    best = None
    status = SolveStatus.ITERATION_LIMIT
    infeasibility = ""
    small_steps = 0

    def residuals(x, y, z, tau, kappa):
        rp = A @ x - b * tau
        u = AT @ y - c * tau
        rd = z + u * cone.coef_to_val
        rd[cone.free] = 0.0
        rf = u[cone.free]
        rg = c @ x - b @ y + kappa
        return rp, rd, rf, rg

    it = 0
    for it in range(max_iter + 1):
        rp, rd, rf, rg = residuals(x, y, z, tau, kappa)
        pobj = c @ x / tau
        dobj = b @ y / tau
        gap = cone.inner(x, z)
        pres = np.linalg.norm(rp) / tau / bnorm
        dres = np.sqrt(np.linalg.norm(rd * np.sqrt(cone.weight)) ** 2 + np.linalg.norm(rf) ** 2) / tau / cnorm
        relgap = abs(pobj - dobj) / max(1.0, abs(pobj), abs(dobj))
        history.append((pobj, dobj, pres, dres, relgap))
        log.debug("it %3d pobj %+.8e dobj %+.8e pres %.1e dres %.1e gap %.1e", it, pobj, dobj, pres, dres, relgap)
        score = max(pres, dres, relgap)
        if best is None or score < best[0]:
            best = (score, x / tau, y / tau, z / tau, (pres, dres, relgap), it)
        if pres <= tol and dres <= tol and (relgap <= tol or gap / tau**2 <= tol * max(1.0, abs(pobj))):
            status = SolveStatus.OPTIMAL
            break
        # infeasibility certificates (homogeneous part dominates as tau/kappa -> 0)
        by = b @ y
        cx = c @ x
        if by > 0:
            u = AT @ y
            cert = z + u * cone.coef_to_val
            cert[cone.free] = 0.0
            res = np.sqrt(np.linalg.norm(cert * np.sqrt(cone.weight)) ** 2 + np.linalg.norm(u[cone.free]) ** 2)
            if res / by <= tol * cnorm and tau <= 1e-6 * kappa:
                status, infeasibility = SolveStatus.INFEASIBLE, "primal"
                break
        if cx < 0:
            res = np.linalg.norm(A @ x)
            if res / (-cx) <= tol * bnorm and tau <= 1e-6 * kappa:
                status, infeasibility = SolveStatus.INFEASIBLE, "dual"
                break
        if it == max_iter:
            break

        mu = (gap + tau * kappa) / (nu_deg + 1)
        try:
            scal = _Scaling(cone, x, z)
            Mmat = np.zeros((m, m))
            for pd, W in zip(cone.psd, scal.W):
                kernels.schur_psd_block(np.ascontiguousarray(W), pd.ptr, pd.ii, pd.jj, pd.vv, pd.eq, Mmat)
            if len(cone.lp):
                A_lp = A[:, cone.lp]
                Mmat += (A_lp.multiply(scal.w_lp**2) @ A_lp.T).toarray()
            K = np.zeros((m + n_free, m + n_free))
            K[:m, :m] = Mmat
            K[:m, m:] = A_f
            K[m:, :m] = A_f.T
            with warnings.catch_warnings():
                warnings.simplefilter("error", la.LinAlgWarning)
                lu = la.lu_factor(K, check_finite=True)
        except (la.LinAlgError, la.LinAlgWarning, ValueError) as exc:
            log.debug("factorization failed: %s", exc)
            status = SolveStatus.ILL_CONDITIONED
            break

        def kkt(r1, r2):
            sol = la.lu_solve(lu, np.concatenate([r1, r2]))
            return sol[:m], sol[m:]

        h = A @ scal.apply_H(c_cone * cone.coef_to_val)
        chc = float(c_cone @ scal.apply_H(c_cone * cone.coef_to_val))
        u1, v1 = kkt(h + b, c_free)
        Hrd = scal.apply_H(rd)
        AHrd = A @ Hrd
        cHrd = float(c_cone @ Hrd)
        den = (h - b) @ u1 + c_free @ v1 - chc - kappa / tau
        lams = scal.lambdas()

        def direction(eta, ds, dtau_target):
            Rc = scal.unscale_rc(ds)
            u0, v0 = kkt(-eta * rp - A @ Rc - eta * AHrd, -eta * rf)
            num = -eta * rg - c_cone @ Rc - eta * cHrd - (h - b) @ u0 - c_free @ v0 - dtau_target / tau
            dtau = num / den
            dy = u0 + dtau * u1
            df = v0 + dtau * v1
            dz = -eta * rd - (AT @ dy - c * dtau) * cone.coef_to_val
            dz[cone.free] = 0.0
            dx = Rc - scal.apply_H(dz)
            dx[cone.free] = df
            dkappa = (dtau_target - kappa * dtau) / tau
            return dx, dy, dz, dtau, dkappa

        def step_length(dx, dz, dtau, dkappa):
            a = min(_max_step(lams, scal.scaled_x(dx)), _max_step(lams, scal.scaled_z(dz)))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        ds_aff = [-np.diag(lam**2) for lam in lams[:-1]] + [-lams[-1] ** 2]
        dxa, dya, dza, dtaua, dkappaa = direction(1.0, ds_aff, -tau * kappa)
        alpha_aff = min(1.0, step_length(dxa, dza, dtaua, dkappaa))
        sigma = (1.0 - alpha_aff) ** 3

        # corrector
        sx = scal.scaled_x(dxa)
        sz = scal.scaled_z(dza)
        ds = []
        for lam, ax, az in zip(lams[:-1], sx[:-1], sz[:-1]):
            ds.append(sigma * mu * np.eye(lam.size) - np.diag(lam**2) - _jordan(ax, az))
        ds.append(sigma * mu - lams[-1] ** 2 - sx[-1] * sz[-1])
        dtau_t = sigma * mu - tau * kappa - dtaua * dkappaa
        dx, dy, dz, dtau, dkappa = direction(1.0 - sigma, ds, dtau_t)
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dy)) and np.isfinite(dtau)):
            status = SolveStatus.ILL_CONDITIONED
            break
        alpha = min(1.0, 0.99 * step_length(dx, dz, dtau, dkappa))
        if not np.isfinite(alpha) or alpha <= 0:
            status = SolveStatus.ILL_CONDITIONED
            break
        small_steps = small_steps + 1 if alpha < 1e-8 else 0
        if small_steps >= 3:
            status = SolveStatus.ILL_CONDITIONED
            break
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    if status == SolveStatus.OPTIMAL:
        xs, ys, zs = x / tau, y / tau, z / tau
        resid = (history[-1][2], history[-1][3], history[-1][4])
    elif status == SolveStatus.INFEASIBLE:
        xs, ys, zs = x, y, z
        resid = (history[-1][2], history[-1][3], history[-1][4])
    else:
        _, xs, ys, zs, resid, _ = best
    zs = zs.copy()
    zs[cone.free] = 0.0
    return SolveReport(
        status=status,
        primal=xs,
        dual=ys,
        dual_slack=zs,
        objective=float(c @ xs),
        dual_objective=float(b @ ys),
        kkt_residuals=tuple(float(r) for r in resid),
        iterations=it,
        history=history,
        infeasibility=infeasibility,
    )
