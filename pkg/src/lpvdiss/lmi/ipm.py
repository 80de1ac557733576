"""Primal-dual interior-point method for LMI problems.

Solves ``min c^T x`` subject to ``S_k = C_k + A_k(x) >= 0`` for every block
``k``, together with its dual ``max -sum <C_k, Z_k>`` subject to
``sum A_k^*(Z_k) = c``, ``Z_k >= 0``. The method is infeasible-start with
Nesterov-Todd scaling and a Mehrotra predictor-corrector step.

Blocks of equal size and equal term structure are stacked so that every
per-block operation runs as a batched numpy call. Matrix variables that
enter as ``L X R + (L X R)^T`` keep that factored form; their Schur
complement entries are assembled from products of the factors.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .problem import SdpProblem, SolveResult, SolverOptions


def _T(A: np.ndarray) -> np.ndarray:
    return np.swapaxes(A, -1, -2)


def _symm(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + _T(A))


class _Group:
    """Stack of blocks sharing size, dense-term count and matrix-term layout."""

    def __init__(self, n: int, blocks: list):
        self.n = n
        self.K = len(blocks)
        self.C = np.stack([b[0] for b in blocks])
        nd = len(blocks[0][1])
        self.nd = nd
        if nd:
            self.ids = np.array([b[1] for b in blocks], dtype=int)
            self.Ad = np.stack([b[2] for b in blocks])
            self.shared = bool(np.all(self.ids == self.ids[0]))
        else:
            self.ids = np.zeros((self.K, 0), dtype=int)
            self.Ad = np.zeros((self.K, 0, n, n))
            self.shared = True
        self.mterms = []
        for t, (off, p, q, _, _) in enumerate(blocks[0][3]):
            Lm = np.stack([b[3][t][3] for b in blocks])
            Rm = np.stack([b[3][t][4] for b in blocks])
            self.mterms.append((off, p, q, Lm, Rm))

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros((self.K, self.n, self.n))
        if self.nd:
            out += np.einsum("kd,kdij->kij", x[self.ids], self.Ad)
        for off, p, q, Lm, Rm in self.mterms:
            X = x[off:off + p * q].reshape(p, q)
            T = (Lm @ X) @ Rm
            out += T + _T(T)
        return out

    def adjoint(self, W: np.ndarray, out: np.ndarray) -> None:
        if self.nd:
            vals = np.einsum("kdij,kij->kd", self.Ad, W)
            if self.shared:
                out[self.ids[0]] += vals.sum(0)
            else:
                np.add.at(out, self.ids, vals)
        for off, p, q, Lm, Rm in self.mterms:
            G = (_T(Lm) @ W) @ _T(Rm)
            out[off:off + p * q] += 2.0 * G.sum(0).ravel()

    def schur(self, E: np.ndarray, M: np.ndarray) -> None:
        K = self.K
        if self.nd:
            EAE = E[:, None] @ self.Ad @ E[:, None]
            vals = np.einsum("kdij,keij->kde", EAE, self.Ad)
            if self.shared:
                ids = self.ids[0]
                M[np.ix_(ids, ids)] += vals.sum(0)
            else:
                np.add.at(M, (self.ids[:, :, None], self.ids[:, None, :]), vals)
            for off, p, q, Lm, Rm in self.mterms:
                cross = 2.0 * (_T(Lm)[:, None] @ EAE @ _T(Rm)[:, None])  # (K, nd, p, q)
                cols = np.arange(off, off + p * q)
                cross = cross.reshape(K, self.nd, p * q)
                if self.shared:
                    blk = cross.sum(0)
                    M[np.ix_(self.ids[0], cols)] += blk
                    M[np.ix_(cols, self.ids[0])] += blk.T
                else:
                    for d in range(self.nd):
                        np.add.at(M, (self.ids[:, d][:, None], cols[None, :]), cross[:, d])
                        np.add.at(M, (cols[None, :], self.ids[:, d][:, None]), cross[:, d])
        mt = self.mterms
        for a in range(len(mt)):
            off1, p1, q1, L1, R1 = mt[a]
            for b in range(a, len(mt)):
                off2, p2, q2, L2, R2 = mt[b]
                P = _T(L1) @ E @ L2          # (K, p1, p2)
                Q = R1 @ E @ _T(R2)          # (K, q1, q2)
                U = _T(L1) @ E @ _T(R2)      # (K, p1, q2)
                V = R1 @ E @ L2              # (K, q1, p2)
                t1 = (P.reshape(K, -1).T @ Q.reshape(K, -1)).reshape(p1, p2, q1, q2).transpose(0, 2, 1, 3)
                t2 = (U.reshape(K, -1).T @ V.reshape(K, -1)).reshape(p1, q2, q1, p2).transpose(0, 2, 3, 1)
                blk = 2.0 * (t1 + t2).reshape(p1 * q1, p2 * q2)
                r1 = slice(off1, off1 + p1 * q1)
                r2 = slice(off2, off2 + p2 * q2)
                M[r1, r2] += blk
                if a != b:
                    M[r2, r1] += blk.T


def _compile(problem: SdpProblem):
    raw = []
    for expr in problem.constraints:
        dense = defaultdict(float)
        for vid, A in expr.terms:
            dense[vid] = dense[vid] + A
        ids = sorted(dense)
        n = expr.size
        coeffs = np.array([dense[i] for i in ids]).reshape(len(ids), n, n)
        mterms = [(v.offset, v.shape[0], v.shape[1], Lm, Rm) for v, Lm, Rm in expr.matrix_terms]
        norms = [np.linalg.norm(expr.constant)] + [np.linalg.norm(A) for A in coeffs]
        norms += [2 * np.linalg.norm(Lm) * np.linalg.norm(Rm) for *_, Lm, Rm in mterms]
        scale = max(norms)
        scale = 1.0 / scale if scale > 0 else 1.0
        mterms = [(o, p, q, scale * Lm, Rm) for o, p, q, Lm, Rm in mterms]
        raw.append((scale * expr.constant, ids, scale * coeffs, mterms))
    for vid, lo in enumerate(problem.lower):
        if lo is not None:
            s = 1.0 / max(1.0, abs(lo))
            raw.append((np.array([[-lo * s]]), [vid], np.array([[[s]]]), []))
    buckets = defaultdict(list)
    for blk in raw:
        key = (blk[0].shape[0], len(blk[1]), tuple((o, p, q) for o, p, q, _, _ in blk[3]))
        buckets[key].append(blk)
    return [_Group(key[0], blks) for key, blks in buckets.items()]


def _max_step(D: np.ndarray, dH: np.ndarray) -> np.ndarray:
    """Largest ``alpha`` with ``diag(D) + alpha dH >= 0`` per block (inf if unbounded)."""
    s = 1.0 / np.sqrt(D)
    lam = np.linalg.eigvalsh(s[:, :, None] * dH * s[:, None, :])[:, 0]
    out = np.full(lam.shape, np.inf)
    neg = lam < 0
    out[neg] = -1.0 / lam[neg]
    return out


def _all_pd(blocks) -> bool:
    try:
        for b in blocks:
            np.linalg.cholesky(b)
    except np.linalg.LinAlgError:
        return False
    return True


def _factor(M: np.ndarray):
    d = np.diag(M).copy()
    dmax = d.max() if d.size else 1.0
    dead = d <= 1e-14 * max(dmax, 1e-300)
    M = M.copy()
    M[dead, :] = 0.0
    M[:, dead] = 0.0
    M[dead, dead] = 1.0
    reg = 0.0
    for _ in range(8):
        try:
            cf = sla.cho_factor(M + reg * np.eye(len(M)), check_finite=False)
            return cf, dead, M
        except np.linalg.LinAlgError:
            reg = 1e-13 * dmax if reg == 0 else 100 * reg
    return None, dead, M


def _solve(fac, rhs: np.ndarray) -> np.ndarray:
    cf, dead, M = fac
    r = rhs.copy()
    r[dead] = 0.0
    x = sla.cho_solve(cf, r, check_finite=False)
    # one step of iterative refinement
    x += sla.cho_solve(cf, r - M @ x, check_finite=False)
    x[dead] = 0.0
    return x


def solve_ipm(problem: SdpProblem, opts: Optional[SolverOptions] = None) -> SolveResult:
    opts = opts or SolverOptions()
    m = problem.n_variables
    c_raw = problem.cost_vector()
    groups = _compile(problem)

    used = np.zeros(m, dtype=bool)
    for g in groups:
        used[g.ids.ravel()] = True
        for off, p, q, *_ in g.mterms:
            used[off:off + p * q] = True
    if np.any(~used & (c_raw != 0)):
        return SolveResult("unbounded", message="objective involves an unconstrained variable")

    c_scale = max(1.0, float(np.abs(c_raw).max()) if m else 1.0)
    c = c_raw / c_scale
    nu = sum(g.K * g.n for g in groups)
    normC = np.sqrt(sum(np.sum(g.C ** 2) for g in groups))
    normc = np.linalg.norm(c)
    eta = max(10.0, np.sqrt(max(g.n for g in groups)))
    x = np.zeros(m)
    S = [eta * np.broadcast_to(np.eye(g.n), (g.K, g.n, g.n)).copy() for g in groups]
    Z = [eta * np.broadcast_to(np.eye(g.n), (g.K, g.n, g.n)).copy() for g in groups]

    status, msg = "failed", "iteration limit reached"
    hist = {}
    it = 0
    best_merit, best_it = np.inf, 0
    for it in range(1, opts.max_iter + 1):
        Ax = [g.apply(x) for g in groups]
        Rp = [g.C + a - s for g, a, s in zip(groups, Ax, S)]
        AtZ = np.zeros(m)
        for g, z in zip(groups, Z):
            g.adjoint(z, AtZ)
        rd = c - AtZ
        pobj = float(c @ x)
        dobj = -float(sum(np.sum(g.C * z) for g, z in zip(groups, Z)))
        gap = float(sum(np.sum(s * z) for s, z in zip(S, Z)))
        mu = gap / nu
        pinf = np.sqrt(sum(np.sum(r ** 2) for r in Rp)) / (1.0 + normC)
        dinf = np.linalg.norm(rd) / (1.0 + normc)
        relgap = gap / (1.0 + abs(pobj) + abs(dobj))
        hist = dict(pinf=pinf, dinf=dinf, relgap=relgap, pobj=pobj, dobj=dobj)
        if opts.verbose:
            print(f"{it:3d} pobj {pobj: .6e} dobj {dobj: .6e} pinf {pinf:.1e} dinf {dinf:.1e} gap {relgap:.1e}")
        if pinf < opts.feas_tol and dinf < opts.feas_tol and relgap < opts.gap_tol:
            status, msg = ("optimal" if normc > 0 else "feasible"), "converged"
            break
        merit = max(pinf, dinf, relgap)
        if merit < 0.9 * best_merit:
            best_merit, best_it = merit, it
        elif it - best_it >= 8:
            status, msg = "inaccurate", "progress stalled"
            break
        # infeasibility certificates
        if dobj > 0 and pinf > opts.feas_tol:
            if np.linalg.norm(AtZ) / dobj < opts.infeas_tol:
                status, msg = "infeasible", "dual ray certifies primal infeasibility"
                break
        if pobj < 0 and dinf > opts.feas_tol:
            worst = min(float(np.linalg.eigvalsh(a)[:, 0].min()) for a in Ax)
            if worst / (-pobj) > -opts.infeas_tol and np.all(np.isfinite(x)):
                status, msg = "unbounded", "primal ray certifies dual infeasibility"
                break

        # Nesterov-Todd scaling per block
        try:
            scal = []
            for s, z in zip(S, Z):
                Ls = np.linalg.cholesky(s)
                Lz = np.linalg.cholesky(z)
                U, d, Vt = np.linalg.svd(_T(Lz) @ Ls)
                Lsi = np.linalg.inv(Ls)
                Gi = np.sqrt(d)[:, :, None] * (Vt @ Lsi)      # G^{-1}
                G = (Ls @ _T(Vt)) / np.sqrt(d)[:, None, :]    # G
                scal.append((G, Gi, d, _T(Gi) @ Gi))
        except np.linalg.LinAlgError:
            status, msg = "inaccurate", "lost positive definiteness"
            break

        Msch = np.zeros((m, m))
        for g, (_, _, _, E) in zip(groups, scal):
            g.schur(E, Msch)
        fac = _factor(Msch)
        if fac[0] is None:
            status, msg = "inaccurate", "Schur complement factorization failed"
            break
        EReE = [E @ r @ E for (_, _, _, E), r in zip(scal, Rp)]
        base = np.zeros(m)
        for g, w in zip(groups, EReE):
            g.adjoint(w, base)
        base = -base - rd

        def direction(Rc):
            rhs = base.copy()
            for g, w in zip(groups, Rc):
                g.adjoint(w, rhs)
            dx = _solve(fac, rhs)
            dS = [g.apply(dx) + r for g, r in zip(groups, Rp)]
            dZ = [rc - E @ ds @ E for rc, ds, (_, _, _, E) in zip(Rc, dS, scal)]
            return dx, dS, dZ

        def steps(dS, dZ):
            ap, ad = np.inf, np.inf
            scaled = []
            for ds, dz, (G, Gi, d, _) in zip(dS, dZ, scal):
                dSh = _symm(Gi @ ds @ _T(Gi))
                dZh = _symm(_T(G) @ dz @ G)
                ap = min(ap, _max_step(d, dSh).min())
                ad = min(ad, _max_step(d, dZh).min())
                scaled.append((dSh, dZh))
            return ap, ad, scaled

        # predictor
        dx, dS, dZ = direction([-z for z in Z])
        ap, ad, scaled = steps(dS, dZ)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = sum(np.sum((s + ap * ds) * (z + ad * dz)) for s, z, ds, dz in zip(S, Z, dS, dZ)) / nu
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3
        # corrector
        Rc = []
        for (G, Gi, d, _), (dSh, dZh) in zip(scal, scaled):
            n = d.shape[1]
            rhs = -dSh @ dZh
            rhs = 0.5 * (rhs + _T(rhs))
            rhs[:, np.arange(n), np.arange(n)] += sigma * mu - d ** 2
            Rh = 2.0 * rhs / (d[:, :, None] + d[:, None, :])
            Rc.append(_T(Gi) @ Rh @ Gi)
        dx, dS, dZ = direction(Rc)
        ap, ad, _ = steps(dS, dZ)
        ap = min(1.0, opts.step * ap)
        ad = min(1.0, opts.step * ad)
        if max(ap, ad) < 1e-10:
            status, msg = "inaccurate", "step length collapsed"
            break
        # rounding can push a nearly singular block out of the cone; shrink the step until
        # both iterates factor
        for _ in range(30):
            S_new = [_symm(s + ap * ds) for s, ds in zip(S, dS)]
            Z_new = [_symm(z + ad * dz) for z, dz in zip(Z, dZ)]
            if _all_pd(S_new) and _all_pd(Z_new):
                break
            ap *= 0.8
            ad *= 0.8
        else:
            status, msg = "inaccurate", "lost positive definiteness"
            break
        x = x + ap * dx
        S, Z = S_new, Z_new
    else:
        it = opts.max_iter

    # A stalled run keeps its iterate when it is primal feasible: callers can
    # still verify it, only its optimality is in doubt.
    loose = 1e3 * max(opts.feas_tol, opts.gap_tol)
    if status in ("failed", "inaccurate"):
        status = "inaccurate" if hist and hist["pinf"] < loose and np.all(np.isfinite(x)) else "failed"
    res = SolveResult(
        status,
        x=None if status in ("failed", "infeasible") else x,
        objective=float(c_raw @ x),
        primal_residual=float(hist.get("pinf", np.nan)),
        dual_residual=float(hist.get("dinf", np.nan)),
        gap=float(hist.get("relgap", np.nan)),
        iterations=it,
        message=msg,
    )
    res.info["dual_objective"] = hist.get("dobj", np.nan) * c_scale if hist else np.nan
    res.info["blocks"] = [(g.n, g.K) for g in groups]
    return res
