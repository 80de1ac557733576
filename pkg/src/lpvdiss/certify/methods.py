"""Verification procedures: vertex LMIs, S-procedure, sampled multipliers, model-based check.

Every SDP method runs in one of two modes. With a fixed supply rate the
program maximizes a slack ``t`` (capped at 1) added as ``-t I`` to each main
inequality and certifies when ``t >= -psd_tol``. Without a supply rate the L2
supply ``(s I, 0, -I)`` is used and ``s = gamma^2 >= 0`` is minimized.

Programs are posed on the reduced coordinates of ``CertificationProblem`` and
rescaled so that data matrices have unit norm; reported multipliers are mapped
back to the original coordinates.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..lmi import AffineMatrixExpr, SdpProblem, SolveResult, SolverOptions
from ..lmi.linalg import min_eig, nullspace_basis, range_basis
from ..model import LpvIoModel, SupplyRate, io_operator, realize_ss_siso
from ..scheduling import (
    DEFAULT_VERTEX_CAP,
    BoxPolytope,
    QuadraticBall,
    SchedulingError,
    SchedulingSet,
    enumerate_vertices,
    is_polytopic,
    sample_trajectories,
)
from .matrices import CertificationError, CertificationProblem, build_M_P, build_Pi_L
from .outcome import VerificationOutcome


@dataclass
class VerifyOptions:
    """Shared settings of the verification methods.

    Attributes:
        backend: SDP backend name passed to ``SdpProblem.solve``.
        solver: overrides of ``SolverOptions`` fields.
        psd_tol: slack below which an inequality counts as violated, relative
            to the normalized data.
        vertex_cap: largest vertex set that is enumerated.
        gamma_max: upper end of the bisection bracket for the fixed-trajectory gain.
        bisection_tol: absolute tolerance on gamma for bisection.
    """

    backend: str = "ipm"
    solver: dict = field(default_factory=dict)
    psd_tol: float = 1e-6
    vertex_cap: int = DEFAULT_VERTEX_CAP
    gamma_max: float = 1e4
    bisection_tol: float = 1e-4


def _opts(options: Optional[VerifyOptions]) -> VerifyOptions:
    return options if options is not None else VerifyOptions()


class _Scaled:
    """Reduced, normalized pieces of a certification problem."""

    def __init__(self, problem: CertificationProblem):
        self.problem = problem
        T = problem.basis
        self.T = T
        self.r = T.shape[1]
        Fh = problem.affine @ T
        self.f_scale = max(float(np.linalg.norm(Fh[0], 2)), 1e-300)
        self.Fh = Fh / self.f_scale
        Pi, A, B = problem.reduced_pi()
        if problem.gain_mode:
            self.pi_scale = max(float(np.linalg.norm(A, 2)), float(np.linalg.norm(B, 2)), 1e-300)
            self.A = A / self.pi_scale
            self.B = B / self.pi_scale
            self.Pi = None
        else:
            self.pi_scale = max(float(np.linalg.norm(Pi, 2)), 1e-300)
            self.Pi = Pi / self.pi_scale
            self.A = self.B = None

    def F_at(self, pbar) -> np.ndarray:
        p = np.asarray(pbar, dtype=float).ravel()
        return self.Fh[0] + np.tensordot(p, self.Fh[1:], axes=(0, 0))


class _Program:
    """An ``SdpProblem`` with the supply part (gain variable or slack) already set up."""

    def __init__(self, name: str, gain_mode: bool, options: VerifyOptions):
        self.sdp = SdpProblem(name, SolverOptions(**options.solver) if options.solver else None)
        self.gain_mode = gain_mode
        if gain_mode:
            self.s = self.sdp.variable("s", lower=0.0)
            self.sdp.minimize(self.s)
            self.t = None
        else:
            self.t = self.sdp.variable("t")
            self.sdp.maximize(self.t)
            self.s = None
        self.main: list[int] = []

    def supply_block(self, n: int, Pi: Optional[np.ndarray], A: Optional[np.ndarray],
                     B: Optional[np.ndarray], lead: int = 0) -> AffineMatrixExpr:
        """Supply part embedded in the trailing ``n - lead`` rows and columns."""
        def pad(M):
            out = np.zeros((n, n))
            out[lead:, lead:] = M
            return out

        if self.gain_mode:
            return AffineMatrixExpr(-pad(B), [(self.s, pad(A))])
        expr = AffineMatrixExpr(pad(Pi))
        expr.add_term(self.t, -np.eye(n))
        return expr

    def add_main(self, expr: AffineMatrixExpr, label: str) -> None:
        self.main.append(self.sdp.add_lmi(expr, ">=", label))

    def finish(self) -> None:
        if not self.gain_mode:
            self.sdp.add_lmi(AffineMatrixExpr(np.ones((1, 1)), [(self.t, -np.ones((1, 1)))]), ">=", "t<=1")


def _verdict(method: str, prog: _Program, res: SolveResult, options: VerifyOptions,
             payload_fn, info: dict) -> VerificationOutcome:
    """Turn a solver result into an outcome after an independent eigenvalue check."""
    sdp = prog.sdp
    mode = "gain" if prog.gain_mode else "feasibility"
    stats = res.stats()
    common = dict(stats=stats, n_lmis=sdp.n_lmis, n_variables=sdp.n_variables, info=info)
    # An inaccurate solve still yields a usable certificate when its point is
    # primal feasible; only optimality of gamma is then in doubt.
    usable = res.ok or (res.status == "inaccurate" and res.x is not None
                        and res.primal_residual <= options.psd_tol)
    if not usable:
        verdict = "not-certified" if res.status == "infeasible" else "inconclusive"
        return VerificationOutcome(method, mode, verdict, **common)
    if not res.ok:
        info["optimality_gap"] = res.gap
    x = res.x.copy()
    if prog.gain_mode:
        # The optimum sits on the boundary; check the constraints with the
        # tolerance added to s, which is what the reported gamma claims.
        x[prog.s] = max(x[prog.s], 0.0) + options.psd_tol
        eigs = sdp.min_eigs(x)
        info["min_eig"] = float(eigs.min())
        info["bound_violation"] = sdp.bound_violation(res.x)
        if eigs.min() < -options.psd_tol or info["bound_violation"] > options.psd_tol:
            return VerificationOutcome(method, mode, "inconclusive", payload=payload_fn(res), **common)
        gamma = math.sqrt(max(float(res.x[prog.s]), 0.0))
        return VerificationOutcome(method, mode, "certified", gamma=gamma, payload=payload_fn(res), **common)
    t = float(res.x[prog.t])
    info["slack"] = t
    eigs = sdp.min_eigs(x)
    info["min_eig"] = float(eigs.min())
    if eigs.min() < -options.psd_tol:
        return VerificationOutcome(method, mode, "inconclusive", payload=payload_fn(res), **common)
    if t >= -options.psd_tol:
        verdict = "certified"
    else:
        # A negative slack proves nothing unless the solver reached optimality.
        # Infeasible instances often stall with the multiplier drifting off to
        # infinity while gap and dual residual are already tiny; those count.
        near = (res.status == "inaccurate" and res.dual_residual <= options.psd_tol
                and res.gap <= options.psd_tol and t < -options.psd_tol - res.gap * (1 + abs(t)))
        verdict = "not-certified" if res.ok or near else "inconclusive"
        if near:
            info["near_optimal"] = True
    return VerificationOutcome(method, mode, verdict, payload=payload_fn(res), **common)


def _degenerate(problem: CertificationProblem, method: str, tol: float) -> Optional[VerificationOutcome]:
    """Short-circuit for a supply rate that is nonnegative on every (u, y)."""
    if problem.gain_mode:
        return None
    e = min_eig(problem.supply.matrix)
    if e >= -tol:
        return VerificationOutcome(method, "feasibility", "certified",
                                   info={"shortcut": "supply rate is positive semidefinite",
                                         "supply_min_eig": e})
    return None


def _polytope_vertices(scheduling: Optional[SchedulingSet], L: int, cap: int,
                       use_rate: bool) -> np.ndarray:
    if scheduling is None:
        raise CertificationError("a scheduling set is required")
    if not is_polytopic(scheduling):
        raise CertificationError("vertex methods need a polytopic scheduling set")
    s = scheduling if use_rate else scheduling.without_rate()
    return enumerate_vertices(s, L, cap=cap)


# -- fixed scheduling trajectory --------------------------------------------

def fixed_p_matrices(problem: CertificationProblem, pbar) -> tuple[np.ndarray, ...]:
    """Null-space basis ``Z`` of ``F(pbar)`` (reduced) and the projected supply pieces.

    Returns ``(Z, Pi_Z)`` with a fixed supply and ``(Z, A_Z, B_Z)`` in gain mode,
    where the projected gain supply is ``s A_Z - B_Z``.
    """
    T = problem.basis
    F = problem.F(pbar) @ T
    Z = nullspace_basis(F) if F.size else np.eye(T.shape[1])
    Pi, A, B = problem.reduced_pi()
    if problem.gain_mode:
        return Z, Z.T @ A @ Z, Z.T @ B @ Z
    return Z, Z.T @ Pi @ Z


def verify_fixed_p(problem: CertificationProblem, pbar, s: Optional[float] = None,
                   tol: float = 1e-9) -> dict:
    """Exact check of the dissipation inequality along one scheduling trajectory.

    Projects the supply onto the kernel of ``F(pbar)`` and tests it for
    positive semidefiniteness. ``tol`` is relative to the norm of the projected
    supply. In gain mode ``s = gamma^2`` must be given.
    """
    parts = fixed_p_matrices(problem, pbar)
    Z = parts[0]
    if problem.gain_mode:
        if s is None:
            raise CertificationError("gain mode needs s = gamma^2")
        M = s * parts[1] - parts[2]
    else:
        M = parts[1]
    if Z.shape[1] == 0:
        return {"holds": True, "min_eig": math.inf, "kernel_dim": 0}
    e = min_eig(M)
    scale = max(1.0, float(np.linalg.norm(M, 2)))
    return {"holds": bool(e >= -tol * scale), "min_eig": e, "kernel_dim": int(Z.shape[1])}


def fixed_p_gain(problem: CertificationProblem, pbar, options: Optional[VerifyOptions] = None) -> float:
    """Smallest gamma along ``pbar`` by bisection on the kernel eigenvalue test.

    Returns ``inf`` when no gamma up to ``options.gamma_max`` passes.
    """
    if not problem.gain_mode:
        raise CertificationError("fixed_p_gain needs a problem without a supply rate")
    options = _opts(options)
    Z, A, B = fixed_p_matrices(problem, pbar)
    if Z.shape[1] == 0:
        return 0.0

    def holds(g: float) -> bool:
        M = g * g * A - B
        return min_eig(M) >= -1e-12 * max(1.0, float(np.linalg.norm(M, 2)))

    if holds(0.0):
        return 0.0
    hi = 1.0
    while not holds(hi):
        hi *= 2.0
        if hi > options.gamma_max:
            return math.inf
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while hi - lo > options.bisection_tol:
        mid = 0.5 * (lo + hi)
        if holds(mid):
            hi = mid
        else:
            lo = mid
    return hi


def fixed_p_gain_exact(problem: CertificationProblem, pbar) -> float:
    """Closed form of ``fixed_p_gain``: square root of the largest generalized eigenvalue.

    Restricts to the range of the projected input energy; any output energy
    outside that range makes the gain unbounded.
    """
    Z, A, B = fixed_p_matrices(problem, pbar)
    if Z.shape[1] == 0:
        return 0.0
    U = range_basis(A, 1e-10)
    if U.shape[1] < A.shape[0]:
        W = nullspace_basis(U.T)
        if W.shape[1] and np.linalg.norm(W.T @ B @ W, 2) > 1e-10 * max(1.0, np.linalg.norm(B, 2)):
            return math.inf
    Ar, Br = U.T @ A @ U, U.T @ B @ U
    Li = np.linalg.inv(np.linalg.cholesky(Ar))
    lam = np.linalg.eigvalsh(Li @ Br @ Li.T)
    return math.sqrt(max(float(lam[-1]), 0.0))


def verify_fixed_p_outcome(problem: CertificationProblem, trajectories,
                           options: Optional[VerifyOptions] = None) -> VerificationOutcome:
    """Fixed-trajectory test over a list of trajectories, reported as an outcome.

    In gain mode gamma is the largest per-trajectory bisection value.
    """
    options = _opts(options)
    trajs = np.asarray(trajectories, dtype=float)
    if trajs.ndim == 2:
        trajs = trajs[None]
    t0 = time.perf_counter()
    info = {"trajectories": len(trajs), "certificate": "necessary"}
    if problem.gain_mode:
        gains = [fixed_p_gain(problem, p, options) for p in trajs]
        worst = int(np.argmax(gains))
        gamma = float(gains[worst])
        info.update(worst_index=worst)
        stats = {"wall_time": time.perf_counter() - t0, "status": "optimal", "backend": "eig"}
        if not math.isfinite(gamma):
            return VerificationOutcome("FIXED_P", "gain", "not-certified", stats=stats, info=info)
        return VerificationOutcome("FIXED_P", "gain", "certified", gamma=gamma,
                                   payload={"gammas": gains}, stats=stats, info=info)
    checks = [verify_fixed_p(problem, p) for p in trajs]
    ok = all(c["holds"] for c in checks)
    info["min_eig"] = min(c["min_eig"] for c in checks)
    stats = {"wall_time": time.perf_counter() - t0, "status": "optimal", "backend": "eig"}
    return VerificationOutcome("FIXED_P", "feasibility", "certified" if ok else "not-certified",
                               stats=stats, info=info)


# -- convex hull argument ---------------------------------------------------

def _cha_program(problem: CertificationProblem, vertices: np.ndarray, multiplier: str,
                 options: VerifyOptions, name: str):
    sc = _Scaled(problem)
    prog = _Program(name, problem.gain_mode, options)
    r, m = sc.r, sc.Fh.shape[1]
    flat = vertices.reshape(len(vertices), -1)
    if multiplier == "constant":
        X = prog.sdp.matrix_variable("X", (r, m))
        for v, pbar in enumerate(flat):
            expr = prog.supply_block(r, sc.Pi, sc.A, sc.B)
            expr.add_matrix_term(X, -np.eye(r), sc.F_at(pbar))
            prog.add_main(expr, f"vertex {v}")
        prog.finish()

        def payload(res):
            Xr = res.matrix(X) * (sc.pi_scale / sc.f_scale)
            return {"X": sc.T @ Xr}

        return prog, payload

    if multiplier != "affine":
        raise CertificationError(f"unknown multiplier form {multiplier!r}")
    # X(p) = X_0 + sum_i p_i X_i. The side condition sym(X_i F_i) >= 0 has no
    # interior because F_i has rank at most n_u + n_y. Writing
    # X_i = R A_i + Rp C_i N^T, with R a basis of the row space of F_i, Rp its
    # complement and N a basis of the left kernel of F_i, removes exactly the
    # directions the side condition forces to zero and leaves a small LMI with
    # an interior.
    n = problem.n_sched
    X0 = prog.sdp.matrix_variable("X0", (r, m))
    parts = []
    for i in range(1, n + 1):
        K = sc.Fh[i]
        R = range_basis(K.T)
        Rp = nullspace_basis(R.T)
        Nk = nullspace_basis(K.T)
        Ai = prog.sdp.matrix_variable(f"A{i}", (R.shape[1], m))
        Ci = prog.sdp.matrix_variable(f"C{i}", (Rp.shape[1], Nk.shape[1])) if Rp.shape[1] and Nk.shape[1] else None
        parts.append((R, Rp, Nk, Ai, Ci))
    for v, pbar in enumerate(flat):
        Fv = sc.F_at(pbar)
        expr = prog.supply_block(r, sc.Pi, sc.A, sc.B)
        expr.add_matrix_term(X0, -np.eye(r), Fv)
        for i, (R, Rp, Nk, Ai, Ci) in enumerate(parts):
            if pbar[i] == 0.0:
                continue
            expr.add_matrix_term(Ai, -pbar[i] * R, Fv)
            if Ci is not None:
                expr.add_matrix_term(Ci, -pbar[i] * Rp, Nk.T @ Fv)
        prog.add_main(expr, f"vertex {v}")
    for i, (R, Rp, Nk, Ai, Ci) in enumerate(parts):
        q = R.shape[1]
        prog.sdp.add_lmi(AffineMatrixExpr(np.zeros((q, q)), matrix_terms=[(Ai, np.eye(q), sc.Fh[i + 1] @ R)]),
                         ">=", f"convexity {i + 1}")
    prog.finish()

    def payload(res):
        k = sc.pi_scale / sc.f_scale
        Xs = [sc.T @ (res.matrix(X0) * k)]
        for R, Rp, Nk, Ai, Ci in parts:
            Xi = R @ res.matrix(Ai)
            if Ci is not None:
                Xi = Xi + Rp @ res.matrix(Ci) @ Nk.T
            Xs.append(sc.T @ (Xi * k))
        return {"X": Xs}

    return prog, payload


def verify_cha(problem: CertificationProblem, multiplier: str = "constant",
               options: Optional[VerifyOptions] = None, vertices=None) -> VerificationOutcome:
    """Vertex LMIs over the scheduling polytope, ignoring any rate bound.

    Args:
        multiplier: ``constant`` (one ``X`` for all vertices) or ``affine``
            (``X`` affine in the trajectory, box sets only).
        vertices: explicit trajectory vertices, shape (n, L, n_p); enumerated
            from the scheduling set when omitted.
    """
    return _run_cha("CHA", problem, multiplier, options, vertices, use_rate=False)


def verify_cha_rate(problem: CertificationProblem, multiplier: str = "constant",
                    options: Optional[VerifyOptions] = None, vertices=None) -> VerificationOutcome:
    """Vertex LMIs over the rate-bounded trajectory polytope."""
    s = problem.scheduling
    if vertices is None and (s is None or not is_polytopic(s) or not s.has_rate_bound):
        raise CertificationError("the rate-bounded method needs a polytopic set with a rate bound")
    return _run_cha("CHAr", problem, multiplier, options, vertices, use_rate=True)


def _run_cha(method, problem, multiplier, options, vertices, use_rate) -> VerificationOutcome:
    options = _opts(options)
    short = _degenerate(problem, method, options.psd_tol)
    if short is not None:
        return short
    if vertices is None:
        vertices = _polytope_vertices(problem.scheduling, problem.L, options.vertex_cap, use_rate)
    vertices = np.asarray(vertices, dtype=float)
    if multiplier == "affine":
        s = problem.scheduling
        if use_rate or s is None or not isinstance(s, BoxPolytope):
            raise CertificationError("the affine multiplier is only valid for box sets without rate bound")
    t0 = time.perf_counter()
    prog, payload = _cha_program(problem, vertices, multiplier, options, method)
    build = time.perf_counter() - t0
    res = prog.sdp.solve(options.backend)
    info = {"vertices": len(vertices), "multiplier": multiplier, "build_time": build,
            "certificate": "sufficient", **problem.describe()}
    out = _verdict(method, prog, res, options, payload, info)
    out.stats["wall_time"] = res.wall_time + build
    return out


# -- S-procedure -------------------------------------------------------------

def sp_ball(problem: CertificationProblem, p_max: Optional[float] = None,
            nominal=None) -> tuple[np.ndarray, float]:
    """Nominal trajectory and radius used by the S-procedure.

    Explicit arguments win; otherwise a ``QuadraticBall`` set is used directly
    and a box is covered by the smallest ball around its center.
    """
    s = problem.scheduling
    L, n_p = problem.L, problem.n_p
    if nominal is not None:
        nom = np.asarray(nominal, dtype=float)
        nom = np.tile(nom.reshape(-1)[:n_p], (L, 1)) if nom.size == n_p else nom.reshape(L, n_p)
    elif isinstance(s, QuadraticBall):
        nom = s.nominal_trajectory(L)
    elif s is not None and is_polytopic(s):
        lo, hi = s.bounding_box()
        nom = np.tile(0.5 * (lo + hi), (L, 1))
    else:
        raise CertificationError("the S-procedure needs a ball, a polytope or an explicit nominal")
    if p_max is None:
        if isinstance(s, QuadraticBall):
            p_max = s.radius
        elif s is not None and is_polytopic(s):
            V = s.vertices()
            p_max = float(np.max(np.linalg.norm(V - nom[0], axis=1)))
        else:
            raise CertificationError("p_max is required")
    return nom, float(p_max)


def verify_sp(problem: CertificationProblem, p_max: Optional[float] = None, nominal=None,
              options: Optional[VerifyOptions] = None) -> VerificationOutcome:
    """Single LMI with multipliers ``mu`` (free) and ``tau >= 0`` for a ball of trajectories."""
    options = _opts(options)
    short = _degenerate(problem, "SP", options.psd_tol)
    if short is not None:
        return short
    nom, p_max = sp_ball(problem, p_max, nominal)
    t0 = time.perf_counter()
    T = problem.basis
    F3, F4, F5 = problem.sproc
    F3r, F5r = F3 @ T, F5 @ T
    c = max(float(np.linalg.norm(np.vstack([F3r, F5r]), 2)), 1e-300)
    F3r, F5r = F3r / c, F5r / c
    sc = _Scaled(problem)
    n1, r = F4.shape[1], T.shape[1]
    n = n1 + r
    M_P = build_M_P(nom, p_max, problem.n_u, problem.n_y)
    E = np.zeros((n1 + F5r.shape[0], n))
    E[:n1, :n1] = np.eye(n1)
    E[n1:, n1:] = F5r
    G = np.hstack([F4, -F3r])   # G [P F5 g; g] = -F g
    prog = _Program("SP", problem.gain_mode, options)
    mu = prog.sdp.variable("mu")
    tau = prog.sdp.variable("tau", lower=0.0)
    expr = prog.supply_block(n, sc.Pi, sc.A, sc.B, lead=n1)
    expr.add_term(mu, G.T @ G)
    expr.add_term(tau, -(E.T @ M_P @ E))
    prog.add_main(expr, "S-procedure")
    prog.finish()
    build = time.perf_counter() - t0
    res = prog.sdp.solve(options.backend)

    def payload(res):
        k = sc.pi_scale / c**2
        return {"mu": res.value(mu) * k, "tau": res.value(tau) * k}

    info = {"p_max": p_max, "nominal": nom, "build_time": build, "certificate": "sufficient",
            **problem.describe()}
    out = _verdict("SP", prog, res, options, payload, info)
    out.stats["wall_time"] = res.wall_time + build
    return out


# -- sampled scheduling-dependent multipliers --------------------------------

def verify_sdm(problem: CertificationProblem, n_samples: int = 100, rng=None,
               options: Optional[VerifyOptions] = None, samples=None) -> VerificationOutcome:
    """Per-sample Finsler LMIs ``Pi_H + mu_i F(p_i)^T F(p_i) >= 0``.

    The samples share only the supply variable, so the joint program returns
    the worst sample: the largest per-sample gamma, or the smallest slack.
    The result is a necessary condition that tightens as samples are added.
    """
    options = _opts(options)
    short = _degenerate(problem, "SDM", options.psd_tol)
    if short is not None:
        return short
    if samples is None:
        if problem.scheduling is None:
            raise CertificationError("sampling needs a scheduling set")
        if n_samples < 1:
            raise CertificationError("need at least one sample")
        samples = sample_trajectories(problem.scheduling, problem.L, n_samples, rng)
    samples = np.asarray(samples, dtype=float).reshape(-1, problem.L, problem.n_p)
    t0 = time.perf_counter()
    sc = _Scaled(problem)
    prog = _Program("SDM", problem.gain_mode, options)
    mus = []
    for i, pbar in enumerate(samples.reshape(len(samples), -1)):
        Fi = sc.F_at(pbar)
        mu = prog.sdp.variable(f"mu{i}")
        mus.append(mu)
        expr = prog.supply_block(sc.r, sc.Pi, sc.A, sc.B)
        expr.add_term(mu, Fi.T @ Fi)
        prog.add_main(expr, f"sample {i}")
    prog.finish()
    build = time.perf_counter() - t0
    res = prog.sdp.solve(options.backend)

    def payload(res):
        k = sc.pi_scale / sc.f_scale**2
        return {"mu": [res.value(m) * k for m in mus]}

    info = {"samples": len(samples), "build_time": build, "certificate": "necessary",
            **problem.describe()}
    out = _verdict("SDM", prog, res, options, payload, info)
    out.stats["wall_time"] = res.wall_time + build
    return out


# -- model-based baseline ----------------------------------------------------

def mba_trajectories(scheduling: SchedulingSet, horizon: int,
                     cap: int = DEFAULT_VERTEX_CAP) -> np.ndarray:
    """Default trajectory list: vertices of the (rate-bounded) polytope over ``horizon``."""
    if not is_polytopic(scheduling):
        raise CertificationError("the default trajectory list needs a polytopic scheduling set")
    return enumerate_vertices(scheduling, horizon, cap=cap)


def verify_mba(model: LpvIoModel, horizon: int, supply: Optional[SupplyRate] = None,
               trajectories=None, scheduling: Optional[SchedulingSet] = None,
               options: Optional[VerifyOptions] = None, extra_samples: int = 0,
               rng=None) -> VerificationOutcome:
    """Model-based check ``[I; T(p)]^T Pi_L [I; T(p)] >= 0`` on a list of trajectories.

    ``T(p)`` is the zero-state input-output matrix of the companion
    realization. Without ``trajectories`` the vertices of ``scheduling`` (or
    the model's attached set) over ``horizon`` are used. Because the
    inequality is quadratic in ``T(p)`` and ``T(p)`` is multilinear in the
    trajectory, checking vertices is not a proof for the whole set;
    ``extra_samples`` random trajectories are evaluated afterwards and the worst
    one is reported in ``info``.
    """
    options = _opts(options)
    if horizon < 1:
        raise CertificationError("horizon must be positive")
    if supply is not None and (supply.n_u != model.n_u or supply.n_y != model.n_y):
        raise CertificationError("supply rate dimensions do not match the model")
    ss = realize_ss_siso(model)
    sched = scheduling if scheduling is not None else model.scheduling
    if trajectories is None:
        if sched is None:
            raise CertificationError("no trajectories and no scheduling set given")
        trajectories = mba_trajectories(sched, horizon, options.vertex_cap)
    trajs = np.asarray(trajectories, dtype=float).reshape(-1, horizon, model.n_p)
    t0 = time.perf_counter()
    if supply is not None and min_eig(supply.matrix) >= -options.psd_tol:
        return VerificationOutcome("MBA", "feasibility", "certified",
                                   info={"shortcut": "supply rate is positive semidefinite"})
    Ts = [io_operator(ss, p) for p in trajs]
    nu = horizon * model.n_u
    prog = _Program("MBA", supply is None, options)
    if supply is None:
        scale = max(max(float(np.linalg.norm(T, 2)) for T in Ts) ** 2, 1e-300)
        for v, T in enumerate(Ts):
            prog.add_main(prog.supply_block(nu, None, np.eye(nu), T.T @ T / scale), f"trajectory {v}")
    else:
        Pi_L = build_Pi_L(supply, horizon)
        mats = []
        for T in Ts:
            Wm = np.vstack([np.eye(nu), T])
            mats.append(Wm.T @ Pi_L @ Wm)
        scale = max(max(float(np.linalg.norm(M, 2)) for M in mats), 1e-300)
        for v, M in enumerate(mats):
            prog.add_main(prog.supply_block(nu, M / scale, None, None), f"trajectory {v}")
    prog.finish()
    build = time.perf_counter() - t0
    res = prog.sdp.solve(options.backend)
    info = {"trajectories": len(trajs), "horizon": horizon, "build_time": build}

    def payload(res):
        if supply is None:
            s = res.value(prog.s)
            worst = int(np.argmax([np.linalg.norm(T, 2) for T in Ts]))
            return {"active_trajectory": worst, "gamma_sq": s * scale}
        eig = [min_eig(M) for M in mats]
        return {"active_trajectory": int(np.argmin(eig))}

    if supply is None:
        gains = [float(np.linalg.norm(T, 2)) for T in Ts]
        info["svd_gamma"] = max(gains)
    out = _verdict("MBA", prog, res, options, payload, info)
    if out.gamma is not None:
        out.gamma = out.gamma * math.sqrt(scale)
    out.stats["wall_time"] = res.wall_time + build
    if extra_samples > 0 and sched is not None:
        samp = sample_trajectories(sched, horizon, extra_samples, rng)
        if supply is None:
            out.info["sampled_gamma"] = max(float(np.linalg.norm(io_operator(ss, p), 2)) for p in samp)
        else:
            Pi_L = build_Pi_L(supply, horizon)
            worst = math.inf
            for p in samp:
                Wm = np.vstack([np.eye(nu), io_operator(ss, p)])
                worst = min(worst, min_eig(Wm.T @ Pi_L @ Wm))
            out.info["sampled_min_eig"] = worst
    return out


# -- dispatch ----------------------------------------------------------------

def min_gain(method: str, problem: CertificationProblem, options: Optional[VerifyOptions] = None,
             **kwargs) -> VerificationOutcome:
    """Gain minimization with the named method; ``problem`` must have no supply rate.

    ``MBA`` needs ``model=`` (and optionally ``trajectories=``) and uses the
    horizon ``L - ell``. ``FIXED_P`` needs ``trajectories=`` or uses the
    polytope vertices, falling back to random samples when there are too many.
    """
    if not problem.gain_mode:
        raise CertificationError("min_gain needs a problem without a supply rate")
    return run_method(method, problem, options=options, **kwargs)


def run_method(method: str, problem: CertificationProblem, options: Optional[VerifyOptions] = None,
               **kwargs) -> VerificationOutcome:
    """Dispatch by method tag; the mode follows from whether ``problem`` has a supply rate."""
    key = method.upper()
    if key == "CHA":
        return verify_cha(problem, kwargs.get("multiplier", "constant"), options, kwargs.get("vertices"))
    if key == "CHAR":
        return verify_cha_rate(problem, kwargs.get("multiplier", "constant"), options, kwargs.get("vertices"))
    if key == "SP":
        return verify_sp(problem, kwargs.get("p_max"), kwargs.get("nominal"), options)
    if key == "SDM":
        return verify_sdm(problem, kwargs.get("n_samples", 100), kwargs.get("rng"), options,
                          kwargs.get("samples"))
    if key == "MBA":
        model = kwargs.get("model")
        if model is None:
            raise CertificationError("the model-based method needs model=")
        return verify_mba(model, problem.L - problem.ell, problem.supply, kwargs.get("trajectories"),
                          kwargs.get("scheduling", problem.scheduling), options,
                          kwargs.get("extra_samples", 0), kwargs.get("rng"))
    if key in ("FIXED_P", "FIXED-P", "FIXEDP"):
        trajs = kwargs.get("trajectories")
        if trajs is None:
            trajs = _fixed_p_default(problem, options, kwargs.get("n_samples", 100), kwargs.get("rng"))
        return verify_fixed_p_outcome(problem, trajs, options)
    raise CertificationError(f"unknown method {method!r}")


def _fixed_p_default(problem, options, n_samples, rng) -> np.ndarray:
    s = problem.scheduling
    if s is None:
        raise CertificationError("fixed-trajectory checks need trajectories or a scheduling set")
    parts = []
    if is_polytopic(s):
        try:
            parts.append(enumerate_vertices(s, problem.L, cap=_opts(options).vertex_cap))
        except SchedulingError:
            pass
    if not parts or n_samples:
        parts.append(sample_trajectories(s, problem.L, max(n_samples, 1), rng))
    return np.concatenate(parts)


METHOD_TAGS: Sequence[str] = ("CHA", "CHAr", "SP", "SDM", "MBA", "FIXED_P")
