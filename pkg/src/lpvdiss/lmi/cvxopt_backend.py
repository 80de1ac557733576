"""Optional backend delegating to cvxopt's conic solver, used for cross-checks."""

from __future__ import annotations

import numpy as np

from .problem import SdpProblem, SolveResult, SolverOptions


def solve_cvxopt(problem: SdpProblem, opts: SolverOptions) -> SolveResult:
    try:
        from cvxopt import matrix, solvers
    except ImportError:  # pragma: no cover - depends on the environment
        return SolveResult("failed", message="cvxopt is not installed")

    m = problem.n_variables
    c = problem.cost_vector()
    Gs, hs = [], []
    for expr in problem.constraints:
        n = expr.size
        G = np.zeros((n * n, m))
        for vid, A in expr.dense_terms().items():
            G[:, vid] -= A.ravel(order="F")
        Gs.append(matrix(G))
        hs.append(matrix(expr.constant))
    bounds = [(vid, lo) for vid, lo in enumerate(problem.lower) if lo is not None]
    kw = {}
    if bounds:
        Gl = np.zeros((len(bounds), m))
        hl = np.zeros(len(bounds))
        for r, (vid, lo) in enumerate(bounds):
            Gl[r, vid] = -1.0
            hl[r] = -lo
        kw = {"Gl": matrix(Gl), "hl": matrix(hl)}
    solvers.options.update({"show_progress": opts.verbose, "maxiters": opts.max_iter,
                            "abstol": 1e-9, "reltol": 1e-9, "feastol": opts.feas_tol})
    try:
        sol = solvers.sdp(matrix(c), Gs=Gs, hs=hs, **kw)
    except (ValueError, ArithmeticError) as exc:
        return SolveResult("failed", message=str(exc))
    status = {"optimal": "optimal", "primal infeasible": "infeasible",
              "dual infeasible": "unbounded"}.get(sol["status"], "inaccurate")
    x = None if sol["x"] is None or status == "infeasible" else np.array(sol["x"]).ravel()
    return SolveResult(
        status, x=x,
        objective=float(c @ x) if x is not None else float("nan"),
        primal_residual=float(sol.get("primal infeasibility") or np.nan),
        dual_residual=float(sol.get("dual infeasibility") or np.nan),
        gap=float(sol.get("relative gap") or np.nan),
        iterations=int(sol.get("iterations", 0)),
        message=sol["status"],
    )
