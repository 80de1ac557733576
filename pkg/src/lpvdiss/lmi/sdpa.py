"""SDPA sparse text format (``.dat-s``) export and import.

The layout solves ``min c^T x`` subject to ``sum_i x_i F_i - F_0 >= 0``.
Each LMI becomes one block; variable lower bounds are collected into one
diagonal block (negative size in the block structure line). Only the upper
triangle is written, with 1-based indices.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .problem import AffineMatrixExpr, LmiError, SdpProblem

ZERO_TOL = 0.0


def _entries(mat, mat_no, blk_no, tol):
    iu, ju = np.triu_indices(mat.shape[0])
    vals = mat[iu, ju]
    keep = np.abs(vals) > tol
    return [(mat_no, blk_no, int(i) + 1, int(j) + 1, float(v))
            for i, j, v in zip(iu[keep], ju[keep], vals[keep])]


def sdpa_lines(problem: SdpProblem, tol: float = ZERO_TOL) -> list[str]:
    m = problem.n_variables
    bounded = [(vid, lo) for vid, lo in enumerate(problem.lower) if lo is not None]
    sizes = [c.size for c in problem.constraints]
    if bounded:
        sizes.append(-len(bounded))
    rows = []
    for b, expr in enumerate(problem.constraints, start=1):
        rows += _entries(-expr.constant, 0, b, tol)
        for vid, A in sorted(expr.dense_terms().items()):
            rows += _entries(A, vid + 1, b, tol)
    if bounded:
        b = len(problem.constraints) + 1
        for k, (vid, lo) in enumerate(bounded, start=1):
            if lo != 0:
                rows.append((0, b, k, k, float(lo)))
            rows.append((vid + 1, b, k, k, 1.0))
    out = [f'"{problem.name or "lpvdiss problem"}"', str(m), str(len(sizes)),
           " ".join(str(s) for s in sizes),
           " ".join(repr(float(c)) for c in problem.cost_vector())]
    out += [f"{a} {b} {i} {j} {v!r}" for a, b, i, j, v in rows]
    return out


def write_sdpa(problem: SdpProblem, path, tol: float = ZERO_TOL) -> Path:
    """Write ``problem`` in SDPA sparse format; entries with ``|v| <= tol`` are dropped."""
    path = Path(path)
    path.write_text("\n".join(sdpa_lines(problem, tol)) + "\n")
    return path


def read_sdpa(path) -> SdpProblem:
    """Read an SDPA sparse file back into an ``SdpProblem``.

    Diagonal blocks become one LMI per diagonal entry, so a round trip keeps
    the feasible set and objective but not the variable lower bounds.
    """
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and ln[0] not in '"*']
    tokens = lambda s: s.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " ").split()
    try:
        m = int(tokens(lines[0])[0])
        nblocks = int(tokens(lines[1])[0])
        sizes = [int(v) for v in tokens(lines[2])[:nblocks]]
        c = np.array([float(v) for v in tokens(lines[3])[:m]])
    except (IndexError, ValueError) as exc:
        raise LmiError(f"malformed SDPA header: {exc}") from exc
    mats = [[np.zeros((abs(s), abs(s))) for s in sizes] for _ in range(m + 1)]
    for ln in lines[4:]:
        a, b, i, j, v = tokens(ln)[:5]
        a, b, i, j, v = int(a), int(b) - 1, int(i) - 1, int(j) - 1, float(v)
        mats[a][b][i, j] = v
        mats[a][b][j, i] = v
    prob = SdpProblem("sdpa import")
    for k in range(m):
        prob.variable(f"x{k}")
    for b, s in enumerate(sizes):
        if s > 0:
            expr = AffineMatrixExpr(-mats[0][b])
            for k in range(m):
                if np.any(mats[k + 1][b]):
                    expr.add_term(k, mats[k + 1][b])
            prob.add_lmi(expr, ">=", f"block {b + 1}")
        else:
            for d in range(-s):
                expr = AffineMatrixExpr([[-mats[0][b][d, d]]])
                for k in range(m):
                    if mats[k + 1][b][d, d]:
                        expr.add_term(k, [[mats[k + 1][b][d, d]]])
                prob.add_lmi(expr, ">=", f"block {b + 1}[{d + 1}]")
    prob.minimize({k: float(v) for k, v in enumerate(c) if v})
    return prob
