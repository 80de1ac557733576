"""LMI problem model, interior-point solver and linear-algebra helpers."""

from .linalg import (
    min_eig,
    nullspace_basis,
    numerical_rank,
    psd_check,
    range_basis,
    rowspace_basis,
)
from .problem import (
    AffineMatrixExpr,
    LmiError,
    MatrixVariable,
    SdpProblem,
    SolveResult,
    SolverOptions,
)
from .sdpa import read_sdpa, write_sdpa


def solve(problem: SdpProblem, backend: str = "ipm", **options) -> SolveResult:
    """Solve ``problem`` with the chosen backend (``ipm`` or ``cvxopt``)."""
    return problem.solve(backend, **options)


__all__ = [
    "AffineMatrixExpr",
    "LmiError",
    "MatrixVariable",
    "SdpProblem",
    "SolveResult",
    "SolverOptions",
    "min_eig",
    "nullspace_basis",
    "numerical_rank",
    "psd_check",
    "read_sdpa",
    "range_basis",
    "rowspace_basis",
    "solve",
    "write_sdpa",
]
