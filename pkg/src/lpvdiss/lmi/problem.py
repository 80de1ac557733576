"""Problem model for linear matrix inequalities over scalar and matrix variables."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np


class LmiError(ValueError):
    """Raised for malformed LMI problems."""


@dataclass(frozen=True)
class MatrixVariable:
    """A general (non-symmetric) matrix of scalar variables stored row-major."""

    name: str
    shape: tuple[int, int]
    offset: int

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.size)

    def index(self, i: int, j: int) -> int:
        return self.offset + i * self.shape[1] + j


class AffineMatrixExpr:
    """Symmetric matrix affine in the problem variables.

    Value: ``constant + sum_k x[id_k] * coeff_k + sum_t (L_t X_t R_t + (L_t X_t R_t)^T)``.
    Scalar terms carry symmetrized coefficient matrices. Matrix terms keep a
    matrix variable in factored form so that solvers can exploit the structure;
    ``dense_terms`` expands them entrywise.
    """

    def __init__(self, constant, terms: Sequence = (), matrix_terms: Sequence = ()):
        C = np.atleast_2d(np.asarray(constant, dtype=float))
        if C.shape[0] != C.shape[1]:
            raise LmiError(f"constant term must be square, got {C.shape}")
        self.constant = 0.5 * (C + C.T)
        self.terms: list[tuple[int, np.ndarray]] = []
        self.matrix_terms: list[tuple[MatrixVariable, np.ndarray, np.ndarray]] = []
        for vid, coeff in terms:
            self.add_term(vid, coeff)
        for var, left, right in matrix_terms:
            self.add_matrix_term(var, left, right)

    @property
    def size(self) -> int:
        return self.constant.shape[0]

    def add_term(self, vid: int, coeff) -> "AffineMatrixExpr":
        A = np.atleast_2d(np.asarray(coeff, dtype=float))
        if A.shape != self.constant.shape:
            raise LmiError(f"coefficient shape {A.shape} differs from {self.constant.shape}")
        self.terms.append((int(vid), 0.5 * (A + A.T)))
        return self

    def add_matrix_term(self, var: MatrixVariable, left, right) -> "AffineMatrixExpr":
        Lm = np.atleast_2d(np.asarray(left, dtype=float))
        Rm = np.atleast_2d(np.asarray(right, dtype=float))
        n = self.size
        if Lm.shape != (n, var.shape[0]) or Rm.shape != (var.shape[1], n):
            raise LmiError(f"factors {Lm.shape}, {Rm.shape} do not fit variable {var.shape} in size {n}")
        self.matrix_terms.append((var, Lm, Rm))
        return self

    def scaled(self, alpha: float) -> "AffineMatrixExpr":
        out = AffineMatrixExpr(alpha * self.constant)
        out.terms = [(v, alpha * A) for v, A in self.terms]
        out.matrix_terms = [(v, alpha * Lm, Rm) for v, Lm, Rm in self.matrix_terms]
        return out

    def __neg__(self) -> "AffineMatrixExpr":
        return self.scaled(-1.0)

    def variable_ids(self) -> set[int]:
        ids = {v for v, _ in self.terms}
        for var, _, _ in self.matrix_terms:
            ids.update(var.ids.tolist())
        return ids

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.constant.copy()
        for vid, A in self.terms:
            out += x[vid] * A
        for var, Lm, Rm in self.matrix_terms:
            X = x[var.offset:var.offset + var.size].reshape(var.shape)
            T = Lm @ X @ Rm
            out += T + T.T
        return out

    def dense_terms(self) -> dict[int, np.ndarray]:
        """All terms as one symmetric coefficient per scalar variable."""
        out: dict[int, np.ndarray] = {}
        for vid, A in self.terms:
            out[vid] = out.get(vid, 0) + A
        for var, Lm, Rm in self.matrix_terms:
            p, q = var.shape
            for i in range(p):
                for j in range(q):
                    T = np.outer(Lm[:, i], Rm[j, :])
                    vid = var.index(i, j)
                    out[vid] = out.get(vid, 0) + T + T.T
        return out


@dataclass
class SolverOptions:
    """Interior-point settings.

    Attributes:
        max_iter: iteration limit.
        feas_tol: relative primal and dual residual tolerance.
        gap_tol: relative duality gap tolerance.
        infeas_tol: threshold on certificate ratios for infeasibility claims.
        step: fraction of the distance to the cone boundary taken per step.
    """

    max_iter: int = 100
    feas_tol: float = 1e-7
    gap_tol: float = 1e-7
    infeas_tol: float = 1e-8
    step: float = 0.98
    verbose: bool = False


@dataclass
class SolveResult:
    """Outcome of a solver call.

    ``status`` is one of ``optimal``, ``feasible``, ``infeasible``, ``unbounded``,
    ``inaccurate`` or ``failed``.
    """

    status: str
    x: Optional[np.ndarray] = None
    objective: float = float("nan")
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    gap: float = float("nan")
    iterations: int = 0
    wall_time: float = 0.0
    backend: str = ""
    message: str = ""
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")

    def value(self, vid: int) -> float:
        if self.x is None:
            raise LmiError(f"no variable values (status {self.status})")
        return float(self.x[vid])

    def matrix(self, var: MatrixVariable) -> np.ndarray:
        if self.x is None:
            raise LmiError(f"no variable values (status {self.status})")
        return self.x[var.offset:var.offset + var.size].reshape(var.shape).copy()

    def stats(self) -> dict:
        return {
            "status": self.status,
            "backend": self.backend,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "gap": self.gap,
            "objective": self.objective,
            "wall_time": self.wall_time,
            "message": self.message,
        }


class SdpProblem:
    """Minimize a linear objective subject to LMIs and variable lower bounds."""

    def __init__(self, name: str = "", options: Optional[SolverOptions] = None):
        self.name = name
        self.names: list[str] = []
        self.lower: list[Optional[float]] = []
        self.constraints: list[AffineMatrixExpr] = []
        self.labels: list[str] = []
        self.objective: dict[int, float] = {}
        self.options = options or SolverOptions()
        self._matrix_vars: list[MatrixVariable] = []

    @property
    def n_variables(self) -> int:
        return len(self.names)

    @property
    def n_lmis(self) -> int:
        return len(self.constraints)

    def variable(self, name: str, lower: Optional[float] = None) -> int:
        self.names.append(name)
        self.lower.append(lower)
        return len(self.names) - 1

    def matrix_variable(self, name: str, shape: tuple[int, int]) -> MatrixVariable:
        var = MatrixVariable(name, (int(shape[0]), int(shape[1])), len(self.names))
        for i in range(var.shape[0]):
            for j in range(var.shape[1]):
                self.names.append(f"{name}[{i},{j}]")
                self.lower.append(None)
        self._matrix_vars.append(var)
        return var

    def add_lmi(self, expr: AffineMatrixExpr, sense: str = ">=", label: str = "") -> int:
        """Add ``expr >= 0`` (positive semidefinite) or ``expr <= 0``."""
        if sense in (">=", "psd"):
            stored = expr
        elif sense in ("<=", "nsd"):
            stored = -expr
        else:
            raise LmiError(f"unknown constraint sense {sense!r}")
        bad = [v for v in stored.variable_ids() if v < 0 or v >= self.n_variables]
        if bad:
            raise LmiError(f"constraint references unregistered variables {bad[:5]}")
        self.constraints.append(stored)
        self.labels.append(label)
        return len(self.constraints) - 1

    def minimize(self, coeffs: Union[dict, int]) -> None:
        if isinstance(coeffs, int):
            coeffs = {coeffs: 1.0}
        for vid in coeffs:
            if not 0 <= vid < self.n_variables:
                raise LmiError(f"objective references unregistered variable {vid}")
        self.objective = {int(k): float(v) for k, v in coeffs.items()}

    def maximize(self, coeffs: Union[dict, int]) -> None:
        if isinstance(coeffs, int):
            coeffs = {coeffs: 1.0}
        self.minimize({k: -v for k, v in coeffs.items()})

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.n_variables)
        for k, v in self.objective.items():
            c[k] = v
        return c

    def min_eigs(self, x) -> np.ndarray:
        """Smallest eigenvalue of every stored (PSD-form) constraint at ``x``."""
        return np.array([np.linalg.eigvalsh(c.evaluate(x))[0] for c in self.constraints])

    def bound_violation(self, x) -> float:
        worst = 0.0
        for vid, lo in enumerate(self.lower):
            if lo is not None:
                worst = max(worst, lo - float(x[vid]))
        return worst

    def solve(self, backend: str = "ipm", **overrides) -> SolveResult:
        if not self.constraints:
            raise LmiError("problem has no constraints")
        opts = SolverOptions(**{**self.options.__dict__, **overrides})
        t0 = time.perf_counter()
        if backend == "ipm":
            from .ipm import solve_ipm

            res = solve_ipm(self, opts)
        elif backend == "cvxopt":
            from .cvxopt_backend import solve_cvxopt

            res = solve_cvxopt(self, opts)
        else:
            res = SolveResult("failed", message=f"unknown backend {backend!r}")
        res.wall_time = time.perf_counter() - t0
        res.backend = backend
        return res
