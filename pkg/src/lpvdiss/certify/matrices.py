"""Data-based matrices behind the finite-horizon dissipation test.

For a scheduling trajectory ``pbar`` of length ``L`` the test asks that
``g^T Pi_H g >= 0`` for every ``g`` with ``F(pbar) g = 0``, where

* ``Pi_H = H^T Pi_L H`` with ``H = [H_u; H_y]`` and ``Pi_L`` the supply rate
  repeated over the horizon,
* ``F(pbar) = [V H; H_up - Pu H_u; H_yp - Py H_y]`` stacks the zero-prefix
  selector ``V`` (first ``ell`` samples of ``u`` and ``y``) and the scheduling
  consistency rows.

``F`` is affine in ``pbar`` and is exposed in three equivalent ways: the direct
construction, the coefficient list ``F = F0 + sum_i pbar_i F_i`` (``pbar``
flattened time-major) and the split ``F = F3 - F4 diag(Pu, Py) F5``.
"""

from __future__ import annotations

from functools import cached_property
from typing import Optional

import numpy as np

from ..datadict import DataDictionary, HankelStack, blockdiag_kron, hankel_stack, scheduling_constraint
from ..lmi.linalg import rowspace_basis
from ..model import SupplyRate, as_sequence
from ..scheduling import SchedulingSet


class CertificationError(ValueError):
    """Raised when a certification problem is ill-posed."""


def build_V(ell: int, L: int, n_u: int, n_y: int) -> np.ndarray:
    """Selector of the first ``ell`` input and output samples from ``[vec(u); vec(y)]``."""
    if not 0 < ell < L:
        raise CertificationError(f"need 0 < ell < L, got ell = {ell}, L = {L}")
    V = np.zeros(((n_u + n_y) * ell, (n_u + n_y) * L))
    V[:n_u * ell, :n_u * ell] = np.eye(n_u * ell)
    V[n_u * ell:, n_u * L:n_u * L + n_y * ell] = np.eye(n_y * ell)
    return V


def build_Pi_L(supply: SupplyRate, L: int) -> np.ndarray:
    """Supply rate over the horizon, acting on ``[vec(u); vec(y)]``."""
    eye = np.eye(L)
    return np.block([
        [np.kron(eye, supply.Q), np.kron(eye, supply.S)],
        [np.kron(eye, supply.S.T), np.kron(eye, supply.R)],
    ])


def build_Pi(data: DataDictionary, L: int, supply: SupplyRate) -> tuple[np.ndarray, np.ndarray]:
    """``(Pi_L, Pi_H)`` with ``Pi_H = H^T Pi_L H`` symmetrized."""
    if data.N <= L:
        raise CertificationError(f"need N > L, got N = {data.N}, L = {L}")
    if supply.n_u != data.n_u or supply.n_y != data.n_y:
        raise CertificationError("supply rate dimensions do not match the data")
    H = hankel_stack(data, L).io
    Pi_L = build_Pi_L(supply, L)
    Pi_H = H.T @ Pi_L @ H
    return Pi_L, 0.5 * (Pi_H + Pi_H.T)


def build_M_P(nominal, p_max: float, n_u: int, n_y: int) -> np.ndarray:
    """Quadratic certificate of the Euclidean ball of radius ``p_max`` around ``nominal``.

    ``[P; I]^T M_P [P; I] >= 0`` holds exactly when every sample of the
    trajectory behind ``P = diag(Pu, Py)`` lies in the ball.
    """
    if not p_max > 0:
        raise CertificationError("p_max must be positive")
    nom = as_sequence(nominal, name="nominal")
    Pn = _diag2(blockdiag_kron(nom, n_u), blockdiag_kron(nom, n_y))
    r, c = Pn.shape
    return np.block([[-np.eye(r), Pn], [Pn.T, p_max**2 * np.eye(c) - Pn.T @ Pn]])


def _diag2(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.zeros((A.shape[0] + B.shape[0], A.shape[1] + B.shape[1]))
    out[:A.shape[0], :A.shape[1]] = A
    out[A.shape[0]:, A.shape[1]:] = B
    return out


class CertificationProblem:
    """Matrices for one dictionary, horizon ``L`` and prefix length ``ell``.

    Args:
        data: the measured record.
        L: horizon.
        ell: number of leading samples forced to zero (``n_r <= ell < L``).
        supply: supply rate; ``None`` selects gain minimization with the
            supply ``(s I, 0, -I)`` and ``s = gamma^2`` a decision variable.
        scheduling: admissible scheduling set.
        n_r: model lag, when known, to validate ``ell``.
        reduce: restrict ``g`` to the row space of all data rows. Directions
            outside it are annihilated by every matrix of the test.
    """

    def __init__(self, data: DataDictionary, L: int, ell: int, supply: Optional[SupplyRate] = None,
                 scheduling: Optional[SchedulingSet] = None, n_r: Optional[int] = None,
                 reduce: bool = True):
        if not 0 < ell < L:
            raise CertificationError(f"need 0 < ell < L, got ell = {ell}, L = {L}")
        if n_r is not None and ell < n_r:
            raise CertificationError(f"ell = {ell} is below the lag n_r = {n_r}")
        if data.N <= L:
            raise CertificationError(f"need N > L, got N = {data.N}, L = {L}")
        if supply is not None and (supply.n_u != data.n_u or supply.n_y != data.n_y):
            raise CertificationError("supply rate dimensions do not match the data")
        if scheduling is not None and scheduling.n_p != data.n_p:
            raise CertificationError("scheduling set dimension does not match the data")
        self.data = data
        self.L = int(L)
        self.ell = int(ell)
        self.supply = supply
        self.scheduling = scheduling
        self.reduce = reduce
        self.n_u, self.n_y, self.n_p = data.n_u, data.n_y, data.n_p

    # -- sizes ---------------------------------------------------------------
    @property
    def gain_mode(self) -> bool:
        return self.supply is None

    @property
    def n_columns(self) -> int:
        return self.data.N - self.L + 1

    @property
    def n_F_rows(self) -> int:
        return (self.n_u + self.n_y) * (self.ell + self.n_p * self.L)

    @property
    def n_sched(self) -> int:
        """Length of the flattened scheduling trajectory, ``L * n_p``."""
        return self.L * self.n_p

    # -- data matrices -------------------------------------------------------
    @cached_property
    def stack(self) -> HankelStack:
        return hankel_stack(self.data, self.L)

    @cached_property
    def H(self) -> np.ndarray:
        return self.stack.io

    @cached_property
    def V(self) -> np.ndarray:
        return build_V(self.ell, self.L, self.n_u, self.n_y)

    @cached_property
    def F1(self) -> np.ndarray:
        return self.V @ self.H

    @cached_property
    def Pi_L(self) -> Optional[np.ndarray]:
        return None if self.supply is None else build_Pi_L(self.supply, self.L)

    @cached_property
    def Pi_H(self) -> Optional[np.ndarray]:
        if self.supply is None:
            return None
        P = self.H.T @ self.Pi_L @ self.H
        return 0.5 * (P + P.T)

    @cached_property
    def gain_parts(self) -> tuple[np.ndarray, np.ndarray]:
        """``(H_u^T H_u, H_y^T H_y)`` so that the gain supply gives ``s A - B``."""
        Hu, Hy = self.stack.H_u, self.stack.H_y
        return Hu.T @ Hu, Hy.T @ Hy

    def Pi_H_at(self, s: Optional[float] = None) -> np.ndarray:
        """``Pi_H`` for the fixed supply, or for ``gamma^2 = s`` in gain mode."""
        if self.supply is not None:
            return self.Pi_H
        if s is None:
            raise CertificationError("gain mode needs a value for gamma^2")
        A, B = self.gain_parts
        return s * A - B

    def F(self, pbar) -> np.ndarray:
        """Direct construction of ``F(pbar)``."""
        p = as_sequence(pbar, self.n_p, "pbar")
        return build_F(self, p)

    @cached_property
    def affine(self) -> np.ndarray:
        """``[F0, F1, ..., F_{L n_p}]`` stacked, shape (1 + L n_p, rows, columns)."""
        return affine_decompose(self)

    @cached_property
    def sproc(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return sproc_split(self)

    def F_affine(self, pbar) -> np.ndarray:
        p = np.asarray(pbar, dtype=float).ravel()
        if p.size != self.n_sched:
            raise CertificationError(f"pbar has {p.size} entries, expected {self.n_sched}")
        Fh = self.affine
        return Fh[0] + np.tensordot(p, Fh[1:], axes=(0, 0))

    # -- reduction -----------------------------------------------------------
    @cached_property
    def basis(self) -> np.ndarray:
        """Orthonormal columns spanning the directions of ``g`` the test can see."""
        if not self.reduce:
            return np.eye(self.n_columns)
        return rowspace_basis(self.stack.all_rows)

    @property
    def n_reduced(self) -> int:
        return self.basis.shape[1]

    def reduced_affine(self) -> np.ndarray:
        return self.affine @ self.basis

    def reduced_pi(self) -> tuple[Optional[np.ndarray], Optional[np.ndarray], Optional[np.ndarray]]:
        """Reduced ``(Pi_H, A, B)``; ``Pi_H`` is ``None`` in gain mode and ``A, B`` otherwise."""
        T = self.basis
        if self.supply is not None:
            return T.T @ self.Pi_H @ T, None, None
        A, B = self.gain_parts
        return None, T.T @ A @ T, T.T @ B @ T

    def describe(self) -> dict:
        return {
            "N": self.data.N, "L": self.L, "ell": self.ell, "n_u": self.n_u, "n_y": self.n_y,
            "n_p": self.n_p, "columns": self.n_columns, "reduced_columns": self.n_reduced,
            "F_rows": self.n_F_rows, "mode": "gain" if self.gain_mode else "feasibility",
        }


def build_F(problem: CertificationProblem, pbar) -> np.ndarray:
    """``[V H; H_up - Pu H_u; H_yp - Py H_y]`` at the trajectory ``pbar``."""
    p = as_sequence(pbar, problem.n_p, "pbar")
    if len(p) != problem.L:
        raise CertificationError(f"pbar has length {len(p)}, expected {problem.L}")
    return np.vstack([problem.F1, scheduling_constraint(problem.stack, p, problem.n_u, problem.n_y)])


def affine_decompose(problem: CertificationProblem) -> np.ndarray:
    """Coefficients of ``F`` in the flattened trajectory, index ``i = k * n_p + j``.

    ``F0`` is ``F`` at the zero trajectory; the coefficient of sample ``k``,
    component ``j`` removes ``e_j kron H_u`` (and ``H_y``) rows of time ``k``
    from the scheduling blocks.
    """
    L, n_u, n_y, n_p = problem.L, problem.n_u, problem.n_y, problem.n_p
    st = problem.stack
    cols = problem.n_columns
    rows_v = problem.F1.shape[0]
    out = np.zeros((1 + L * n_p, problem.n_F_rows, cols))
    out[0] = np.vstack([problem.F1, st.H_up, st.H_yp])
    off_u = rows_v
    off_y = rows_v + L * n_p * n_u
    for k in range(L):
        for j in range(n_p):
            i = 1 + k * n_p + j
            ru = off_u + (k * n_p + j) * n_u
            out[i, ru:ru + n_u] = -st.H_u[k * n_u:(k + 1) * n_u]
            ry = off_y + (k * n_p + j) * n_y
            out[i, ry:ry + n_y] = -st.H_y[k * n_y:(k + 1) * n_y]
    return out


def sproc_split(problem: CertificationProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(F3, F4, F5)`` with ``F = F3 - F4 diag(Pu, Py) F5``."""
    st = problem.stack
    F3 = np.vstack([problem.F1, st.H_up, st.H_yp])
    n_sched_rows = problem.L * problem.n_p * (problem.n_u + problem.n_y)
    F4 = np.vstack([np.zeros((problem.F1.shape[0], n_sched_rows)), np.eye(n_sched_rows)])
    F5 = st.io
    return F3, F4, F5


def sched_operator(problem: CertificationProblem, pbar) -> np.ndarray:
    """``diag(Pu, Py)`` for the trajectory ``pbar``."""
    p = as_sequence(pbar, problem.n_p, "pbar")
    return _diag2(blockdiag_kron(p, problem.n_u), blockdiag_kron(p, problem.n_y))
