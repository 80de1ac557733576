"""Dense linear-algebra helpers: PSD tests, numerical rank and kernel bases."""

from __future__ import annotations

from typing import Optional

import numpy as np


def default_rank_tol(M: np.ndarray) -> float:
    """Relative rank tolerance ``max(rows, cols) * eps``."""
    return max(M.shape) * np.finfo(float).eps


def sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def min_eig(M: np.ndarray) -> float:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if M.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(sym(M))[0])


def psd_check(M: np.ndarray, tol: float = 1e-9) -> bool:
    """True when the smallest eigenvalue of the symmetric part is at least ``-tol``."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    return min_eig(M) >= -tol


def numerical_rank(M: np.ndarray, tol: Optional[float] = None) -> int:
    """Count singular values at or above ``tol * sigma_max``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    tol = default_rank_tol(M) if tol is None else tol
    return int(np.sum(s >= tol * s[0]))


def nullspace_basis(M: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis ``Z`` of the right kernel, so that ``M @ Z`` is negligible.

    Singular values below ``tol * sigma_max`` count as zero.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(n)
    U, s, Vt = np.linalg.svd(M, full_matrices=True)
    if s.size == 0 or s[0] == 0:
        return np.eye(n)
    tol = default_rank_tol(M) if tol is None else tol
    r = int(np.sum(s >= tol * s[0]))
    return Vt[r:].T.copy()


def range_basis(M: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis of the column space."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s[0] == 0:
        return np.zeros((M.shape[0], 0))
    tol = default_rank_tol(M) if tol is None else tol
    return U[:, s >= tol * s[0]].copy()


def rowspace_basis(M: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis (as columns) of the row space."""
    return range_basis(np.asarray(M, dtype=float).T, tol)
