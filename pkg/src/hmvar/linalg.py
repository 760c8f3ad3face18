"""Small dense symmetric-matrix helpers."""
from __future__ import annotations

import numpy as np
import scipy.linalg


class IllConditionedError(np.linalg.LinAlgError):
    """Raised when a matrix that must be positive definite is not."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


def as_sym(m) -> np.ndarray:
    """Return ``(m + m.T) / 2`` as a 2-D float array, rejecting non-finite input."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return (m + m.T) / 2


def outer_sum(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Σ_r a_r b_rᵀ over rows."""
    a = np.atleast_2d(a)
    return a.T @ (a if b is None else np.atleast_2d(b))


def sym_eigen_min(m) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(as_sym(m))[0])


def spectral_norm(m) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(as_sym(m)))))


def is_psd(m, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return sym_eigen_min(m) >= -tol


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a x = b`` for symmetric positive definite ``a``."""
    a = as_sym(a)
    eig = np.linalg.eigvalsh(a)
    scale = max(float(np.max(np.abs(eig))), np.finfo(float).tiny)
    if eig[0] <= 1e-12 * scale:
        raise IllConditionedError(
            f"matrix is singular or ill-conditioned (min eigenvalue {eig[0]:.3g}, "
            f"spectral norm {scale:.3g})", float(eig[0]))
    return scipy.linalg.cho_solve(scipy.linalg.cho_factor(a), np.asarray(b, dtype=float))
