"""Dense data-matrix helpers and reconstruction-quality metrics.

Rows are samples and columns are variables throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def as_data_matrix(X, name: str = "X") -> np.ndarray:
    """Return `X` as a finite 2-D float64 array, raising ValueError otherwise."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def center_columns(X) -> tuple[np.ndarray, np.ndarray]:
    """Subtract column means.

    Returns
    -------
    Xc : ndarray (m, v)
        Centered copy of `X`.
    means : ndarray (v,)
        The removed means; add them back to undo the centering.
    """
    A = as_data_matrix(X)
    means = A.mean(axis=0)
    Xc = A - means
    # second pass removes the rounding residue of the first
    Xc -= Xc.mean(axis=0)
    return Xc, means


def frobenius_sq(X) -> float:
    A = np.asarray(X, dtype=np.float64)
    return float(np.sum(A * A))


def _svd_cutoff(shape: tuple[int, int], smax: float) -> float:
    return max(shape) * smax * np.finfo(np.float64).eps


def least_squares_reconstruct(T, X) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-norm least-squares fit of `X` from the columns of `T`.

    Rank-deficient `T` is handled through a truncated SVD pseudo-inverse, so
    collinear code columns never make this fail.

    Returns
    -------
    B : ndarray (k, v)
        Coefficients with ``T @ B`` closest to `X` in Frobenius norm.
    Xhat : ndarray (m, v)
        ``T @ B``.
    """
    T = as_data_matrix(T, "T")
    X = as_data_matrix(X, "X")
    if T.shape[0] != X.shape[0]:
        raise ValueError(f"row mismatch: T has {T.shape[0]} rows, X has {X.shape[0]}")
    U, s, Vt = np.linalg.svd(T, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        B = np.zeros((T.shape[1], X.shape[1]))
        return B, np.zeros_like(X)
    keep = s > _svd_cutoff(T.shape, s[0])
    U, s, Vt = U[:, keep], s[keep], Vt[keep]
    UtX = U.T @ X
    B = Vt.T @ (UtX / s[:, None])
    Xhat = U @ UtX
    return B, Xhat


def variance_explained(X, Xhat) -> float:
    """Percentage of ``||X||_F^2`` captured by `Xhat` (100 is a perfect fit)."""
    X = np.asarray(X, dtype=np.float64)
    Xhat = np.asarray(Xhat, dtype=np.float64)
    if X.shape != Xhat.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Xhat.shape}")
    total = frobenius_sq(X)
    if total <= 0.0:
        raise ValueError("variance explained is undefined for an all-zero X")
    return 100.0 * (1.0 - frobenius_sq(X - Xhat) / total)


def mse(X, Xhat) -> float:
    X = np.asarray(X, dtype=np.float64)
    Xhat = np.asarray(Xhat, dtype=np.float64)
    if X.shape != Xhat.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Xhat.shape}")
    return frobenius_sq(X - Xhat) / X.size


@dataclass(frozen=True)
class ReconstructionMetrics:
    v_ex: float
    m_se: float
    alpha: float


def reconstruction_metrics(X, Xhat) -> ReconstructionMetrics:
    """V_EX, MSE and the scale factor linking them: ``m_se == alpha * (100 - v_ex)``."""
    X = np.asarray(X, dtype=np.float64)
    alpha = frobenius_sq(X) / (100.0 * X.size)
    return ReconstructionMetrics(variance_explained(X, Xhat), mse(X, Xhat), alpha)
