"""Principal component analysis through the SVD of a centered data matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matrix import as_data_matrix

RANK_RTOL = 1e-12


@dataclass(frozen=True)
class PcaModel:
    """Fitted PCA.

    Attributes
    ----------
    loadings : ndarray (v, r)
        Orthonormal principal directions, strongest first. Each column is
        signed so that its largest-magnitude entry is positive.
    component_variances : ndarray (r,)
        Sample variances ``s**2 / (m - 1)`` of the component scores.
    cumulative_vex : ndarray (r,)
        Percentage variance explained by the first 1..r components.
    """

    loadings: np.ndarray
    component_variances: np.ndarray
    cumulative_vex: np.ndarray

    @property
    def rank(self) -> int:
        return self.loadings.shape[1]

    @property
    def n_variables(self) -> int:
        return self.loadings.shape[0]


def fit_pca(Xc) -> PcaModel:
    """Fit PCA to already-centered data `Xc`.

    Components whose singular value falls below ``v * s_max * 1e-12`` are
    dropped, so ``rank`` can be smaller than ``min(m, v)``.
    """
    Xc = as_data_matrix(Xc, "Xc")
    m, v = Xc.shape
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("cannot fit PCA to an all-zero matrix")
    total = float(np.sum(s**2))
    keep = s >= v * s[0] * RANK_RTOL
    s, V = s[keep], Vt[keep].T.copy()

    pivot = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivot, np.arange(V.shape[1])])
    V *= signs

    energy = s**2
    cumulative = 100.0 * np.cumsum(energy) / total
    return PcaModel(
        loadings=V,
        component_variances=energy / max(m - 1, 1),
        cumulative_vex=np.minimum(cumulative, 100.0),
    )


def _check_k(model: PcaModel, k: int) -> None:
    if not 1 <= k <= model.rank:
        raise ValueError(f"k must be in [1, {model.rank}], got {k}")


def pca_scores(model: PcaModel, Xc, k: int) -> np.ndarray:
    """Project centered rows onto the first `k` loadings."""
    _check_k(model, k)
    Xc = as_data_matrix(Xc, "Xc")
    if Xc.shape[1] != model.n_variables:
        raise ValueError(f"expected {model.n_variables} columns, got {Xc.shape[1]}")
    return Xc @ model.loadings[:, :k]


def pca_reconstruct(model: PcaModel, scores) -> np.ndarray:
    """Map scores back to (centered) variable space."""
    T = as_data_matrix(scores, "scores")
    k = T.shape[1]
    if k > model.rank:
        raise ValueError(f"scores have {k} columns but the model keeps only {model.rank}")
    return T @ model.loadings[:, :k].T


def components_for_threshold(model: PcaModel, tau: float) -> int:
    """Smallest k whose cumulative variance explained reaches `tau` percent.

    Falls back to the full rank when `tau` is never reached.
    """
    if not 0.0 < tau <= 100.0:
        raise ValueError(f"tau must be in (0, 100], got {tau}")
    # absorbs the last-ulp shortfall of an exact 100% fit
    hit = np.nonzero(model.cumulative_vex >= tau - 1e-9)[0]
    return int(hit[0]) + 1 if hit.size else model.rank
