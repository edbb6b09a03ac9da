"""Greedy unsupervised variable selection and backward refinement.

All three algorithms rank a candidate column by how much of the current
residual it explains once added to the selected set.  With ``R`` the part of
the data not yet explained and ``r_j`` its j-th column, adding variable j
removes ``||R^T r_j||^2 / ||r_j||^2`` from ``||R||_F^2``, which is exactly the
least-squares V_EX gain, so no per-candidate regression is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matrix import as_data_matrix, frobenius_sq, least_squares_reconstruct, variance_explained

# residual column norms below this fraction of the raw column norm are noise
_DEGENERATE_RTOL = 1e-10
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SelectionModel:
    """An ordered subset of variables and its least-squares decoder.

    Attributes
    ----------
    indices : tuple of int
        Selected column indices, in selection order.
    vex_profile : ndarray (k,)
        V_EX using the first 1..k selected columns.
    coefficients : ndarray (k, v)
        Least-squares map from the selected columns to all columns.
    method : str
        "fsca", "spbr" or "mpbr".
    passes : int
        Refinement passes performed (0 for plain FSCA).
    """

    indices: tuple[int, ...]
    vex_profile: np.ndarray
    coefficients: np.ndarray
    method: str = "fsca"
    passes: int = 0

    @property
    def k(self) -> int:
        return len(self.indices)

    @property
    def vex(self) -> float:
        return float(self.vex_profile[-1])

    def encode(self, Xc) -> np.ndarray:
        return np.asarray(Xc, dtype=np.float64)[:, list(self.indices)]

    def reconstruct(self, Xc) -> np.ndarray:
        return self.encode(Xc) @ self.coefficients


def _deflate(R: np.ndarray, j: int, norms_sq: np.ndarray) -> None:
    """Project the residual of column j out of every column of R, in place.

    Columns whose residual is numerically zero are skipped: their direction
    is rounding noise and would corrupt R.
    """
    col = R[:, j].copy()
    d = float(col @ col)
    if norms_sq[j] == 0.0 or d <= (_DEGENERATE_RTOL**2) * norms_sq[j]:
        return
    q = col / np.sqrt(d)
    R -= np.outer(q, q @ R)
    # re-orthogonalise once; classical Gram-Schmidt loses accuracy otherwise
    R -= np.outer(q, q @ R)


def _residual(X: np.ndarray, indices, norms_sq: np.ndarray) -> np.ndarray:
    R = X.copy()
    for j in indices:
        _deflate(R, j, norms_sq)
    return R


def _gains(R: np.ndarray, col_norms_sq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Residual-energy reduction per candidate, plus a usable-candidate mask."""
    G = R.T @ R
    d = np.diag(G).copy()
    usable = (col_norms_sq > 0.0) & (d > (_DEGENERATE_RTOL**2) * col_norms_sq)
    gains = np.zeros(R.shape[1])
    gains[usable] = np.sum(G[:, usable] ** 2, axis=0) / d[usable]
    return gains, usable


def _pick(gains: np.ndarray, usable: np.ndarray, candidates: np.ndarray, prefer: int | None = None) -> int:
    """Best candidate; ties go to `prefer` if it is tied, else to the lowest index."""
    ok = candidates[usable[candidates]]
    if ok.size == 0:
        if prefer is not None and prefer in candidates:
            return int(prefer)
        return int(candidates.min())
    best = gains[ok].max()
    tied = ok[gains[ok] >= best - _TIE_RTOL * abs(best)]
    if prefer is not None and prefer in tied:
        return int(prefer)
    return int(tied.min())


def _profile(X: np.ndarray, indices) -> np.ndarray:
    total = frobenius_sq(X)
    norms = np.sum(X * X, axis=0)
    R = X.copy()
    out = []
    for j in indices:
        _deflate(R, j, norms)
        out.append(100.0 * (1.0 - frobenius_sq(R) / total))
    return np.maximum.accumulate(np.array(out))


def _finish(X: np.ndarray, indices: list[int], method: str, passes: int) -> SelectionModel:
    B, _ = least_squares_reconstruct(X[:, indices], X)
    return SelectionModel(
        indices=tuple(int(i) for i in indices),
        vex_profile=_profile(X, indices),
        coefficients=B,
        method=method,
        passes=passes,
    )


def _prepare(Xc) -> tuple[np.ndarray, float, np.ndarray]:
    X = as_data_matrix(Xc, "Xc")
    total = frobenius_sq(X)
    if total == 0.0:
        raise ValueError("cannot select variables from an all-zero matrix")
    return X, total, np.sum(X * X, axis=0)


def fsca_select(Xc, k: int) -> SelectionModel:
    """Forward selection: add, one at a time, the column that maximises V_EX.

    Ties go to the lowest column index. Columns whose residual is
    numerically zero are only taken once nothing else is left.
    """
    X, _, norms = _prepare(Xc)
    v = X.shape[1]
    if not 1 <= k <= v:
        raise ValueError(f"k must be in [1, {v}], got {k}")
    R = X.copy()
    chosen: list[int] = []
    for _ in range(k):
        gains, usable = _gains(R, norms)
        candidates = np.setdiff1d(np.arange(v), chosen)
        j = _pick(gains, usable, candidates)
        chosen.append(j)
        _deflate(R, j, norms)
    return _finish(X, chosen, "fsca", 0)


def _refine_pass(X: np.ndarray, norms: np.ndarray, indices: list[int]) -> list[int]:
    v = X.shape[1]
    current = list(indices)
    for pos in range(len(current)):
        others = current[:pos] + current[pos + 1 :]
        R = _residual(X, others, norms)
        gains, usable = _gains(R, norms)
        candidates = np.setdiff1d(np.arange(v), others)
        current[pos] = _pick(gains, usable, candidates, prefer=current[pos])
    return current


def _check_model(X: np.ndarray, model: SelectionModel) -> None:
    v = X.shape[1]
    idx = model.indices
    if len(set(idx)) != len(idx) or any(not 0 <= i < v for i in idx):
        raise ValueError(f"invalid selection {idx} for {v} variables")


def spbr_refine(Xc, model: SelectionModel) -> SelectionModel:
    """One backward-refinement pass over the selected variables.

    Each position, in selection order, is given to whichever variable
    (the incumbent included) best complements the other k-1; the incumbent
    keeps its place on ties.
    """
    X, _, norms = _prepare(Xc)
    _check_model(X, model)
    refined = _refine_pass(X, norms, list(model.indices))
    return _finish(X, refined, "spbr", 1)


def mpbr_refine(Xc, model: SelectionModel, max_passes: int = 100) -> SelectionModel:
    """Repeat refinement passes until a pass leaves the selected set unchanged."""
    if max_passes < 1:
        raise ValueError(f"max_passes must be >= 1, got {max_passes}")
    X, _, norms = _prepare(Xc)
    _check_model(X, model)
    current = list(model.indices)
    passes = 0
    while passes < max_passes:
        refined = _refine_pass(X, norms, current)
        passes += 1
        changed = set(refined) != set(current)
        current = refined
        if not changed:
            break
    return _finish(X, current, "mpbr", passes)


def select(Xc, k: int, method: str = "fsca", max_passes: int = 100) -> SelectionModel:
    """FSCA followed by the requested refinement."""
    model = fsca_select(Xc, k)
    if method == "fsca":
        return model
    if method == "spbr":
        return spbr_refine(Xc, model)
    if method == "mpbr":
        return mpbr_refine(Xc, model, max_passes)
    raise ValueError(f"unknown selection method {method!r}")


def subset_vex(Xc, indices) -> float:
    """V_EX of the least-squares reconstruction of `Xc` from the given columns."""
    X = as_data_matrix(Xc, "Xc")
    _, Xhat = least_squares_reconstruct(X[:, list(indices)], X)
    return variance_explained(X, Xhat)


def selection_frequency(runs, v: int) -> np.ndarray:
    """Fraction of runs in which each of the `v` variables was selected."""
    counts = np.zeros(v)
    runs = list(runs)
    for run in runs:
        idx = run.indices if isinstance(run, SelectionModel) else run
        for i in set(int(j) for j in idx):
            if not 0 <= i < v:
                raise ValueError(f"index {i} out of range for {v} variables")
            counts[i] += 1
    return counts / len(runs) if runs else counts
