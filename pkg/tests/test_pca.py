import numpy as np
import pytest

from linrecover.matrix import center_columns, variance_explained
from linrecover.pca import components_for_threshold, fit_pca, pca_reconstruct, pca_scores


def _data(seed, m=40, v=6):
    rng = np.random.default_rng(seed)
    Xc, _ = center_columns(rng.standard_normal((m, 3)) @ rng.standard_normal((3, v)) + 0.1 * rng.standard_normal((m, v)))
    return Xc


def test_loadings_orthonormal_and_sign_fixed():
    model = fit_pca(_data(0))
    V = model.loadings
    np.testing.assert_allclose(V.T @ V, np.eye(V.shape[1]), atol=1e-12)
    pivot = np.argmax(np.abs(V), axis=0)
    assert np.all(V[pivot, np.arange(V.shape[1])] > 0)


def test_cumulative_vex_matches_reconstruction():
    Xc = _data(1)
    model = fit_pca(Xc)
    for k in range(1, model.rank + 1):
        Xhat = pca_reconstruct(model, pca_scores(model, Xc, k))
        assert variance_explained(Xc, Xhat) == pytest.approx(model.cumulative_vex[k - 1], abs=1e-9)
    assert model.cumulative_vex[-1] == pytest.approx(100.0)
    assert np.all(np.diff(model.cumulative_vex) >= -1e-12)


def test_matches_eigendecomposition_of_covariance():
    Xc = _data(2)
    model = fit_pca(Xc)
    evals = np.sort(np.linalg.eigvalsh(Xc.T @ Xc / (Xc.shape[0] - 1)))[::-1][: model.rank]
    np.testing.assert_allclose(model.component_variances, evals, rtol=1e-9)


def test_rank_deficient():
    rng = np.random.default_rng(3)
    Xc, _ = center_columns(rng.standard_normal((10, 2)) @ rng.standard_normal((2, 5)))
    assert fit_pca(Xc).rank == 2


@pytest.mark.parametrize("tau,expected", [(50.0, 1), (100.0, 2)])
def test_components_for_threshold_small(tau, expected):
    # two orthogonal directions carrying 80% / 20% of the energy
    Xc = np.array([[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    assert components_for_threshold(fit_pca(Xc), tau) == expected


def test_components_for_threshold_exact_boundary():
    Xc = np.array([[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    assert components_for_threshold(fit_pca(Xc), 80.0) == 1


def test_components_for_threshold_validates():
    with pytest.raises(ValueError):
        components_for_threshold(fit_pca(_data(4)), 0.0)


def test_components_for_threshold_monotone_in_tau():
    model = fit_pca(_data(5))
    counts = [components_for_threshold(model, t) for t in np.linspace(1, 100, 60)]
    assert counts == sorted(counts)
