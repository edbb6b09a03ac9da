import numpy as np
import pytest

from linrecover.synth import OFFSET, SynthConfig, generate_xsynthetic, group_recovery_check, nonlinear_block, tansig


def test_shape_and_finite():
    X = generate_xsynthetic(SynthConfig(m=100, v=30, sigma2=0.01, seed=1))
    assert X.shape == (100, 30)
    assert np.isfinite(X).all()


def test_noise_free_identities():
    X = generate_xsynthetic(SynthConfig(m=300, v=20, sigma2=0.0, seed=4)) - OFFSET
    np.testing.assert_allclose(X[:, 0] ** 2 + X[:, 1] ** 2, 1.0, atol=1e-12)
    np.testing.assert_allclose(X[:, 2], X[:, 0] ** 7, atol=1e-12)


def test_bit_identical_regeneration():
    cfg = SynthConfig(m=50, v=15, sigma2=0.01, seed=9)
    assert generate_xsynthetic(cfg).tobytes() == generate_xsynthetic(cfg).tobytes()


def test_linear_map_independent_of_noise_level():
    a = generate_xsynthetic(SynthConfig(m=40, v=12, sigma2=0.0, seed=2)) - OFFSET
    b = generate_xsynthetic(SynthConfig(m=40, v=12, sigma2=1e-30, seed=2)) - OFFSET
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_bounded_column_means_near_offset():
    m = 2000
    X = generate_xsynthetic(SynthConfig(m=m, v=10, seed=3))
    # x1 = sin(g), x2 = cos(g), x4 = sign(g) tansig(g): all bounded by 1
    for j in (0, 1, 3):
        centred = X[:, j].mean() - OFFSET
        assert abs(centred - _population_mean(j)) < 5 / np.sqrt(m)


def _population_mean(j):
    g = np.random.default_rng(123).standard_normal(400_000)
    return {0: np.sin(g), 1: np.cos(g), 3: np.sign(g) * tansig(g)}[j].mean()


def test_tansig_is_tanh():
    x = np.linspace(-5, 5, 101)
    np.testing.assert_allclose(tansig(x), np.tanh(x), atol=1e-15)


def test_nonlinear_block_uses_noisy_earlier_values():
    g = np.array([[0.3, -0.2, 0.5]])
    noise = np.zeros((1, 10))
    noise[0, 0] = 0.1
    out = nonlinear_block(g, noise)
    assert out[0, 2] == pytest.approx((np.sin(0.3) + 0.1) ** 7)


@pytest.mark.parametrize("bad", [dict(v=9), dict(m=0), dict(sigma2=-1.0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SynthConfig(**bad)


@pytest.mark.parametrize("idx,ok", [((0, 6, 9), True), ((0, 1, 2), False), ((5, 8, 9, 20), True), ((6, 9), False)])
def test_group_recovery_check(idx, ok):
    assert group_recovery_check(idx) is ok
