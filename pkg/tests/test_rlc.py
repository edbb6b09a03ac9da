import json

import numpy as np
import pytest

from linrecover.matrix import center_columns, variance_explained
from linrecover.neuralnet import TrainConfig, param_count
from linrecover.pca import fit_pca, pca_reconstruct, pca_scores
from linrecover.rlc import (
    RlcModel,
    SdeModel,
    fit_fsca_rlc,
    fit_fsca_sde,
    fit_pca_rlc,
    linear_reconstruct,
    recovered_part,
    recovery_param_budget,
    rlc_reconstruct,
    sde_reconstruct,
)
from linrecover.selection import fsca_select
from linrecover.synth import SynthConfig, generate_xsynthetic

FAST = TrainConfig(max_epochs=30)


@pytest.fixture(scope="module")
def data():
    return generate_xsynthetic(SynthConfig(m=150, v=20, sigma2=0.0, seed=3))


def _vex(X, Xhat):
    mu = X.mean(axis=0)
    return variance_explained(X - mu, Xhat - mu)


def test_zero_network_equals_fsca(data):
    model = fit_fsca_rlc(data, 3, train_network=False)
    Xc, _ = center_columns(data)
    fsca = fsca_select(Xc, 3)
    assert model.selection.indices == fsca.indices
    assert _vex(data, rlc_reconstruct(model, data)) == pytest.approx(fsca.vex, abs=1e-9)
    assert not recovered_part(model, data).any()


def test_zero_network_equals_pca(data):
    model = fit_pca_rlc(data, 2, train_network=False)
    Xc, _ = center_columns(data)
    p = fit_pca(Xc)
    expected = variance_explained(Xc, pca_reconstruct(p, pca_scores(p, Xc, 2)))
    assert _vex(data, rlc_reconstruct(model, data)) == pytest.approx(expected, abs=1e-9)


def test_reconstruction_is_linear_plus_recovered(data):
    model = fit_fsca_rlc(data, 2, train_cfg=FAST)
    np.testing.assert_allclose(
        rlc_reconstruct(model, data), linear_reconstruct(model, data) + recovered_part(model, data), atol=1e-10
    )


def test_structure_and_budget(data):
    model = fit_fsca_rlc(data, 2, tau=99.0, h=6, train_cfg=FAST)
    assert model.k_bar == model.k_lin - 2
    assert model.recovery_net.layer_sizes == [2, 6, model.k_bar]
    assert param_count(model.recovery_net) == recovery_param_budget(6, model.k_lin, 2)
    P = model.residual_loadings
    np.testing.assert_allclose(P.T @ P, np.eye(model.k_bar), atol=1e-10)


def test_training_does_not_hurt_fit_rows(data):
    lin = fit_fsca_rlc(data, 3, train_network=False)
    rlc = fit_fsca_rlc(data, 3, train_cfg=TrainConfig(max_epochs=200))
    # the untrained (zero) output is a valid starting point, so the trained fit is not worse by much
    assert _vex(data, rlc_reconstruct(rlc, data)) > _vex(data, rlc_reconstruct(lin, data)) - 0.5


def test_degenerate_no_recovery_needed(data):
    model = fit_fsca_rlc(data, 15, tau=50.0)
    assert model.k_bar == 0 and model.recovery_net is None
    Xc, _ = center_columns(data)
    assert _vex(data, rlc_reconstruct(model, data)) == pytest.approx(fsca_select(Xc, 15).vex, abs=1e-9)


@pytest.mark.parametrize("fit", [fit_fsca_rlc, fit_pca_rlc])
def test_rlc_serialisation(data, fit):
    model = fit(data, 3, train_cfg=FAST)
    back = RlcModel.from_dict(json.loads(json.dumps(model.to_dict())))
    np.testing.assert_array_equal(rlc_reconstruct(back, data), rlc_reconstruct(model, data))


def test_sde_shapes_and_serialisation(data):
    cfg = TrainConfig(max_epochs=10, optimizer="adam", learning_rate=0.01)
    model = fit_fsca_sde(data, 3, (11, 21), cfg)
    assert model.decoder_net.layer_sizes == [3, 11, 21, 20]
    back = SdeModel.from_dict(json.loads(json.dumps(model.to_dict())))
    np.testing.assert_array_equal(sde_reconstruct(back, data), sde_reconstruct(model, data))
    assert 0.0 < _vex(data, sde_reconstruct(model, data)) <= 100.0


def test_explicit_validation_rows(data):
    model = fit_fsca_rlc(data, 3, train_cfg=FAST, val_index=np.arange(120, 150))
    assert model.train_report.epochs_run >= 1


@pytest.mark.parametrize("kwargs", [dict(k=0), dict(k=21), dict(k=2, tau=0.0), dict(k=2, h=0)])
def test_argument_validation(data, kwargs):
    with pytest.raises(ValueError):
        fit_fsca_rlc(data, **kwargs)


def test_wrong_width_rejected(data):
    model = fit_fsca_rlc(data, 2, train_network=False)
    with pytest.raises(ValueError):
        rlc_reconstruct(model, data[:, :5])


def test_wrong_document_kind(data):
    doc = fit_fsca_rlc(data, 2, train_network=False).to_dict()
    with pytest.raises(ValueError):
        SdeModel.from_dict(doc)


def test_zero_network_equivalence_on_held_out_rows(data):
    model = fit_fsca_rlc(data[:100], 3, train_network=False)
    held = data[100:]
    np.testing.assert_array_equal(rlc_reconstruct(model, held), linear_reconstruct(model, held))
