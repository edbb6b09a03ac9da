"""Recovery of Linear Components (RLC) and the deep FSCA-SDE baseline.

An RLC model keeps a linear encoder/decoder pair (selected variables or
leading principal components) and adds a small network that predicts, from
the k-dimensional code, the scores of the next ``k_bar = k_lin - k``
principal directions of the linear reconstruction residual.  ``k_lin`` is
the number of principal components needed to reach the variance threshold
``tau`` on the fitting rows.  Reconstruction is

    Xhat = T_k B + net(T_k) P_r^T + means

so a network with zero output reduces exactly to the linear model.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .matrix import as_data_matrix, center_columns
from .neuralnet import (
    MlpNetwork,
    TrainConfig,
    TrainReport,
    forward,
    init_network,
    param_count,
    pretrain_stacked,
    train,
)
from .pca import components_for_threshold, fit_pca
from .selection import SelectionModel, fsca_select

FORMAT_VERSION = 1

# Plain fixed-step descent cannot fit the deep decoder within the epoch
# budget; Adam with larger batches and a longer patience can.
SDE_TRAIN_CONFIG = TrainConfig(learning_rate=0.01, batch_size=32, patience=50, optimizer="adam")


def _leading_directions(R: np.ndarray, n: int) -> np.ndarray:
    """First `n` right singular vectors of R, largest-magnitude entry positive."""
    if n == 0:
        return np.zeros((R.shape[1], 0))
    _, _, Vt = np.linalg.svd(R, full_matrices=False)
    V = Vt[:n].T.copy()
    pivot = np.argmax(np.abs(V), axis=0)
    V *= np.sign(V[pivot, np.arange(n)])
    return V


def _validation_rows(n: int, val_fraction: float, seed, val_index) -> tuple[np.ndarray, np.ndarray]:
    if val_index is not None:
        va = np.unique(np.asarray(val_index, dtype=int))
        if va.size and (va.min() < 0 or va.max() >= n):
            raise ValueError("validation row index out of range")
        tr = np.setdiff1d(np.arange(n), va)
    else:
        order = np.random.default_rng(seed).permutation(n)
        n_val = int(math.floor(val_fraction * n))
        va, tr = np.sort(order[:n_val]), np.sort(order[n_val:])
    if tr.size == 0:
        raise ValueError("no training rows left after carving the validation split")
    return tr, va


def _standardise(A: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = A[rows].mean(axis=0)
    sd = A[rows].std(axis=0)
    sd[sd == 0.0] = 1.0
    return mu, sd


def _fold_scaling(net: MlpNetwork, in_mu, in_sd, out_mu, out_sd) -> None:
    """Absorb input/output standardisation into the first and last layers."""
    W1 = net.weights[0] / in_sd
    net.biases[0] = net.biases[0] - W1 @ in_mu
    net.weights[0] = W1
    # only valid because the output layer is linear
    net.weights[-1] = net.weights[-1] * out_sd[:, None]
    net.biases[-1] = net.biases[-1] * out_sd + out_mu


def _train_mapping(net, inputs, targets, tr, va, cfg) -> TrainReport:
    in_mu, in_sd = _standardise(inputs, tr)
    out_mu, out_sd = _standardise(targets, tr)
    Xn = (inputs - in_mu) / in_sd
    Yn = (targets - out_mu) / out_sd
    if va.size:
        report = train(net, Xn[tr], Yn[tr], Xn[va], Yn[va], cfg)
    else:
        report = train(net, Xn[tr], Yn[tr], cfg=cfg)
    _fold_scaling(net, in_mu, in_sd, out_mu, out_sd)
    return report


@dataclass
class RlcModel:
    """Fitted RLC model.

    ``selection`` is set for FSCA encoding; otherwise the code is the first
    ``k`` principal component scores, whose loadings are ``pca_loadings``.
    """

    encoder: str
    k: int
    tau: float
    k_lin: int
    k_bar: int
    h: int
    linear_coeffs: np.ndarray
    residual_loadings: np.ndarray
    recovery_net: MlpNetwork | None
    column_means: np.ndarray
    selection: SelectionModel | None = None
    pca_loadings: np.ndarray | None = None
    train_report: TrainReport | None = None

    @property
    def n_variables(self) -> int:
        return self.column_means.shape[0]

    def encode(self, X_new) -> np.ndarray:
        Xc = _centre_new(self.column_means, X_new)
        return self._code(Xc)

    def _code(self, Xc: np.ndarray) -> np.ndarray:
        if self.encoder == "fsca":
            return Xc[:, list(self.selection.indices)]
        return Xc @ self.pca_loadings

    def to_dict(self) -> dict:
        enc = (
            {"type": "fsca", "indices": list(self.selection.indices)}
            if self.encoder == "fsca"
            else {"type": "pca", "loadings": self.pca_loadings.ravel().tolist()}
        )
        return {
            "format_version": FORMAT_VERSION,
            "kind": "rlc",
            "encoder": enc,
            "k": self.k,
            "tau": self.tau,
            "k_lin": self.k_lin,
            "k_bar": self.k_bar,
            "h": self.h,
            "n_variables": self.n_variables,
            "column_means": self.column_means.tolist(),
            "linear_coeffs": self.linear_coeffs.ravel().tolist(),
            "residual_loadings": self.residual_loadings.ravel().tolist(),
            "recovery_net": None if self.recovery_net is None else self.recovery_net.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RlcModel":
        _check_doc(doc, "rlc")
        v, k, k_bar = int(doc["n_variables"]), int(doc["k"]), int(doc["k_bar"])
        enc = doc["encoder"]
        selection = pca_loadings = None
        B = np.asarray(doc["linear_coeffs"], dtype=np.float64).reshape(k, v)
        if enc["type"] == "fsca":
            selection = SelectionModel(tuple(int(i) for i in enc["indices"]), np.full(k, np.nan), B)
        elif enc["type"] == "pca":
            pca_loadings = np.asarray(enc["loadings"], dtype=np.float64).reshape(v, k)
        else:
            raise ValueError(f"unknown encoder type {enc['type']!r}")
        net = doc.get("recovery_net")
        return cls(
            encoder=enc["type"],
            k=k,
            tau=float(doc["tau"]),
            k_lin=int(doc["k_lin"]),
            k_bar=k_bar,
            h=int(doc["h"]),
            linear_coeffs=B,
            residual_loadings=np.asarray(doc["residual_loadings"], dtype=np.float64).reshape(v, k_bar),
            recovery_net=None if net is None else MlpNetwork.from_dict(net),
            column_means=np.asarray(doc["column_means"], dtype=np.float64),
            selection=selection,
            pca_loadings=pca_loadings,
        )


def _check_doc(doc: dict, kind: str) -> None:
    if doc.get("kind") != kind:
        raise ValueError(f"expected a {kind!r} model document, got {doc.get('kind')!r}")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')!r}")


def _centre_new(means: np.ndarray, X_new) -> np.ndarray:
    X = as_data_matrix(X_new, "X_new")
    if X.shape[1] != means.shape[0]:
        raise ValueError(f"expected {means.shape[0]} columns, got {X.shape[1]}")
    return X - means


def recovery_param_budget(h: int, k_lin: int, k: int) -> int:
    """Weights and biases of a ``[k, h, k_lin - k]`` recovery network."""
    return h * k_lin + h + k_lin - k


def _check_args(v: int, k: int, tau: float, h: int) -> None:
    if not 1 <= k <= v:
        raise ValueError(f"k must be in [1, {v}], got {k}")
    if not 0.0 < tau <= 100.0:
        raise ValueError(f"tau must be in (0, 100], got {tau}")
    if h < 1:
        raise ValueError(f"h must be >= 1, got {h}")


def _fit_rlc(encoder, X, k, tau, h, train_cfg, val_fraction, val_index, train_network) -> RlcModel:
    X = as_data_matrix(X)
    n, v = X.shape
    _check_args(v, k, tau, h)
    cfg = train_cfg or TrainConfig()
    Xc, means = center_columns(X)
    pca = fit_pca(Xc)
    k_lin = components_for_threshold(pca, tau)

    selection = pca_loadings = None
    if encoder == "fsca":
        selection = fsca_select(Xc, k)
        T = Xc[:, list(selection.indices)]
        B = selection.coefficients
    else:
        if k > pca.rank:
            raise ValueError(f"k={k} exceeds the PCA rank {pca.rank} of the data")
        pca_loadings = pca.loadings[:, :k].copy()
        T = Xc @ pca_loadings
        B = pca_loadings.T.copy()

    k_bar = max(k_lin - k, 0)
    model = RlcModel(
        encoder=encoder, k=k, tau=float(tau), k_lin=k_lin, k_bar=k_bar, h=h,
        linear_coeffs=B, residual_loadings=np.zeros((v, 0)), recovery_net=None,
        column_means=means, selection=selection, pca_loadings=pca_loadings,
    )
    if k_bar == 0:
        return model

    residual = Xc - T @ B
    P_r = _leading_directions(residual, k_bar)
    scores = residual @ P_r
    net = init_network([k, h, k_bar], ["tanh", "linear"], np.random.default_rng(cfg.seed))
    assert param_count(net) == recovery_param_budget(h, k_lin, k)
    if train_network:
        tr, va = _validation_rows(n, val_fraction, cfg.seed, val_index)
        model.train_report = _train_mapping(net, T, scores, tr, va, dataclasses.replace(cfg, gamma_sparsity=0.0))
    else:
        net.weights[-1][:] = 0.0
    model.residual_loadings = P_r
    model.recovery_net = net
    return model


def fit_fsca_rlc(X, k: int, tau: float = 99.0, h: int = 6, train_cfg: TrainConfig | None = None,
                 val_fraction: float = 0.2, val_index=None, train_network: bool = True) -> RlcModel:
    """Fit FSCA-RLC on the rows of `X` (the fitting rows; hold test rows out).

    Validation rows for early stopping are `val_index` if given, otherwise a
    seeded ``val_fraction`` of the rows. Centering, ``k_lin``, the selection
    and the residual directions use every row of `X`; the network trains on
    the non-validation rows only.

    With ``train_network=False`` the recovery network is built but left
    with a zero output layer, i.e. the model reconstructs like plain FSCA.
    """
    return _fit_rlc("fsca", X, k, tau, h, train_cfg, val_fraction, val_index, train_network)


def fit_pca_rlc(X, k: int, tau: float = 99.0, h: int = 6, train_cfg: TrainConfig | None = None,
                val_fraction: float = 0.2, val_index=None, train_network: bool = True) -> RlcModel:
    """As :func:`fit_fsca_rlc` with the first `k` principal component scores as code.

    The residual directions are then the principal directions k+1..k_lin.
    """
    return _fit_rlc("pca", X, k, tau, h, train_cfg, val_fraction, val_index, train_network)


def linear_reconstruct(model: RlcModel, X_new) -> np.ndarray:
    """Reconstruction from the linear encoder/decoder alone."""
    Xc = _centre_new(model.column_means, X_new)
    return model._code(Xc) @ model.linear_coeffs + model.column_means


def recovered_part(model: RlcModel, X_new) -> np.ndarray:
    """The network's contribution ``net(T_k) P_r^T`` to the reconstruction."""
    Xc = _centre_new(model.column_means, X_new)
    if model.recovery_net is None:
        return np.zeros_like(Xc)
    return forward(model.recovery_net, model._code(Xc)) @ model.residual_loadings.T


def rlc_reconstruct(model: RlcModel, X_new) -> np.ndarray:
    Xc = _centre_new(model.column_means, X_new)
    T = model._code(Xc)
    Xhat = T @ model.linear_coeffs
    if model.recovery_net is not None:
        Xhat = Xhat + forward(model.recovery_net, T) @ model.residual_loadings.T
    return Xhat + model.column_means


@dataclass
class SdeModel:
    selection: SelectionModel
    decoder_net: MlpNetwork
    column_means: np.ndarray
    train_report: TrainReport | None = None

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "sde",
            "indices": list(self.selection.indices),
            "n_variables": int(self.column_means.shape[0]),
            "column_means": self.column_means.tolist(),
            "decoder_net": self.decoder_net.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SdeModel":
        _check_doc(doc, "sde")
        idx = tuple(int(i) for i in doc["indices"])
        v = int(doc["n_variables"])
        sel = SelectionModel(idx, np.full(len(idx), np.nan), np.zeros((len(idx), v)))
        return cls(sel, MlpNetwork.from_dict(doc["decoder_net"]), np.asarray(doc["column_means"], dtype=np.float64))


def fit_fsca_sde(X, k: int, hidden_sizes=(11, 21), train_cfg: TrainConfig | None = None,
                 val_fraction: float = 0.2, val_index=None, hidden_activation: str = "logistic",
                 fine_tune: bool = True) -> SdeModel:
    """FSCA selection followed by a deep decoder ``[k, *hidden_sizes, v]``.

    The decoder is pre-trained layer by layer with the sparse-autoencoder
    objective, then (unless ``fine_tune=False``) fine-tuned end to end on
    the plain reconstruction error.
    """
    X = as_data_matrix(X)
    n, v = X.shape
    hidden = [int(h) for h in hidden_sizes]
    if not hidden:
        raise ValueError("hidden_sizes must name at least one hidden layer")
    if not 1 <= k <= v:
        raise ValueError(f"k must be in [1, {v}], got {k}")
    cfg = train_cfg or SDE_TRAIN_CONFIG
    Xc, means = center_columns(X)
    selection = fsca_select(Xc, k)
    T = Xc[:, list(selection.indices)]
    tr, va = _validation_rows(n, val_fraction, cfg.seed, val_index)

    sizes = [k, *hidden, v]
    acts = [hidden_activation] * len(hidden) + ["linear"]
    in_mu, in_sd = _standardise(T, tr)
    out_mu, out_sd = _standardise(Xc, tr)
    Tn = (T - in_mu) / in_sd
    Xn = (Xc - out_mu) / out_sd
    net = pretrain_stacked(sizes, acts, Tn[tr], cfg, targets=Xn[tr])
    report = None
    fine = dataclasses.replace(cfg, gamma_sparsity=0.0)
    if fine_tune and va.size:
        report = train(net, Tn[tr], Xn[tr], Tn[va], Xn[va], fine)
    elif fine_tune:
        report = train(net, Tn[tr], Xn[tr], cfg=fine)
    _fold_scaling(net, in_mu, in_sd, out_mu, out_sd)
    return SdeModel(selection, net, means, report)


def sde_reconstruct(model: SdeModel, X_new) -> np.ndarray:
    Xc = _centre_new(model.column_means, X_new)
    T = Xc[:, list(model.selection.indices)]
    return forward(model.decoder_net, T) + model.column_means
