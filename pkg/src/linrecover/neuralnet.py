"""Small fully connected networks trained by minibatch gradient descent.

Weights follow the ``W_l`` convention of shape ``(n_l, n_{l-1})``; a layer
maps row-major activations ``A`` to ``f(A @ W.T + b)``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1
RHO_EPS = 1e-8


class TrainingDivergedError(FloatingPointError):
    """Raised when the training or validation loss stops being finite."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


def _logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# activation -> (f(z), f'(z) expressed through z and a = f(z))
ACTIVATIONS = {
    "linear": (lambda z: z, lambda z, a: np.ones_like(a)),
    "logistic": (_logistic, lambda z, a: a * (1.0 - a)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0.0).astype(a.dtype)),
}


@dataclass
class MlpNetwork:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        L = len(self.layer_sizes) - 1
        if L < 1:
            raise ValueError("a network needs at least an input and an output layer")
        if not (len(self.weights) == len(self.biases) == len(self.activations) == L):
            raise ValueError("need one weight matrix, bias vector and activation per layer")
        for l in range(L):
            n_out, n_in = self.layer_sizes[l + 1], self.layer_sizes[l]
            if self.weights[l].shape != (n_out, n_in):
                raise ValueError(f"layer {l + 1}: weight shape {self.weights[l].shape} != {(n_out, n_in)}")
            if self.biases[l].shape != (n_out,):
                raise ValueError(f"layer {l + 1}: bias shape {self.biases[l].shape} != {(n_out,)}")
            if self.activations[l] not in ACTIVATIONS:
                raise ValueError(f"unknown activation {self.activations[l]!r}")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def bottleneck(self) -> int | None:
        """Layer number (1-based) of the narrowest hidden layer, if any."""
        hidden = self.layer_sizes[1:-1]
        if not hidden:
            return None
        return 1 + int(np.argmin(hidden))

    def copy(self) -> "MlpNetwork":
        return copy.deepcopy(self)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "layer_sizes": list(self.layer_sizes),
            "activations": list(self.activations),
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpNetwork":
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported network format version {doc.get('format_version')!r}")
        sizes = [int(n) for n in doc["layer_sizes"]]
        weights = [
            np.asarray(w, dtype=np.float64).reshape(sizes[l + 1], sizes[l])
            for l, w in enumerate(doc["weights"])
        ]
        biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
        return cls(sizes, weights, biases, list(doc["activations"]))


def init_network(layer_sizes, activations, rng=None) -> MlpNetwork:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` weights and zero biases.

    `activations` is either one name per layer or a single name for every
    layer.
    """
    sizes = [int(n) for n in layer_sizes]
    if any(n < 1 for n in sizes):
        raise ValueError(f"layer sizes must be positive, got {sizes}")
    L = len(sizes) - 1
    if isinstance(activations, str):
        activations = [activations] * L
    rng = np.random.default_rng(rng)
    weights, biases = [], []
    for l in range(L):
        bound = 1.0 / math.sqrt(sizes[l])
        weights.append(rng.uniform(-bound, bound, size=(sizes[l + 1], sizes[l])))
        biases.append(np.zeros(sizes[l + 1]))
    return MlpNetwork(sizes, weights, biases, list(activations))


def param_count(net: MlpNetwork) -> int:
    return sum(W.size + b.size for W, b in zip(net.weights, net.biases))


def _check_input(net: MlpNetwork, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.n_inputs:
        raise ValueError(f"expected input of width {net.n_inputs}, got shape {X.shape}")
    return X


def _forward_trace(net: MlpNetwork, X: np.ndarray):
    zs, acts = [], [X]
    A = X
    for l, (W, b, name) in enumerate(zip(net.weights, net.biases, net.activations)):
        Z = A @ W.T + b
        A = ACTIVATIONS[name][0](Z)
        if not np.all(np.isfinite(A)):
            raise FloatingPointError(f"non-finite activations in layer {l + 1}")
        zs.append(Z)
        acts.append(A)
    return zs, acts


def forward(net: MlpNetwork, X) -> np.ndarray:
    """Evaluate the network on the rows of `X`."""
    X = _check_input(net, X)
    return _forward_trace(net, X)[1][-1]


def kl_bernoulli(rho: float, rho_hat):
    """KL divergence between Bernoulli(rho) and Bernoulli(rho_hat), natural log.

    `rho_hat` is clamped into ``[1e-8, 1 - 1e-8]``.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    r = np.clip(np.asarray(rho_hat, dtype=np.float64), RHO_EPS, 1.0 - RHO_EPS)
    out = rho * np.log(rho / r) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - r))
    return float(out) if out.ndim == 0 else out


def _loss_terms(net, acts, Y, lambda_l2, gamma, rho):
    out = acts[-1]
    m, n_out = out.shape
    data = float(np.sum((Y - out) ** 2)) / (m * n_out)
    decay = 0.5 * lambda_l2 * sum(float(np.sum(W * W)) for W in net.weights[:-1])
    sparsity = 0.0
    bn = net.bottleneck()
    if gamma and bn is not None:
        sparsity = gamma * float(np.sum(kl_bernoulli(rho, acts[bn].mean(axis=0))))
    return data, decay, sparsity


def sparse_loss(net: MlpNetwork, X, Y, lambda_l2: float = 0.0, gamma: float = 0.0, rho: float = 0.05) -> float:
    """Mean squared error plus weight decay on all but the output layer plus
    a KL sparsity penalty on the mean activation of the bottleneck units."""
    X = _check_input(net, X)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] != X.shape[0]:
        raise ValueError("X and Y must have the same number of rows")
    _, acts = _forward_trace(net, X)
    return sum(_loss_terms(net, acts, Y, lambda_l2, gamma, rho))


def gradients(net: MlpNetwork, X, Y, lambda_l2: float = 0.0, gamma: float = 0.0, rho: float = 0.05):
    """Analytic gradient of :func:`sparse_loss`.

    Returns
    -------
    list of (dW, db)
        One pair per layer, shaped like the layer's parameters.
    """
    X = _check_input(net, X)
    Y = np.asarray(Y, dtype=np.float64)
    zs, acts = _forward_trace(net, X)
    m, n_out = acts[-1].shape
    bn = net.bottleneck() if gamma else None

    grads = [None] * net.n_layers
    dA = 2.0 * (acts[-1] - Y) / (m * n_out)
    for l in range(net.n_layers - 1, -1, -1):
        layer = l + 1
        if layer == bn:
            rho_hat = acts[layer].mean(axis=0)
            inside = (rho_hat >= RHO_EPS) & (rho_hat <= 1.0 - RHO_EPS)
            r = np.clip(rho_hat, RHO_EPS, 1.0 - RHO_EPS)
            dkl = np.where(inside, -rho / r + (1.0 - rho) / (1.0 - r), 0.0)
            dA = dA + gamma * dkl / m
        deriv = ACTIVATIONS[net.activations[l]][1]
        dZ = dA * deriv(zs[l], acts[layer])
        dW = dZ.T @ acts[l]
        if l < net.n_layers - 1:
            dW = dW + lambda_l2 * net.weights[l]
        grads[l] = (dW, dZ.sum(axis=0))
        if l > 0:
            dA = dZ @ net.weights[l]
    return grads


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser and regularisation settings.

    ``patience`` counts epochs without a validation improvement before
    training stops; the best parameters seen are then restored.
    ``optimizer`` is "sgd" (fixed-step minibatch gradient descent) or "adam".
    """

    max_epochs: int = 1000
    learning_rate: float = 0.1
    batch_size: int = 8
    patience: int = 20
    lambda_l2: float = 1e-4
    gamma_sparsity: float = 1.0
    rho_target: float = 0.05
    seed: int = 0
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.optimizer not in _OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.lambda_l2 < 0 or self.gamma_sparsity < 0:
            raise ValueError("regularisation weights must be non-negative")
        if not 0.0 < self.rho_target < 1.0:
            raise ValueError("rho_target must lie in (0, 1)")


@dataclass
class TrainReport:
    epochs_run: int = 0
    train_loss_curve: list[float] = field(default_factory=list)
    val_loss_curve: list[float] = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int = 0


def _mse(net, X, Y) -> float:
    out = _forward_trace(net, X)[1][-1]
    return float(np.mean((Y - out) ** 2))


def _sgd(net: MlpNetwork, cfg: TrainConfig):
    lr = cfg.learning_rate

    def step(grads):
        for l, (dW, db) in enumerate(grads):
            net.weights[l] -= lr * dW
            net.biases[l] -= lr * db

    return step


def _adam(net: MlpNetwork, cfg: TrainConfig, beta1=0.9, beta2=0.999, eps=1e-8):
    lr = cfg.learning_rate
    shapes = [p.shape for l in range(net.n_layers) for p in (net.weights[l], net.biases[l])]
    first = [np.zeros(s) for s in shapes]
    second = [np.zeros(s) for s in shapes]
    t = 0

    def step(grads):
        nonlocal t
        t += 1
        c1, c2 = 1.0 - beta1**t, 1.0 - beta2**t
        for i, g in enumerate(g for pair in grads for g in pair):
            first[i] = beta1 * first[i] + (1.0 - beta1) * g
            second[i] = beta2 * second[i] + (1.0 - beta2) * g * g
            update = lr * (first[i] / c1) / (np.sqrt(second[i] / c2) + eps)
            layer, is_bias = divmod(i, 2)
            if is_bias:
                net.biases[layer] -= update
            else:
                net.weights[layer] -= update

    return step


_OPTIMIZERS = {"sgd": _sgd, "adam": _adam}


def train(net: MlpNetwork, X_tr, Y_tr, X_val=None, Y_val=None, cfg: TrainConfig | None = None) -> TrainReport:
    """Fit `net` in place by shuffled minibatch descent on :func:`sparse_loss`.

    Early stopping watches the validation MSE (the training MSE when no
    validation rows are given). On return the network holds the parameters
    of its best epoch.
    """
    cfg = cfg or TrainConfig()
    X_tr = _check_input(net, X_tr)
    Y_tr = np.asarray(Y_tr, dtype=np.float64)
    if X_val is None:
        X_val, Y_val = X_tr, Y_tr
    else:
        X_val = _check_input(net, X_val)
        Y_val = np.asarray(Y_val, dtype=np.float64)

    rng = np.random.default_rng(cfg.seed)
    m = X_tr.shape[0]
    report = TrainReport()

    # the starting point competes too, so a bad first step is never kept
    try:
        best_val = _mse(net, X_val, Y_val)
    except FloatingPointError as exc:
        raise TrainingDivergedError(0, f"non-finite output before training: {exc}") from exc
    best_params = (copy.deepcopy(net.weights), copy.deepcopy(net.biases))
    wait = 0
    step = _OPTIMIZERS[cfg.optimizer](net, cfg)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(m)
        try:
            # divergence is detected below; numpy's overflow chatter adds nothing
            with np.errstate(over="ignore", invalid="ignore"):
                for start in range(0, m, cfg.batch_size):
                    rows = order[start : start + cfg.batch_size]
                    step(gradients(net, X_tr[rows], Y_tr[rows], cfg.lambda_l2, cfg.gamma_sparsity, cfg.rho_target))
                train_loss = sparse_loss(net, X_tr, Y_tr, cfg.lambda_l2, cfg.gamma_sparsity, cfg.rho_target)
                val_loss = _mse(net, X_val, Y_val)
        except FloatingPointError as exc:
            raise TrainingDivergedError(epoch, f"training diverged at epoch {epoch}: {exc}") from exc
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingDivergedError(epoch)

        report.epochs_run = epoch
        report.train_loss_curve.append(train_loss)
        report.val_loss_curve.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_params = (copy.deepcopy(net.weights), copy.deepcopy(net.biases))
            report.best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                report.stopped_early = True
                break

    net.weights, net.biases = best_params
    return report


def _split_rows(m: int, val_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(m)
    n_val = int(math.floor(val_fraction * m))
    if n_val < 1 or n_val >= m:
        return order, np.array([], dtype=int)
    return order[n_val:], order[:n_val]


def _fit_output_layer(codes: np.ndarray, targets: np.ndarray, ridge: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Ridge-regularised affine map from the last hidden code to the targets.

    Sparse codes are close to collinear; an unregularised fit returns huge
    weights that the first gradient step then blows up.
    """
    mu_c, mu_t = codes.mean(axis=0), targets.mean(axis=0)
    C = codes - mu_c
    G = C.T @ C
    G[np.diag_indices_from(G)] += ridge * codes.shape[0]
    # C order, so a serialised copy multiplies bit-identically
    W = np.linalg.solve(G, C.T @ (targets - mu_t)).T.copy()
    return W, mu_t - W @ mu_c


def pretrain_stacked(layer_sizes, activations, X, cfg: TrainConfig | None = None, targets=None,
                     val_fraction: float = 0.2) -> MlpNetwork:
    """Greedy layer-wise initialisation of a deep network.

    Each hidden layer is trained as the hidden layer of a one-hidden-layer
    sparse autoencoder that reconstructs the code of the layer below.  The
    output layer is then fitted by least squares from the top code to
    `targets` (default: `X` itself) when its activation is linear, and left
    at its random initialisation otherwise.  With a single hidden layer and
    no separate targets the returned network is that sparse autoencoder.

    The result is an initialisation; fine-tune it with :func:`train`.
    """
    cfg = cfg or TrainConfig()
    sizes = [int(n) for n in layer_sizes]
    L = len(sizes) - 1
    if isinstance(activations, str):
        activations = [activations] * L
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != sizes[0]:
        raise ValueError(f"input width {X.shape[1]} does not match layer size {sizes[0]}")
    rng = np.random.default_rng(cfg.seed)
    net = init_network(sizes, activations, rng)

    code = X
    for l in range(L - 1):
        sub = init_network([sizes[l], sizes[l + 1], sizes[l]], [activations[l], "linear"], rng)
        tr, va = _split_rows(code.shape[0], val_fraction, rng)
        sub_cfg = TrainConfig(**{**cfg.__dict__, "seed": int(rng.integers(2**31))})
        if va.size:
            train(sub, code[tr], code[tr], code[va], code[va], sub_cfg)
        else:
            train(sub, code, code, cfg=sub_cfg)
        if L == 2 and targets is None:
            return sub
        net.weights[l], net.biases[l] = sub.weights[0].copy(), sub.biases[0].copy()
        code = ACTIVATIONS[activations[l]][0](code @ net.weights[l].T + net.biases[l])

    if activations[-1] == "linear":
        Y = X if targets is None else np.asarray(targets, dtype=np.float64)
        net.weights[-1], net.biases[-1] = _fit_output_layer(code, Y)
    return net
