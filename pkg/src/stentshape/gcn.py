"""Adapted spectral GCN: fixed-depth Chebyshev convolution stack for
regressing partially-deployed marker references from fully-deployed markers.

Forward/backward are hand-written on numpy arrays; gradients are exact and
checked against finite differences in the test suite.  The trainer is
mini-batch momentum SGD with Gaussian input corruption.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyDataset, NonFiniteLoss, SchemaVersionMismatch, ShapeMismatch

CHECKPOINT_FORMAT_VERSION = "1"


@dataclass(frozen=True)
class GcnConfig:
    hidden_layers: int = 8
    channels: int = 32
    K: int = 2
    leaky_slope: float = 0.1
    in_channels: int = 3
    out_channels: int = 3

    def __post_init__(self):
        if self.hidden_layers < 1 or self.channels < 1 or self.K < 1:
            raise ValueError("hidden_layers, channels and K must be >= 1")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError("leaky_slope must be in (0, 1)")

    def layer_dims(self):
        """Channel chain in_channels -> channels x hidden_layers -> out_channels."""
        return [self.in_channels] + [self.channels] * self.hidden_layers + [self.out_channels]


@dataclass
class GcnParams:
    """Per layer: theta (K, C_in, C_out) filter coefficients and bias (C_out,)."""

    thetas: list
    biases: list

    def copy(self):
        return GcnParams([t.copy() for t in self.thetas], [b.copy() for b in self.biases])

    def zeros_like(self):
        return GcnParams([np.zeros_like(t) for t in self.thetas], [np.zeros_like(b) for b in self.biases])

    def theta_norm(self):
        """Euclidean norm over every filter coefficient (biases excluded)."""
        return float(np.sqrt(sum(float(np.sum(t * t)) for t in self.thetas)))


@dataclass
class GcnModel:
    config: GcnConfig
    params: GcnParams


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    momentum: float = 0.9
    l2_weight: float = 5e-4
    batch_size: int = 10
    noise_sigma: float = 0.1
    epochs: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.momentum, self.l2_weight, self.noise_sigma) < 0:
            raise ValueError("train hyperparameters must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


def init_params(config, rng_seed=0):
    """Zero-mean uniform theta with half-width sqrt(6 / (K*C_in + C_out)); zero biases."""
    rng = np.random.default_rng(rng_seed)
    dims = config.layer_dims()
    thetas, biases = [], []
    for c_in, c_out in zip(dims[:-1], dims[1:]):
        half_width = np.sqrt(6.0 / (config.K * c_in + c_out))
        thetas.append(rng.uniform(-half_width, half_width, size=(config.K, c_in, c_out)))
        biases.append(np.zeros(c_out))
    return GcnParams(thetas, biases)


def init_model(config=None, rng_seed=0):
    config = config or GcnConfig()
    return GcnModel(config=config, params=init_params(config, rng_seed))


def _cheb_stack(L_scaled, X, K):
    """Stack [T_0(L')X, ..., T_{K-1}(L')X]; X is (..., n, C)."""
    stack = [X]
    if K > 1:
        stack.append(L_scaled @ X)
        for _ in range(2, K):
            stack.append(2.0 * (L_scaled @ stack[-1]) - stack[-2])
    return np.stack(stack)


def _forward_batch(model, graph, X):
    """Forward a (B, n, C_in) batch; returns (output, per-layer cache)."""
    cfg = model.config
    n_layers = len(model.params.thetas)
    A = X
    cache = []
    for i, (theta, bias) in enumerate(zip(model.params.thetas, model.params.biases)):
        S = _cheb_stack(graph.L_scaled, A, cfg.K)
        Z = np.einsum("kio,kbni->bno", theta, S) + bias
        if i < n_layers - 1:
            A = np.where(Z > 0, Z, cfg.leaky_slope * Z)
        else:
            A = Z
        cache.append((S, Z))
    return A, cache


def _backward_batch(model, graph, cache, dOut):
    """Backprop a (B, n, C_out) upstream gradient; returns a GcnParams gradient
    of the data term (regularizer excluded)."""
    cfg = model.config
    n_layers = len(model.params.thetas)
    grad = model.params.zeros_like()
    dA = dOut
    for i in range(n_layers - 1, -1, -1):
        S, Z = cache[i]
        if i < n_layers - 1:
            dZ = np.where(Z > 0, dA, cfg.leaky_slope * dA)
        else:
            dZ = dA
        grad.thetas[i] = np.einsum("kbni,bno->kio", S, dZ)
        grad.biases[i] = dZ.sum(axis=(0, 1))
        if i > 0:
            # T_k(L') is symmetric, so the adjoint reuses the Chebyshev stack
            U = _cheb_stack(graph.L_scaled, dZ, cfg.K)
            dA = np.einsum("kio,kbno->bni", model.params.thetas[i], U)
    return grad


def _check_input(model, F):
    F = np.asarray(F, dtype=float)
    if F.shape != (5, model.config.in_channels) and F.shape[-1] != model.config.in_channels:
        raise ShapeMismatch(f"expected (n, {model.config.in_channels}) node features, got {F.shape}")
    return F


def forward(model, graph, F):
    """Forward one (n, C_in) feature matrix; returns (output, cache)."""
    F = _check_input(model, F)
    if F.ndim != 2:
        raise ShapeMismatch(f"expected 2-d node features, got shape {F.shape}")
    out, cache = _forward_batch(model, graph, F[None])
    return out[0], cache


def loss(pred, target, params, alpha):
    """Frobenius residual norm plus alpha * L2 norm of all filter coefficients.

    For batched pred/target (B, n, C) the data term is averaged over samples
    and the regularizer added once.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    if pred.ndim == 2:
        data = float(np.linalg.norm(pred - target))
    else:
        data = float(np.mean(np.linalg.norm(pred - target, axis=(1, 2))))
    return data + alpha * params.theta_norm()


def _residual_grad(pred, target):
    """Gradient of ||pred - target||_F per sample; zero at the kink."""
    R = pred - target
    norms = np.linalg.norm(R, axis=(1, 2), keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, R / safe, 0.0)


def _add_regularizer_grad(grad, params, alpha):
    norm = params.theta_norm()
    if alpha != 0.0 and norm > 0:
        scale = alpha / norm
        for g, t in zip(grad.thetas, params.thetas):
            g += scale * t
    return grad


def gradients(model, graph, F, target, alpha):
    """Exact gradient of loss(forward(F), target) w.r.t. every theta and bias."""
    F = _check_input(model, F)
    target = np.asarray(target, dtype=float)
    if target.shape != (F.shape[0], model.config.out_channels):
        raise ShapeMismatch(f"target shape {target.shape} inconsistent with model")
    pred, cache = _forward_batch(model, graph, F[None])
    grad = _backward_batch(model, graph, cache, _residual_grad(pred, target[None]))
    return _add_regularizer_grad(grad, model.params, alpha)


def train(model, graph, dataset, cfg):
    """Mini-batch momentum SGD on (Y_f_l, Y_p_l) pairs (3x5 each, local frame).

    Fresh Gaussian noise is added to every training input presentation.
    Mutates model.params in place; returns (params, per-epoch mean loss).
    """
    pairs = list(dataset)
    if not pairs:
        raise EmptyDataset("training dataset is empty")
    X = np.stack([np.asarray(a, dtype=float).T for a, _ in pairs])
    T = np.stack([np.asarray(b, dtype=float).T for _, b in pairs])
    if X.shape[1:] != (5, model.config.in_channels) or T.shape[1:] != (5, model.config.out_channels):
        raise ShapeMismatch(f"dataset samples have shapes {X.shape[1:]} / {T.shape[1:]}")

    rng = np.random.default_rng(cfg.rng_seed)
    params = model.params
    velocity = params.zeros_like()
    history = []
    n = len(pairs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            inputs = X[idx] + rng.normal(0.0, cfg.noise_sigma, size=X[idx].shape)
            pred, cache = _forward_batch(model, graph, inputs)
            batch_loss = loss(pred, T[idx], params, cfg.l2_weight)
            if not np.isfinite(batch_loss):
                raise NonFiniteLoss(epoch)
            grad = _backward_batch(model, graph, cache, _residual_grad(pred, T[idx]) / len(idx))
            _add_regularizer_grad(grad, params, cfg.l2_weight)
            for v, p, g in zip(
                velocity.thetas + velocity.biases,
                params.thetas + params.biases,
                grad.thetas + grad.biases,
            ):
                v *= cfg.momentum
                v -= cfg.learning_rate * g
                p += v
            epoch_losses.append(batch_loss)
        history.append(float(np.mean(epoch_losses)))
    return params, history


def predict_references(model, graph, Y_f_l):
    """Predict partially-deployed 3x5 marker references; no noise at inference."""
    Y_f_l = np.asarray(Y_f_l, dtype=float)
    if Y_f_l.shape != (model.config.in_channels, 5):
        raise ShapeMismatch(f"expected 3x5 marker set, got {Y_f_l.shape}")
    out, _ = _forward_batch(model, graph, Y_f_l.T[None])
    return out[0].T


def save_checkpoint(model, path, train_config=None, final_loss=None, rng_seed=None):
    """Write a versioned JSON checkpoint; floats use shortest round-trip repr."""
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(model.config),
        "layers": [
            {
                "theta_shape": list(t.shape),
                "theta": t.ravel().tolist(),
                "bias": b.tolist(),
            }
            for t, b in zip(model.params.thetas, model.params.biases)
        ],
        "train_config": asdict(train_config) if train_config is not None else None,
        "final_loss": final_loss,
        "rng_seed": rng_seed,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    """Load a checkpoint; returns (GcnModel, metadata dict)."""
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise SchemaVersionMismatch(f"checkpoint format {version!r}, expected {CHECKPOINT_FORMAT_VERSION!r}")
    config = GcnConfig(**doc["config"])
    thetas, biases = [], []
    for layer in doc["layers"]:
        thetas.append(np.array(layer["theta"], dtype=float).reshape(layer["theta_shape"]))
        biases.append(np.array(layer["bias"], dtype=float))
    model = GcnModel(config=config, params=GcnParams(thetas, biases))
    meta = {k: doc.get(k) for k in ("train_config", "final_loss", "rng_seed")}
    return model, meta
