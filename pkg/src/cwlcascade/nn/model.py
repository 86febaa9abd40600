"""Sequential model, softmax cross-entropy, Adam and the training loop."""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyDatasetError, KTooLargeError, ShapeMismatchError
from .layers import (
    Conv1D,
    Conv2D,
    Dense,
    Flatten,
    MaxPool1D,
    MaxPool2D,
    ReLU,
    Softmax,
)


class Sequential:
    """A fixed stack of layers.

    Layers with index below ``frozen_prefix`` never receive gradients or
    updates.
    """

    def __init__(self, layers, input_shape, seed: int = 0, dtype=np.float32):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        self.frozen_prefix = 0
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.build(shape, rng, self.dtype)
        self.output_shape = shape

    def __len__(self):
        return len(self.layers)

    def __repr__(self):
        return f"Sequential({', '.join(map(repr, self.layers))})"

    @property
    def ends_in_softmax(self) -> bool:
        return bool(self.layers) and isinstance(self.layers[-1], Softmax)

    def forward(self, x, start: int = 0, stop: int = None):
        x = np.asarray(x, dtype=self.dtype)
        stop = len(self.layers) if stop is None else stop
        for i in range(start, stop):
            try:
                x = self.layers[i].forward(x)
            except ShapeMismatchError as exc:
                raise ShapeMismatchError(f"layer {i}: {exc}") from exc
        return x

    __call__ = forward

    def predict_proba(self, x, batch_size: int = 256):
        x = np.asarray(x)
        outs = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(outs) if outs else np.zeros((0,) + self.output_shape, self.dtype)

    def backward(self, y_onehot, start: int = 0):
        """Gradients of mean softmax cross-entropy from the last forward pass.

        Returns ``{(layer_index, param_name): grad}`` for trainable layers only.
        Backpropagation stops at ``max(start, frozen_prefix)``.
        """
        if not self.ends_in_softmax:
            raise ValueError("cross-entropy backward needs a final Softmax layer")
        probs = self.layers[-1]._cache
        y = np.asarray(y_onehot, dtype=self.dtype)
        if y.shape != probs.shape:
            raise ShapeMismatchError(f"targets {y.shape} do not match outputs {probs.shape}")
        first = max(start, self.frozen_prefix)
        grads = {}
        dout = (probs - y) / probs.shape[0]
        for i in range(len(self.layers) - 2, first - 1, -1):
            layer = self.layers[i]
            need_dx = i > first
            if layer.has_params:
                dx = layer.backward(dout)
                for name in layer.param_names:
                    grads[(i, name)] = layer.grads[name]
            else:
                dx = layer.backward(dout) if need_dx else None
            dout = dx
        return grads

    def parameters(self):
        for i, layer in enumerate(self.layers):
            for name in layer.param_names:
                yield (i, name), layer.params[name]

    def trainable_keys(self):
        return [k for k, _ in self.parameters() if k[0] >= self.frozen_prefix]

    def param_layer_indices(self):
        return [i for i, layer in enumerate(self.layers) if layer.has_params]

    def checksum(self, layer_indices=None) -> str:
        h = hashlib.sha256()
        for (i, name), p in self.parameters():
            if layer_indices is None or i in layer_indices:
                h.update(f"{i}:{name}".encode())
                h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()

    def frozen_checksum(self) -> str:
        return self.checksum(set(range(self.frozen_prefix)))

    def copy(self) -> "Sequential":
        return copy.deepcopy(self)


def cross_entropy(probs, y_onehot) -> float:
    """Mean cross-entropy; exact one-hot predictions give 0."""
    p = np.asarray(probs, dtype=float)
    y = np.asarray(y_onehot, dtype=float)
    with np.errstate(divide="ignore"):
        logp = np.where(y > 0, np.log(np.maximum(p, 1e-300)), 0.0)
    return float(-np.sum(y * logp) / p.shape[0])


def one_hot(labels, n_classes: int, dtype=np.float32):
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((len(labels), n_classes), dtype=dtype)
    out[np.arange(len(labels)), labels] = 1
    return out


# --------------------------------------------------------------------------
# optimisation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    frozen_prefix: int = None   # None keeps the model's own setting

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig, t: int):
    """In-place Adam update with bias correction for every key in ``grads``.

    ``params`` maps keys to arrays; keys absent from ``grads`` (frozen
    parameters) are untouched.
    """
    if t < 1:
        raise ValueError("Adam step index t starts at 1")
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for key, g in grads.items():
        p = params[key]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"gradient {key} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        v = state.v[key]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= (cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)).astype(p.dtype)
    state.t = t
    return params, state


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)


def _as_targets(y, n_classes, dtype):
    y = np.asarray(y)
    if y.ndim == 1:
        return y.astype(int), one_hot(y, n_classes, dtype)
    return y.argmax(axis=1), y.astype(dtype)


def train(model: Sequential, X, y, cfg: TrainConfig = TrainConfig()):
    """Mini-batch Adam on mean softmax cross-entropy.

    ``y`` is integer labels or one-hot rows. The frozen prefix is evaluated
    once for the whole dataset, since its output never changes. Returns
    ``(model, history)``; the model is updated in place.
    """
    X = np.asarray(X)
    if len(X) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    if cfg.frozen_prefix is not None:
        model.frozen_prefix = cfg.frozen_prefix
    n_classes = model.output_shape[0]
    labels, Y = _as_targets(y, n_classes, model.dtype)
    if labels.min() < 0 or labels.max() >= n_classes or len(labels) != len(X):
        raise ValueError("labels out of range or misaligned with X")

    start = model.frozen_prefix
    Z = X.astype(model.dtype) if start == 0 else np.concatenate(
        [model.forward(X[i:i + 512], stop=start) for i in range(0, len(X), 512)])
    params = dict(model.parameters())
    state = AdamState()
    rng = np.random.default_rng(cfg.seed)
    hist = TrainHistory()
    t = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(Z))
        loss_sum, correct = 0.0, 0
        for b in range(0, len(order), cfg.batch_size):
            idx = order[b:b + cfg.batch_size]
            probs = model.forward(Z[idx], start=start)
            loss_sum += cross_entropy(probs, Y[idx]) * len(idx)
            correct += int(np.sum(probs.argmax(axis=1) == labels[idx]))
            grads = model.backward(Y[idx], start=start)
            t += 1
            adam_step(params, grads, state, cfg, t)
        hist.loss.append(loss_sum / len(Z))
        hist.accuracy.append(correct / len(Z))
    return model, hist


def evaluate_accuracy(model: Sequential, X, labels) -> float:
    pred = model.predict_proba(X).argmax(axis=1)
    return float(np.mean(pred == np.asarray(labels)))


def freeze_all_but(model: Sequential, k_trainable_tail: int) -> Sequential:
    """Freeze everything except the last ``k`` parameterised layers."""
    pidx = model.param_layer_indices()
    if not (1 <= k_trainable_tail <= len(pidx)):
        raise KTooLargeError(
            f"k_trainable_tail={k_trainable_tail} but model has {len(pidx)} parameterised layers")
    model.frozen_prefix = pidx[len(pidx) - k_trainable_tail]
    return model


def pretrain_and_freeze(surrogate_X, surrogate_y, model: Sequential, k_trainable_tail: int = 1,
                        cfg: TrainConfig = TrainConfig(), reset_tail: bool = True):
    """Train on the surrogate task, then freeze all but the last ``k`` parameterised layers.

    With ``reset_tail`` the trainable tail is re-initialised (seeded from
    ``cfg.seed``) so fine-tuning starts from a fresh head. Returns
    ``(model, pretrain_history)``.
    """
    n_param_layers = len(model.param_layer_indices())
    if k_trainable_tail > n_param_layers:
        raise KTooLargeError(
            f"k_trainable_tail={k_trainable_tail} but model has {n_param_layers} parameterised layers")
    model.frozen_prefix = 0
    model, hist = train(model, surrogate_X, surrogate_y, cfg)
    freeze_all_but(model, k_trainable_tail)
    if reset_tail and k_trainable_tail < n_param_layers:
        rng = np.random.default_rng(cfg.seed + 1)
        for i in range(model.frozen_prefix, len(model.layers)):
            if model.layers[i].has_params:
                model.layers[i].reset(rng)
    return model, hist


# --------------------------------------------------------------------------
# default architectures
# --------------------------------------------------------------------------

def build_cnn1d(input_len: int = 848, n_classes: int = 5, seed: int = 0, dtype=np.float32):
    """Stage-2 task classifier on raw feature vectors, input ``(1, input_len)``."""
    layers = [Conv1D(16, 7, 2), ReLU(), MaxPool1D(2),
              Conv1D(32, 5, 2), ReLU(), MaxPool1D(2),
              Flatten(), Dense(64), ReLU(), Dense(n_classes), Softmax()]
    return Sequential(layers, (1, input_len), seed=seed, dtype=dtype)


def build_cnn2d(image_hw=(128, 128), n_classes: int = 2, seed: int = 0, dtype=np.float32):
    """Stage-1 scalogram network, input ``(1, H, W)`` scaled to [0, 1]."""
    layers = [Conv2D(8, 5, 2), ReLU(), MaxPool2D(2),
              Conv2D(16, 3, 2), ReLU(), Flatten(),
              Dense(32), ReLU(), Dense(n_classes), Softmax()]
    return Sequential(layers, (1,) + tuple(image_hw), seed=seed, dtype=dtype)
