"""Central finite-difference checks for the hand-written backward passes."""

from __future__ import annotations

import numpy as np

from .model import Sequential, cross_entropy


def numeric_grad(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central difference of scalar ``f()`` w.r.t. every entry of ``x`` (perturbed in place)."""
    g = np.zeros_like(x, dtype=float)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b, floor: float = 1e-8) -> float:
    """Largest elementwise ``|a - b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def check_model_gradients(model: Sequential, x, y_onehot, h: float = 1e-4) -> dict:
    """Relative error of every trainable parameter's analytic gradient.

    The model should be float64. Returns ``{(layer, name): error}``.
    """
    x = np.asarray(x, dtype=model.dtype)
    model.forward(x)
    analytic = model.backward(y_onehot)

    def loss():
        return cross_entropy(model.forward(x), y_onehot)

    params = dict(model.parameters())
    return {key: rel_error(g, numeric_grad(loss, params[key], h)) for key, g in analytic.items()}


def check_layer_input_gradient(layer, x, h: float = 1e-4, seed: int = 0) -> float:
    """Relative error of ``layer.backward`` w.r.t. its input for a random linear readout."""
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=float)
    out = layer.forward(x)
    r = rng.standard_normal(out.shape)
    analytic = layer.backward(r)

    def f():
        return float(np.sum(layer.forward(x) * r))

    return rel_error(analytic, numeric_grad(f, x, h))
