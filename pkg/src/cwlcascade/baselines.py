"""Closed-form comparators: extreme learning machine, multilayer ELM, PCA."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import KOutOfRangeError, SingularSystemError


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def ridge_solve(H, Y, lam: float):
    """``(H^T H + lam I)^-1 H^T Y``; raises SingularSystemError if lam = 0 and H^T H is singular.

    ``lam = inf`` is the limit itself: an all-zero solution.
    """
    if np.isinf(lam):
        return np.zeros((H.shape[1], np.asarray(Y).shape[1]))
    G = H.T @ H
    if lam > 0:
        G[np.diag_indices_from(G)] += lam
    elif np.linalg.matrix_rank(G) < G.shape[0]:
        raise SingularSystemError("H^T H is rank-deficient and no ridge term was given")
    try:
        return linalg.solve(G, H.T @ Y, assume_a="pos")
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(str(exc)) from exc


@dataclass
class ElmModel:
    W_in: np.ndarray        # (hidden, input)
    b: np.ndarray           # (hidden,)
    beta: np.ndarray = None  # (hidden, classes)

    def hidden(self, X):
        return sigmoid(np.asarray(X, dtype=float) @ self.W_in.T + self.b)

    def decision(self, X):
        return self.hidden(X) @ self.beta

    def predict(self, X):
        return np.argmax(self.decision(X), axis=1)


# Hidden weights are uniform(-g, g) / sqrt(d) and biases uniform(-s, s). For
# z-scored inputs the gain of 3 keeps pre-activations around unit spread while
# the wider bias spreads units over both flat and steep parts of the sigmoid.
ELM_INPUT_GAIN = 3.0
ELM_BIAS_SCALE = 3.0
# Pre-activation gain of the ELM-AE random projection (orthonormal columns).
AE_INPUT_GAIN = 10.0


def elm_init(n_in: int, hidden: int, seed: int, input_gain: float = ELM_INPUT_GAIN,
             bias_scale: float = ELM_BIAS_SCALE) -> ElmModel:
    rng = np.random.default_rng(seed)
    scale = input_gain / np.sqrt(n_in)
    return ElmModel(W_in=rng.uniform(-1, 1, (hidden, n_in)) * scale,
                    b=rng.uniform(-1, 1, hidden) * bias_scale)


def elm_fit(X, Y_onehot, hidden: int = 256, lam: float = 1e-6, seed: int = 0) -> ElmModel:
    """Random sigmoid hidden layer, ridge least-squares readout."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y_onehot, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or len(X) != len(Y):
        raise ValueError("X and Y_onehot must be 2-D with the same number of rows")
    if len(X) < 1 or hidden < 1 or lam < 0:
        raise ValueError("need n >= 1, hidden >= 1, lam >= 0")
    model = elm_init(X.shape[1], hidden, seed)
    model.beta = ridge_solve(model.hidden(X), Y, lam)
    return model


@dataclass
class MelmModel:
    encoders: list = field(default_factory=list)   # (W, b) per stacked layer
    layer_dims: tuple = ()
    head: ElmModel = None

    def transform(self, X):
        Z = np.asarray(X, dtype=float)
        for W, b in self.encoders:
            Z = sigmoid(Z @ W + b)
        return Z

    def decision(self, X):
        return self.head.decision(self.transform(X))

    def predict(self, X):
        return np.argmax(self.decision(X), axis=1)


def elm_autoencoder(X, dim: int, lam: float, rng, input_gain: float = AE_INPUT_GAIN):
    """One ELM-AE layer: random orthogonal hidden map, least-squares decoder.

    Returns ``(W, b, H, beta)``; the encoder ``(W, b) = (beta^T, b)`` reuses
    the learned decode weights, transposed, as the projection for the next
    representation. Compressed and sparse layers use a sigmoid hidden map.
    An equal-dimension layer uses the linear map ``X A`` with no bias, so
    that the decoder can invert it exactly.
    """
    n_in = X.shape[1]
    A = rng.standard_normal((n_in, dim))
    if dim <= n_in:
        A, _ = np.linalg.qr(A)
    else:
        A, _ = np.linalg.qr(A.T)
        A = A.T
    b = rng.uniform(-1, 1, dim)
    b /= np.linalg.norm(b)
    if dim == n_in:
        b = np.zeros(dim)
        H = X @ (input_gain * A)
    else:
        H = sigmoid(X @ (input_gain * A) + b)
    beta = ridge_solve(H, X, lam)          # (dim, n_in) decoder
    return beta.T, b, H, beta


def melm_fit(X, Y_onehot, layer_dims=(256, 128), lam: float = 1e-6, seed: int = 0,
             head_hidden: int = 256) -> MelmModel:
    """Stacked ELM autoencoders followed by an ELM classifier on the deepest code.

    With ``layer_dims == ()`` this is exactly :func:`elm_fit` with the same seed.
    """
    X = np.asarray(X, dtype=float)
    rng = np.random.default_rng(seed + 1)
    encoders = []
    Z = X
    for dim in layer_dims:
        W, b, _, _ = elm_autoencoder(Z, dim, lam, rng)
        encoders.append((W, b))
        Z = sigmoid(Z @ W + b)
    head = elm_fit(Z, Y_onehot, head_hidden, lam, seed)
    return MelmModel(encoders=encoders, layer_dims=tuple(layer_dims), head=head)


@dataclass(frozen=True)
class PcaResult:
    components: np.ndarray          # (k, d), orthonormal rows
    projected: np.ndarray           # (n, k)
    explained_variance: np.ndarray  # (k,)
    explained_variance_ratio: np.ndarray
    mean: np.ndarray

    def reconstruct(self):
        return self.projected @ self.components + self.mean


def pca_fit_transform(X, k: int) -> PcaResult:
    """Top-``k`` principal axes of the centred data via SVD."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if not (1 <= k <= min(n, d)):
        raise KOutOfRangeError(f"k={k} outside [1, {min(n, d)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    var = s ** 2 / max(n - 1, 1)
    total = var.sum()
    comps = Vt[:k]
    ratio = var[:k] / total if total > 0 else np.zeros(k)
    return PcaResult(components=comps, projected=Xc @ comps.T, explained_variance=var[:k],
                     explained_variance_ratio=ratio, mean=mean)
