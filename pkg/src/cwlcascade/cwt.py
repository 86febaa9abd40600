"""Complex Morlet continuous wavelet transform and scalogram image rendering."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InputTooShortError


@dataclass(frozen=True)
class CwtConfig:
    n_scales: int = 64
    freq_min_hz: float = 0.5
    freq_max_hz: float = 60.0
    omega0: float = 6.0
    image_h: int = 128
    image_w: int = 128

    def check(self, fs_hz: float):
        if self.n_scales < 2:
            raise ValueError("n_scales must be >= 2")
        if not (0 < self.freq_min_hz < self.freq_max_hz <= fs_hz / 2):
            raise ValueError("need 0 < freq_min < freq_max <= fs/2")


@dataclass(frozen=True)
class Scalogram:
    magnitudes: np.ndarray      # (n_scales, n_time), rows ordered high -> low frequency
    scale_freqs_hz: np.ndarray
    image: np.ndarray = None    # (H, W) uint8

    @property
    def scale_step(self) -> float:
        """Ratio between adjacent pseudo-frequencies."""
        return float(self.scale_freqs_hz[0] / self.scale_freqs_hz[1])


def scale_frequencies(cfg: CwtConfig) -> np.ndarray:
    return np.geomspace(cfg.freq_max_hz, cfg.freq_min_hz, cfg.n_scales)


def morlet(t, omega0: float = 6.0):
    """pi**-1/4 * exp(j w0 t) * exp(-t**2 / 2)."""
    return np.pi ** -0.25 * np.exp(1j * omega0 * t) * np.exp(-0.5 * t * t)


def wavelet_bank(n: int, fs_hz: float, cfg: CwtConfig):
    """Sampled, L2-normalised, time-reversed conjugate wavelets for every scale.

    Support is truncated to ``|t| <= 4 s`` (Gaussian envelope below 4e-4) and
    never longer than the signal, which is all a length-``n`` signal can reach.
    Returns ``(kernels (n_scales, 2*half+1), half, freqs)``.
    """
    freqs = scale_frequencies(cfg)
    scales = cfg.omega0 / (2 * np.pi * freqs)          # seconds
    half = int(min(n - 1, np.ceil(4 * scales.max() * fs_hz)))
    lags = np.arange(-half, half + 1) / fs_hz
    kernels = np.empty((len(scales), 2 * half + 1), dtype=complex)
    for i, s in enumerate(scales):
        u = lags / s
        psi = morlet(u, cfg.omega0) * np.sqrt(1.0 / (s * fs_hz))
        psi[np.abs(u) > 4.0] = 0.0
        # W(s, n) = sum_m x[m] conj(psi_s[m - n])  ->  convolution with conj(psi_s[-k])
        kernels[i] = np.conj(psi[::-1])
    return kernels, half, freqs


@lru_cache(maxsize=2)
def _conv_operator(n: int, fs_hz: float, cfg: CwtConfig):
    """Real and imaginary parts of the direct-convolution operator, each ``(n, n_scales*n)``.

    Column ``s*n + j`` holds the taps that produce output sample ``j`` at scale
    ``s``: ``W[s, j] = sum_m x[m] * kernel_s[j - m + half]``, zero outside the
    kernel support (zero padding at the edges).
    """
    kernels, half, freqs = wavelet_bank(n, fs_hz, cfg)
    m = np.arange(n)
    diff = m[None, :] - m[:, None] + half          # [input m, output j]
    valid = (diff >= 0) & (diff < kernels.shape[1])
    idx = np.where(valid, diff, 0)
    re = np.empty((n, len(freqs), n))
    im = np.empty((n, len(freqs), n))
    for s, k in enumerate(kernels):
        tap = np.where(valid, k[idx], 0.0)
        re[:, s, :] = tap.real
        im[:, s, :] = tap.imag
    return re.reshape(n, -1), im.reshape(n, -1), freqs


def cwt_magnitudes(X, fs_hz: float, cfg: CwtConfig = CwtConfig(), chunk: int = 128) -> np.ndarray:
    """|CWT| for a batch of equal-length signals, shape ``(batch, n_scales, n)``.

    Direct linear convolution with zero padding, written as one matrix product
    per chunk of signals against the cached operator.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[1]
    if n < 8:
        raise InputTooShortError(f"CWT needs at least 8 samples, got {n}")
    cfg.check(fs_hz)
    re, im, freqs = _conv_operator(n, float(fs_hz), cfg)
    out = np.empty((X.shape[0], len(freqs), n))
    for i in range(0, X.shape[0], chunk):
        xb = X[i:i + chunk]
        out[i:i + chunk] = np.hypot(xb @ re, xb @ im).reshape(len(xb), len(freqs), n)
    return out


def cwt_morlet(x, fs_hz: float, cfg: CwtConfig = CwtConfig()) -> Scalogram:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) < 8:
        raise InputTooShortError(f"CWT needs a 1-D signal of at least 8 samples, got {x.shape}")
    mags = cwt_magnitudes(x[None], fs_hz, cfg)[0]
    return Scalogram(mags, scale_frequencies(cfg))


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    # align-corners linear interpolation weights, shape (n_out, n_in)
    M = np.zeros((n_out, n_in))
    if n_in == 1:
        M[:, 0] = 1.0
        return M
    pos = np.linspace(0.0, n_in - 1, n_out) if n_out > 1 else np.zeros(1)
    lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
    frac = pos - lo
    M[np.arange(n_out), lo] = 1.0 - frac
    M[np.arange(n_out), lo + 1] += frac
    return M


def _stretch(G):
    """Per-grid min-max scaling to [0, 255]; zero-range grids become zeros."""
    lo = G.min(axis=(1, 2), keepdims=True)
    span = G.max(axis=(1, 2), keepdims=True) - lo
    return np.where(span > 0, (G - lo) / np.where(span > 0, span, 1.0), 0.0) * 255.0


def render_images(mags, out_h: int = 128, out_w: int = 128) -> np.ndarray:
    """Min-max normalise each grid to [0, 255] and bilinearly resize; returns uint8.

    ``mags`` is ``(H, W)`` or ``(batch, H, W)``. Zero-range grids render as zeros.
    A downsampling resize can step over the extreme cells, so the resized grid
    is stretched once more; every non-constant grid then uses the full 0..255
    range.
    """
    G = np.asarray(mags, dtype=float)
    single = G.ndim == 2
    if single:
        G = G[None]
    if G.size == 0:
        raise ValueError("empty magnitude grid")
    Rh = _interp_matrix(G.shape[1], out_h)
    Rw = _interp_matrix(G.shape[2], out_w)
    img = _stretch(np.einsum("hi,bij,wj->bhw", Rh, _stretch(G), Rw, optimize=True))
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return img[0] if single else img


def render_image(s: Scalogram, out_h: int = 128, out_w: int = 128) -> np.ndarray:
    return render_images(s.magnitudes, out_h, out_w)


def scalogram_images(X, fs_hz: float, cfg: CwtConfig = CwtConfig(), chunk: int = 64) -> np.ndarray:
    """uint8 images ``(batch, image_h, image_w)`` for a batch of signals, in chunks."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty((X.shape[0], cfg.image_h, cfg.image_w), dtype=np.uint8)
    for i in range(0, X.shape[0], chunk):
        out[i:i + chunk] = render_images(cwt_magnitudes(X[i:i + chunk], fs_hz, cfg),
                                         cfg.image_h, cfg.image_w)
    return out
