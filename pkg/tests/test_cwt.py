import numpy as np
import pytest

from cwlcascade.cwt import (
    CwtConfig,
    cwt_magnitudes,
    cwt_morlet,
    morlet,
    render_image,
    render_images,
    scalogram_images,
    wavelet_bank,
)
from cwlcascade.errors import InputTooShortError

FS = 500.0
N = 848


def tone(freq, n=N, fs=FS, phase=0.0):
    return np.sin(2 * np.pi * freq * np.arange(n) / fs + phase)


def brute_force_cwt(x, fs, cfg):
    """Independent O(S*N^2) evaluation of sum_m x[m] conj(psi_s((m - n)/fs))."""
    freqs = np.geomspace(cfg.freq_max_hz, cfg.freq_min_hz, cfg.n_scales)
    n = len(x)
    out = np.empty((len(freqs), n))
    m = np.arange(n)
    for i, f in enumerate(freqs):
        s = cfg.omega0 / (2 * np.pi * f)
        for j in range(n):
            u = (m - j) / fs / s
            psi = np.pi ** -0.25 * np.exp(1j * cfg.omega0 * u - u * u / 2) / np.sqrt(s * fs)
            psi[np.abs(u) > 4] = 0
            out[i, j] = abs(np.sum(x * np.conj(psi)))
    return out


def test_morlet_definition():
    t = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(morlet(t), np.pi ** -0.25 * np.exp(6j * t) * np.exp(-t * t / 2))


def test_wavelets_are_unit_norm():
    cfg = CwtConfig(n_scales=8, freq_min_hz=4.0)
    kernels, _, freqs = wavelet_bank(4000, FS, cfg)
    norms = np.sqrt(np.sum(np.abs(kernels) ** 2, axis=1))
    np.testing.assert_allclose(norms, 1.0, atol=1e-3)
    assert np.all(np.diff(freqs) < 0)


def test_matches_brute_force_convolution():
    cfg = CwtConfig(n_scales=6, freq_min_hz=2.0, freq_max_hz=60.0)
    x = np.random.default_rng(0).standard_normal(120)
    np.testing.assert_allclose(cwt_morlet(x, FS, cfg).magnitudes, brute_force_cwt(x, FS, cfg),
                               rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("freq", [2.0, 8.0, 10.0, 32.0])
def test_tone_localizes_to_its_scale(freq):
    s = cwt_morlet(tone(freq), FS)
    row = int(np.argmax(s.magnitudes.mean(axis=1)))
    ratio = s.scale_freqs_hz[row] / freq
    assert s.scale_step ** -1 <= ratio <= s.scale_step


def test_zero_input():
    s = cwt_morlet(np.zeros(64), FS)
    assert np.all(s.magnitudes == 0)
    assert np.all(render_image(s) == 0)


def test_linearity_scaling(rng):
    x = rng.standard_normal(N)
    a = cwt_morlet(x, FS).magnitudes
    b = cwt_morlet(2 * x, FS).magnitudes
    np.testing.assert_allclose(b, 2 * a, rtol=1e-12, atol=0)
    c = cwt_morlet(-0.37 * x, FS).magnitudes
    np.testing.assert_allclose(c, 0.37 * a, rtol=1e-12, atol=1e-15)


def test_time_shift_covariance(rng):
    cfg = CwtConfig()
    k = 37
    x = np.zeros(N)
    core = rng.standard_normal(300)
    x[200:500] = core
    y = np.zeros(N)
    y[200 + k:500 + k] = core
    mx = cwt_morlet(x, FS, cfg)
    my = cwt_morlet(y, FS, cfg)
    scales_samples = cfg.omega0 / (2 * np.pi * mx.scale_freqs_hz) * FS
    for i, s in enumerate(scales_samples):
        margin = int(np.ceil(2 * s))
        lo, hi = margin, N - margin - k
        if hi <= lo:
            continue
        np.testing.assert_allclose(my.magnitudes[i, lo + k:hi + k], mx.magnitudes[i, lo:hi], atol=1e-6)


def test_batch_equals_single(rng):
    X = rng.standard_normal((3, 200))
    batch = cwt_magnitudes(X, FS, chunk=2)
    for i in range(3):
        np.testing.assert_allclose(batch[i], cwt_morlet(X[i], FS).magnitudes, rtol=1e-12, atol=1e-14)


def test_magnitudes_nonnegative(rng):
    assert np.all(cwt_morlet(rng.standard_normal(100), FS).magnitudes >= 0)


def test_input_too_short():
    with pytest.raises(InputTooShortError):
        cwt_morlet(np.ones(7), FS)


def test_config_checks():
    with pytest.raises(ValueError):
        CwtConfig(freq_max_hz=300.0).check(FS)
    with pytest.raises(ValueError):
        CwtConfig(n_scales=1).check(FS)


# ---- rendering -------------------------------------------------------------------

def test_render_corner_anchors():
    img = render_images(np.array([[0.0, 1.0], [2.0, 3.0]]), 4, 4)
    assert img.dtype == np.uint8 and img.shape == (4, 4)
    assert img[0, 0] == 0 and img[-1, -1] == 255


def test_render_constant_grid_is_zero():
    assert np.all(render_images(np.full((5, 9), 3.3), 8, 8) == 0)


def test_rendered_range_spans_bytes(rng):
    img = render_image(cwt_morlet(rng.standard_normal(N), FS))
    assert img.shape == (128, 128)
    assert img.min() == 0 and img.max() == 255


def test_scalogram_images_batches(rng):
    X = rng.standard_normal((5, 256))
    cfg = CwtConfig(n_scales=16, image_h=32, image_w=48)
    imgs = scalogram_images(X, FS, cfg, chunk=2)
    assert imgs.shape == (5, 32, 48)
    np.testing.assert_array_equal(imgs[3], render_images(cwt_morlet(X[3], FS, cfg).magnitudes, 32, 48))
