"""Seeded synthetic multimodal sessions with known ground truth.

EEG: per-channel 1/f noise plus label-gated band oscillations shared across
channels. fNIRS: slow drift, cardiac pulsation and a task boxcar convolved
with a double-gamma HRF, scaled per task. Pupil: slow baseline plus
task-gated dilation, with blink gaps marked missing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path
from math import gamma as gamma_fn

import numpy as np
from scipy import fft as sfft
from scipy import signal as sps

from .cwt import CwtConfig, scalogram_images
from .errors import InvalidConfigError
from .signals import TASK_LABELS, ChannelStream, EventSchedule, MultimodalRecording

BANDS_HZ = {"theta": 6.0, "alpha": 10.0, "beta": 20.0, "beta_hi": 26.0, "gamma": 34.0,
            "gamma_hi": 42.0}

# amplitude multiplier per label for each oscillatory band (base amplitude 1)
DEFAULT_EEG_MODULATION = {
    "NoTask": {"alpha": 3.0},
    "Task1": {"beta": 6.0, "alpha": 0.5},
    "Task2": {"beta_hi": 6.0, "alpha": 0.5},
    "Task3": {"gamma": 6.0, "alpha": 0.5},
    "Task4": {"gamma_hi": 6.0, "alpha": 0.5},
}
DEFAULT_HRF_AMPLITUDE = {"Task1": 0.5, "Task2": 1.0, "Task3": 0.5, "Task4": 1.0, "NoTask": 0.0}
DEFAULT_PUPIL_DILATION = {"Task1": 0.15, "Task2": 0.35, "Task3": 0.2, "Task4": 0.4, "NoTask": 0.0}


@dataclass(frozen=True)
class HrfParams:
    """Double gamma: gamma(peak_shape, scale) - ratio * gamma(under_shape, scale)."""

    peak_shape: float = 6.0
    under_shape: float = 16.0
    scale: float = 1.0
    ratio: float = 1.0 / 6.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = _gamma_pdf(t, self.peak_shape, self.scale) - self.ratio * _gamma_pdf(
            t, self.under_shape, self.scale)
        return out / (1.0 - self.ratio)

    @property
    def mode_s(self) -> float:
        """Mode of the positive gamma lobe."""
        return (self.peak_shape - 1.0) * self.scale


def _gamma_pdf(t, shape, scale):
    t = np.maximum(t, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = t ** (shape - 1) * np.exp(-t / scale) / (gamma_fn(shape) * scale ** shape)
    return np.where(t > 0, out, 0.0)


def default_blocks(order=("Task1", "Task2", "Task3", "Task4"), task_s=120.0, rest_s=60.0):
    blocks = [("NoTask", rest_s)]
    for lab in order:
        blocks += [(lab, task_s), ("NoTask", rest_s)]
    return tuple(blocks)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    subject_id: str = "S01"
    blocks: tuple = None                # ((label, duration_s), ...); None -> randomised default
    shuffle_tasks: bool = True
    task_s: float = 120.0
    rest_s: float = 60.0
    eeg_fs: float = 1000.0
    fnirs_fs: float = 1000.0
    pupil_fs: float = 120.0
    n_eeg: int = 18
    n_fnirs: int = 22
    eeg_noise_uv: float = 10.0
    eeg_band_uv: float = 2.0
    eeg_modulation: dict = field(default_factory=lambda: DEFAULT_EEG_MODULATION)
    hrf_amplitude: dict = field(default_factory=lambda: DEFAULT_HRF_AMPLITUDE)
    hrf: HrfParams = HrfParams()
    hbr_ratio: float = -0.3
    fnirs_noise: float = 0.05
    fnirs_drift: float = 0.2
    cardiac_amp: float = 0.1
    pupil_baseline_mm: float = 3.5
    pupil_dilation: dict = field(default_factory=lambda: DEFAULT_PUPIL_DILATION)
    pupil_noise_mm: float = 0.01
    blink_rate_per_min: float = 15.0
    blink_gap_s: tuple = (0.1, 0.2)

    def __post_init__(self):
        lo, hi = self.blink_gap_s
        if not (0 < lo <= hi < 1.0):
            raise InvalidConfigError("blink gap durations must satisfy 0 < min <= max < 1 s")
        for name in ("eeg_fs", "fnirs_fs", "pupil_fs"):
            if not getattr(self, name) > 0:
                raise InvalidConfigError(f"{name} must be > 0")
        vals = [self.eeg_noise_uv, self.eeg_band_uv, self.fnirs_noise, self.fnirs_drift,
                self.cardiac_amp, self.pupil_noise_mm, self.blink_rate_per_min, self.hbr_ratio]
        for table in (self.hrf_amplitude, self.pupil_dilation):
            vals += list(table.values())
        for mods in self.eeg_modulation.values():
            vals += list(mods.values())
        if not np.all(np.isfinite(vals)):
            raise InvalidConfigError("effect sizes and noise levels must be finite")
        if self.n_eeg < 1 or self.n_fnirs < 1:
            raise InvalidConfigError("channel counts must be >= 1")

    def schedule(self, rng=None) -> EventSchedule:
        if self.blocks is not None:
            blocks = self.blocks
        else:
            order = ["Task1", "Task2", "Task3", "Task4"]
            if self.shuffle_tasks:
                rng = rng if rng is not None else np.random.default_rng(self.seed)
                order = [order[i] for i in rng.permutation(4)]
            blocks = default_blocks(order, self.task_s, self.rest_s)
        t, ivs = 0.0, []
        for lab, dur in blocks:
            if lab not in TASK_LABELS or not dur > 0:
                raise InvalidConfigError(f"bad block ({lab}, {dur})")
            ivs.append((lab, t, t + dur))
            t += dur
        return EventSchedule(tuple(ivs))


@dataclass(frozen=True)
class GroundTruth:
    events: EventSchedule
    hrf: HrfParams
    hrf_amplitude: dict
    pupil_clean: np.ndarray            # (2, n) pre-mask pupil diameters
    hbo2_response: np.ndarray          # (n,) noise-free task response shared by all channels
    channel_gain: np.ndarray           # (n_fnirs,) per-channel response gains
    blink_intervals: tuple

    def label_per_sample(self, fs, n):
        out = np.full(n, "", dtype=object)
        for lab, s, e in self.events:
            out[int(np.ceil(s * fs)):int(np.ceil(e * fs))] = lab
        return out


def pink_noise(rng, n_channels, n, fs, f_min=0.5):
    """Unit-variance 1/f noise, shape ``(n_channels, n)``."""
    spec = rng.standard_normal((n_channels, n // 2 + 1)) + 1j * rng.standard_normal(
        (n_channels, n // 2 + 1))
    f = np.fft.rfftfreq(n, 1 / fs)
    spec *= 1.0 / np.sqrt(np.maximum(f, f_min))
    spec[:, 0] = 0.0
    x = sfft.irfft(spec, n, axis=1)
    return x / x.std(axis=1, keepdims=True)


def _label_envelope(events, labels_map, fs, n, ramp_s=0.05):
    """Per-sample value of ``labels_map[label]`` with short raised-cosine ramps (default 0)."""
    env = np.zeros(n)
    for lab, s, e in events:
        env[int(np.ceil(s * fs)):int(np.ceil(e * fs))] = labels_map.get(lab, 0.0)
    k = max(1, int(ramp_s * fs))
    win = np.hanning(2 * k + 1)
    win /= win.sum()
    return np.convolve(env, win, mode="same")


def _band_source(rng, freq, fs, n, phase_diffusion_hz=0.5):
    """Unit-RMS oscillation at ``freq`` with a randomly diffusing phase.

    The envelope is constant, so band power per window is stable; the phase
    random walk spreads the line to a width of about ``phase_diffusion_hz``.
    """
    step = np.sqrt(2 * np.pi * phase_diffusion_hz / fs)
    phase = 2 * np.pi * freq * np.arange(n) / fs + np.cumsum(step * rng.standard_normal(n))
    return np.sqrt(2.0) * np.sin(phase + rng.uniform(0, 2 * np.pi))


def _blinks(rng, duration_s, rate_per_min, gap_s):
    out = []
    if rate_per_min <= 0:
        return out
    t = rng.exponential(60.0 / rate_per_min)
    while t < duration_s:
        d = rng.uniform(*gap_s)
        out.append((t, min(t + d, duration_s)))
        t += d + rng.exponential(60.0 / rate_per_min)
    return out


def generate_session(cfg: SynthConfig = SynthConfig()):
    """Return ``(MultimodalRecording, GroundTruth)``, bit-identical for equal configs."""
    rng = np.random.default_rng(cfg.seed)
    events = cfg.schedule(rng)
    duration = events.intervals[-1][2]

    # EEG
    n_e = int(round(duration * cfg.eeg_fs))
    eeg = cfg.eeg_noise_uv * pink_noise(rng, cfg.n_eeg, n_e, cfg.eeg_fs)
    for band, freq in BANDS_HZ.items():
        gain_map = {lab: mods.get(band, 1.0) for lab, mods in cfg.eeg_modulation.items()}
        env = _label_envelope(events, gain_map, cfg.eeg_fs, n_e)
        src = cfg.eeg_band_uv * env * _band_source(rng, freq, cfg.eeg_fs, n_e)
        mix = rng.uniform(0.6, 1.0, cfg.n_eeg)
        eeg += mix[:, None] * src[None, :]
    eeg_ch = [ChannelStream(f"EEG{i + 1:02d}", cfg.eeg_fs, eeg[i]) for i in range(cfg.n_eeg)]
    del eeg

    # fNIRS
    n_f = int(round(duration * cfg.fnirs_fs))
    t_f = np.arange(n_f) / cfg.fnirs_fs
    amp = _label_envelope(events, cfg.hrf_amplitude, cfg.fnirs_fs, n_f, ramp_s=0.0)
    kernel_t = np.arange(int(32 * cfg.fnirs_fs)) / cfg.fnirs_fs
    kernel = cfg.hrf(kernel_t) / cfg.fnirs_fs
    response = sps.oaconvolve(amp, kernel)[:n_f]
    gains = rng.uniform(0.8, 1.2, cfg.n_fnirs)
    heart_hz = rng.uniform(1.0, 1.3)
    cardiac = np.sin(2 * np.pi * heart_hz * t_f)
    hbo2_ch, hbr_ch = [], []
    for i in range(cfg.n_fnirs):
        drift = cfg.fnirs_drift * np.sin(2 * np.pi * rng.uniform(0.003, 0.01) * t_f
                                         + rng.uniform(0, 2 * np.pi))
        noise = rng.standard_normal((2, n_f)) * cfg.fnirs_noise
        c_amp = cfg.cardiac_amp * rng.uniform(0.5, 1.0)
        hbo2 = gains[i] * response + drift + c_amp * cardiac + noise[0]
        hbr = cfg.hbr_ratio * gains[i] * response - 0.3 * drift - 0.3 * c_amp * cardiac + noise[1]
        hbo2_ch.append(ChannelStream(f"CH{i + 1:02d}", cfg.fnirs_fs, hbo2))
        hbr_ch.append(ChannelStream(f"CH{i + 1:02d}", cfg.fnirs_fs, hbr))

    # pupil
    n_p = int(round(duration * cfg.pupil_fs))
    t_p = np.arange(n_p) / cfg.pupil_fs
    dil = _label_envelope(events, cfg.pupil_dilation, cfg.pupil_fs, n_p, ramp_s=0.0)
    tau = int(2.0 * cfg.pupil_fs)
    smooth = np.exp(-np.arange(5 * tau) / tau)
    dil = sps.oaconvolve(dil, smooth / smooth.sum())[:n_p]
    base = (cfg.pupil_baseline_mm + 0.2 * np.sin(2 * np.pi * 0.01 * t_p + rng.uniform(0, 6.3))
            + 0.1 * np.sin(2 * np.pi * 0.05 * t_p + rng.uniform(0, 6.3)))
    blinks = _blinks(rng, duration, cfg.blink_rate_per_min, cfg.blink_gap_s)
    mask = np.zeros(n_p, dtype=bool)
    for s, e in blinks:
        mask[int(s * cfg.pupil_fs):int(np.ceil(e * cfg.pupil_fs))] = True
    clean = np.empty((2, n_p))
    pupil_ch = []
    for k, name in enumerate(("left", "right")):
        clean[k] = base + dil + (0.05 if k else 0.0) + cfg.pupil_noise_mm * rng.standard_normal(n_p)
        pupil_ch.append(ChannelStream(name, cfg.pupil_fs, np.where(mask, 0.0, clean[k]), mask))

    rec = MultimodalRecording(eeg=eeg_ch, fnirs_hbo2=hbo2_ch, fnirs_hbr=hbr_ch, pupil=pupil_ch,
                              events=events, subject_id=cfg.subject_id)
    truth = GroundTruth(events=events, hrf=cfg.hrf, hrf_amplitude=dict(cfg.hrf_amplitude),
                        pupil_clean=clean, hbo2_response=response, channel_gain=gains,
                        blink_intervals=tuple(blinks))
    return rec, truth


def subject_config(base: SynthConfig, index: int) -> SynthConfig:
    """Config for subject ``index`` (0-based): distinct derived seed and id."""
    return replace(base, seed=base.seed * 1000 + index, subject_id=f"S{index + 1:02d}")


def generate_pretraining_set(n: int, seed: int = 0, fs_hz: float = 500.0, length: int = 848,
                             cwt_cfg: CwtConfig = CwtConfig()):
    """Balanced scalogram images of low- vs high-frequency tone mixtures.

    Class 0 mixes 2-3 tones in 2-12 Hz, class 1 in 16-50 Hz; both get a
    random-phase 1/f background and random piecewise offsets so the images
    resemble the concatenated multimodal vectors. Returns ``(images, labels)``
    with images ``(n, 1, H, W)`` float32 in [0, 1].
    """
    if n < 4:
        raise ValueError("need at least 2 examples per class")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    rng.shuffle(labels)
    t = np.arange(length) / fs_hz
    X = np.empty((n, length))
    bg = pink_noise(rng, n, length, fs_hz)
    for i, lab in enumerate(labels):
        lo, hi = (2.0, 12.0) if lab == 0 else (16.0, 50.0)
        x = 0.3 * bg[i]
        for _ in range(rng.integers(2, 4)):
            x += rng.uniform(0.5, 1.5) * np.sin(2 * np.pi * rng.uniform(lo, hi) * t
                                                 + rng.uniform(0, 2 * np.pi))
        cut = rng.integers(length // 3, length)
        x[cut:] += rng.normal(0, 0.5)
        X[i] = x
    imgs = scalogram_images(X, fs_hz, cwt_cfg)
    return (imgs[:, None].astype(np.float32) / 255.0), labels


def write_ground_truth(truth: GroundTruth, path) -> Path:
    """Long-format ``ground_truth.csv``: events, HRF parameters, amplitudes, blinks."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["record", "label", "start_s", "end_s", "value"])
        for lab, s, e in truth.events:
            wr.writerow(["event", lab, repr(s), repr(e), ""])
        for name in ("peak_shape", "under_shape", "scale", "ratio"):
            wr.writerow(["hrf", name, "", "", repr(float(getattr(truth.hrf, name)))])
        for lab, a in truth.hrf_amplitude.items():
            wr.writerow(["hrf_amplitude", lab, "", "", repr(float(a))])
        for i, g in enumerate(truth.channel_gain):
            wr.writerow(["channel_gain", f"CH{i + 1:02d}", "", "", repr(float(g))])
        for s, e in truth.blink_intervals:
            wr.writerow(["blink", "", repr(float(s)), repr(float(e)), ""])
    return path


# mean rating per dimension and task; Task2/Task4 carry the heavier load
SURGTLX_TASK_LOAD = {"Task1": 8.0, "Task2": 13.0, "Task3": 9.0, "Task4": 14.0}


def generate_surgtlx(n_participants: int = 5, seed: int = 0, task_load=None):
    """Synthetic questionnaire rows ``(participant, task, SurgTlxResponse)``.

    Ratings scatter around a per-task load and are clipped to 0-20; each
    pairwise winner is drawn in favour of the higher-rated dimension.
    """
    from .study import SURGTLX_DIMENSIONS, SurgTlxResponse

    load = task_load or SURGTLX_TASK_LOAD
    rng = np.random.default_rng(seed)
    rows = []
    for p in range(n_participants):
        for task, mu in load.items():
            r = np.clip(np.round(mu + rng.normal(0, 3, len(SURGTLX_DIMENSIONS))), 0, 20)
            pairs = []
            for i, j in combinations(range(len(SURGTLX_DIMENSIONS)), 2):
                p_i = 1.0 / (1.0 + np.exp(-(r[i] - r[j]) / 3.0))
                a, b = (i, j) if rng.random() < p_i else (j, i)
                pairs.append(f"{SURGTLX_DIMENSIONS[a]}>{SURGTLX_DIMENSIONS[b]}")
            rows.append((f"P{p + 1:02d}", task, SurgTlxResponse(tuple(float(v) for v in r),
                                                                 tuple(pairs))))
    return rows
