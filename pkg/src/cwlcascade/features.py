"""Sliding-window segmentation into fixed 848-element multimodal feature vectors.

Vector layout (fixed block boundaries)::

    [0:400)    EEG, mean over channels, 400 samples at 500 Hz
    [400:800)  fNIRS HbO2 (or HbR), mean over channels, 400 samples at 500 Hz
    [800:848)  pupil diameter, mean of both eyes, 48 samples at 60 Hz

The 48-sample pupil block covers the same 0.8 s as the other two blocks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ClassEmptyError, RegionTooShortError
from .signals import TASK_LABELS, ChannelStream, EventSchedule, MultimodalRecording, resample

EEG_BLOCK = slice(0, 400)
FNIRS_BLOCK = slice(400, 800)
PUPIL_BLOCK = slice(800, 848)
VECTOR_LENGTH = 848
PUPIL_FS = 60.0


@dataclass(frozen=True)
class WindowSpec:
    window_samples: int = 400
    stride_samples: int = 200
    label_rule: str = "majority"
    fnirs_signal: str = "fnirs_hbo2"

    def __post_init__(self):
        if not (0 < self.stride_samples <= self.window_samples):
            raise ValueError("need 0 < stride_samples <= window_samples")
        if self.label_rule not in ("majority", "center"):
            raise ValueError(f"unknown label_rule {self.label_rule!r}")
        if self.fnirs_signal not in ("fnirs_hbo2", "fnirs_hbr"):
            raise ValueError("fnirs_signal must be fnirs_hbo2 or fnirs_hbr")


@dataclass(frozen=True)
class FeatureWindow:
    vector: np.ndarray
    task_label: str
    t_start_s: float
    subject_id: str = ""

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float)
        if v.shape != (VECTOR_LENGTH,):
            raise ValueError(f"feature vector must have length {VECTOR_LENGTH}, got {v.shape}")
        if self.task_label not in TASK_LABELS:
            raise ValueError(f"unknown task label {self.task_label!r}")
        object.__setattr__(self, "vector", v)

    @property
    def binary_label(self) -> str:
        return "NoTask" if self.task_label == "NoTask" else "CWL"


def zscore_channel(x: ChannelStream) -> ChannelStream:
    s = x.samples
    peak = np.max(np.abs(s)) if s.size else 0.0
    if peak == 0 or not np.isfinite(peak):
        return ChannelStream(x.name, x.fs_hz, np.zeros_like(s), x.missing_mask)
    # moments of the peak-scaled copy avoid under/overflow; a spread below
    # rounding level relative to the peak counts as a constant channel
    u = s / peak
    c = u - u.mean()
    sd = np.sqrt(np.mean(c * c))
    out = np.zeros_like(s) if sd <= 1e-12 else c / sd
    return ChannelStream(x.name, x.fs_hz, out, x.missing_mask)


def zscore_per_channel(rec: MultimodalRecording) -> MultimodalRecording:
    """Standardise every channel over the whole session; constant channels become zeros."""
    return rec.map_channels(zscore_channel)


def window_count(n_samples: int, window: int, stride: int) -> int:
    if n_samples < window:
        return 0
    return (n_samples - window) // stride + 1


def label_window(events: EventSchedule, t0: float, t1: float, rule: str = "majority"):
    """Label for the span ``[t0, t1)``: the covering interval with most overlap, or the centre label."""
    if rule == "center":
        return events.label_at(0.5 * (t0 + t1))
    best, best_ov = None, 0.0
    for lab, s, e in events:
        ov = min(e, t1) - max(s, t0)
        if ov > best_ov:
            best, best_ov = lab, ov
    return best if best_ov > 0.5 * (t1 - t0) else None


def _region_bounds(start_s, end_s, fs, n_total):
    i0 = int(np.ceil(start_s * fs - 1e-9))
    i1 = min(int(np.floor(end_s * fs + 1e-9)), n_total)
    return i0, i1


def segment(rec: MultimodalRecording, spec: WindowSpec = WindowSpec()) -> list:
    """Cut every labelled interval into windows that lie fully inside it.

    Windows start at the first sample of each interval and advance by the
    stride, so a region of ``N`` samples yields ``(N - W) // S + 1`` windows.
    """
    fs = rec.eeg[0].fs_hz
    if rec.fnirs_hbo2[0].fs_hz != fs:
        raise ValueError("EEG and fNIRS must share one sample rate before segmentation")
    W, S = spec.window_samples, spec.stride_samples
    pupil_len = int(round(W * PUPIL_FS / fs))
    if W + W + pupil_len != VECTOR_LENGTH:
        raise ValueError(f"window of {W} samples at {fs} Hz does not give a {VECTOR_LENGTH}-vector")

    eeg = np.mean([c.samples for c in rec.eeg], axis=0)
    fnirs = np.mean([c.samples for c in rec.modality(spec.fnirs_signal)], axis=0)
    pupil_ch = [c if c.fs_hz == PUPIL_FS else resample(c, PUPIL_FS) for c in rec.pupil]
    pupil = np.mean([c.samples for c in pupil_ch], axis=0)
    n_total = min(len(eeg), len(fnirs))

    out = []
    for lab, s, e in rec.events:
        i0, i1 = _region_bounds(s, e, fs, n_total)
        n = i1 - i0
        if n < W:
            raise RegionTooShortError(
                f"{lab} interval [{s}, {e}) s has {max(n, 0)} samples, window needs {W}")
        for k in range(window_count(n, W, S)):
            a = i0 + k * S
            t0 = a / fs
            label = label_window(rec.events, t0, (a + W) / fs, spec.label_rule)
            j = int(round(t0 * PUPIL_FS))
            if label != lab or j + pupil_len > len(pupil):
                continue
            vec = np.concatenate([eeg[a:a + W], fnirs[a:a + W], pupil[j:j + pupil_len]])
            out.append(FeatureWindow(vec, lab, t0, rec.subject_id))
    return out


def split_train_test(windows: Sequence[FeatureWindow], train_frac: float = 0.7, seed: int = 0,
                     labels: Sequence[str] = TASK_LABELS):
    """Stratified (by task label) deterministic split into ``(train, test)``.

    Each stratum contributes ``round(train_frac * n_k)`` windows to train. Both
    lists keep the input order.
    """
    if not (0 < train_frac < 1):
        raise ValueError("train_frac must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    by_label = {lab: [] for lab in labels}
    for i, w in enumerate(windows):
        by_label[w.task_label].append(i)
    train_idx = []
    for lab in labels:
        idx = by_label[lab]
        if not idx:
            raise ClassEmptyError(f"no windows labelled {lab}")
        perm = rng.permutation(len(idx))
        n_train = int(round(train_frac * len(idx)))
        train_idx.extend(idx[p] for p in perm[:n_train])
    in_train = np.zeros(len(windows), dtype=bool)
    in_train[train_idx] = True
    train = [w for w, t in zip(windows, in_train) if t]
    test = [w for w, t in zip(windows, in_train) if not t]
    return train, test


def stack(windows: Sequence[FeatureWindow]):
    """``(X, task_idx, binary_idx)`` arrays for a list of windows."""
    X = np.stack([w.vector for w in windows]) if windows else np.zeros((0, VECTOR_LENGTH))
    y_task = np.array([TASK_LABELS.index(w.task_label) for w in windows], dtype=int)
    y_bin = np.array([0 if w.task_label != "NoTask" else 1 for w in windows], dtype=int)
    return X, y_task, y_bin


FEATURE_HEADER = (["subject_id", "t_start_s", "task_label", "binary_label"]
                  + [f"v{i}" for i in range(VECTOR_LENGTH)])


def write_features_csv(path, windows: Sequence[FeatureWindow]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(FEATURE_HEADER)
        for w in windows:
            wr.writerow([w.subject_id, repr(round(w.t_start_s, 6)), w.task_label, w.binary_label]
                        + [repr(float(v)) for v in w.vector])


def read_features_csv(path) -> list:
    out = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != FEATURE_HEADER:
            raise ValueError(f"{path}: unexpected header")
        for row in rd:
            out.append(FeatureWindow(np.array(row[4:], dtype=float), row[2], float(row[1]), row[0]))
    return out
