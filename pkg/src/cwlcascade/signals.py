"""Multimodal recordings, session-directory I/O, Butterworth filtering and resampling.

A session directory holds::

    manifest.txt      key=value lines (subject_id, eeg_fs, fnirs_fs, pupil_fs,
                      eeg_channels, fnirs_channels, pupil_channels)
    eeg.csv           t_s, one column per EEG channel
    fnirs_hbo2.csv    t_s, one column per fNIRS channel
    fnirs_hbr.csv     t_s, one column per fNIRS channel
    pupil.csv         t_s, left, right   (empty cell = missing sample)
    events.csv        label,start_s,end_s

All CSVs are UTF-8, comma separated, ``.`` decimal point, LF line endings.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import signal as sps

from .errors import (
    EmptyInputError,
    InconsistentRateError,
    InvalidCutoffError,
    MalformedCsvError,
    MissingFileError,
    UnimputedInputError,
)

TASK_LABELS = ("Task1", "Task2", "Task3", "Task4", "NoTask")
BINARY_LABELS = ("CWL", "NoTask")

MODALITY_FILES = {
    "eeg": "eeg.csv",
    "fnirs_hbo2": "fnirs_hbo2.csv",
    "fnirs_hbr": "fnirs_hbr.csv",
    "pupil": "pupil.csv",
}


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelStream:
    """One channel of samples at a fixed rate, with a per-sample missing flag."""

    name: str
    fs_hz: float
    samples: np.ndarray
    missing_mask: np.ndarray = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        mask = (np.zeros(samples.shape, dtype=bool) if self.missing_mask is None
                else np.asarray(self.missing_mask, dtype=bool))
        if samples.ndim != 1:
            raise ValueError(f"{self.name}: samples must be 1-D")
        if mask.shape != samples.shape:
            raise ValueError(f"{self.name}: samples and missing_mask differ in length")
        if not self.fs_hz > 0:
            raise ValueError(f"{self.name}: fs_hz must be > 0")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "missing_mask", mask)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def has_missing(self) -> bool:
        return bool(self.missing_mask.any())


@dataclass(frozen=True)
class EventSchedule:
    """Sorted, non-overlapping labelled intervals ``(label, start_s, end_s)``."""

    intervals: tuple = ()

    def __post_init__(self):
        ivs = tuple((str(lab), float(s), float(e)) for lab, s, e in self.intervals)
        prev_end = -np.inf
        for lab, s, e in ivs:
            if lab not in TASK_LABELS:
                raise ValueError(f"unknown event label {lab!r}")
            if not (0 <= s < e):
                raise ValueError(f"bad interval ({lab}, {s}, {e})")
            if s < prev_end:
                raise ValueError("intervals must be sorted and non-overlapping")
            prev_end = e
        object.__setattr__(self, "intervals", ivs)

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def label_at(self, t_s: float):
        """Label of the interval containing ``t_s`` (half-open), or None."""
        for lab, s, e in self.intervals:
            if s <= t_s < e:
                return lab
        return None

    def onsets(self, label: str) -> list:
        return [s for lab, s, _ in self.intervals if lab == label]


@dataclass(frozen=True)
class MultimodalRecording:
    eeg: list
    fnirs_hbo2: list
    fnirs_hbr: list
    pupil: list
    events: EventSchedule
    subject_id: str = "S00"

    def __post_init__(self):
        for mod in ("eeg", "fnirs_hbo2", "fnirs_hbr", "pupil"):
            chans = getattr(self, mod)
            if not chans:
                raise ValueError(f"{mod}: no channels")
            fs = {c.fs_hz for c in chans}
            n = {len(c) for c in chans}
            if len(fs) != 1:
                raise InconsistentRateError(f"{mod}: channels disagree on fs {sorted(fs)}")
            if len(n) != 1:
                raise ValueError(f"{mod}: channels disagree on length {sorted(n)}")
        if len(self.pupil) != 2:
            raise ValueError(f"pupil must have exactly 2 channels, got {len(self.pupil)}")
        if self.fnirs_hbo2[0].fs_hz != self.fnirs_hbr[0].fs_hz:
            raise InconsistentRateError("HbO2 and HbR sample rates differ")

    def modality(self, name: str) -> list:
        return getattr(self, name)

    def with_modality(self, name: str, channels: Sequence[ChannelStream]) -> "MultimodalRecording":
        return replace(self, **{name: list(channels)})

    def map_channels(self, fn, modalities=("eeg", "fnirs_hbo2", "fnirs_hbr", "pupil")):
        """Apply ``fn(ChannelStream) -> ChannelStream`` to every channel of the given modalities."""
        return replace(self, **{mod: [fn(c) for c in getattr(self, mod)] for mod in modalities})


@dataclass(frozen=True)
class FilterCoefficients:
    """Digital IIR filter in transfer-function and pole/zero form.

    ``b``/``a`` are the direct-form polynomials (``a[0] == 1``). The
    pole/zero/gain triple is kept alongside because evaluating and applying a
    low-cutoff filter from the expanded polynomials loses several digits.
    """

    b: np.ndarray
    a: np.ndarray
    order: int
    zeros: np.ndarray = field(default=None, repr=False)
    poles: np.ndarray = field(default=None, repr=False)
    gain: float = None

    def __post_init__(self):
        if len(self.b) != self.order + 1 or len(self.a) != self.order + 1:
            raise ValueError("len(b) and len(a) must equal order + 1")
        if self.a[0] != 1:
            raise ValueError("a[0] must be 1")

    def is_stable(self) -> bool:
        poles = self.poles if self.poles is not None else np.roots(self.a)
        return bool(np.all(np.abs(poles) < 1))

    def sos(self) -> np.ndarray:
        if self.poles is None:
            return sps.tf2sos(self.b, self.a)
        return sps.zpk2sos(self.zeros, self.poles, self.gain)

    def freq_response(self, freqs_hz, fs_hz: float) -> np.ndarray:
        """Complex response at the given frequencies."""
        z = np.exp(2j * np.pi * np.asarray(freqs_hz, dtype=float) / fs_hz)
        if self.poles is None:
            return np.polyval(self.b, z) / np.polyval(self.a, z)
        num = np.prod(z[..., None] - self.zeros, axis=-1) if len(self.zeros) else 1.0
        den = np.prod(z[..., None] - self.poles, axis=-1)
        return self.gain * num / den


# --------------------------------------------------------------------------
# filter design
# --------------------------------------------------------------------------

def _butter_digital(order: int, cutoff_hz: float, fs_hz: float, highpass: bool) -> FilterCoefficients:
    if order < 1:
        raise ValueError("order must be >= 1")
    if not (0 < cutoff_hz < fs_hz / 2):
        raise InvalidCutoffError(
            f"cutoff {cutoff_hz} Hz must lie strictly between 0 and Nyquist ({fs_hz / 2} Hz)")
    fs2 = 2.0 * fs_hz
    warped = fs2 * np.tan(np.pi * cutoff_hz / fs_hz)
    k = np.arange(order)
    proto = np.exp(1j * np.pi * (2 * k + order + 1) / (2 * order))
    if highpass:
        # s -> wc/s: n zeros at the origin, poles wc/p_k, gain 1/prod(-p_k)
        p_a = warped / proto
        k_a = np.real(1.0 / np.prod(-proto))
    else:
        p_a = warped * proto
        k_a = warped ** order

    # bilinear transform s = 2 fs (z - 1) / (z + 1); analog zeros at 0 (hp) or
    # infinity (lp) map to z = 1 and z = -1 respectively
    poles = (fs2 + p_a) / (fs2 - p_a)
    if highpass:
        zeros = np.ones(order)
        gain = k_a * np.real(fs2 ** order / np.prod(fs2 - p_a))
    else:
        zeros = -np.ones(order)
        gain = k_a * np.real(1.0 / np.prod(fs2 - p_a))
    b = gain * np.real(np.poly(zeros))
    a = np.real(np.poly(poles))
    return FilterCoefficients(b=b, a=a, order=order, zeros=zeros, poles=poles, gain=float(gain))


def design_butterworth_highpass(order: int, cutoff_hz: float, fs_hz: float) -> FilterCoefficients:
    """Butterworth high-pass via analog prototype and prewarped bilinear transform.

    The -3 dB point lands exactly on ``cutoff_hz`` and DC gain is exactly zero.
    """
    return _butter_digital(order, cutoff_hz, fs_hz, highpass=True)


def design_butterworth_lowpass(order: int, cutoff_hz: float, fs_hz: float) -> FilterCoefficients:
    return _butter_digital(order, cutoff_hz, fs_hz, highpass=False)


def butterworth_highpass_magnitude(freqs_hz, order: int, cutoff_hz: float, fs_hz: float) -> np.ndarray:
    """Analytic |H| of the prewarped digital Butterworth high-pass."""
    w = np.tan(np.pi * np.asarray(freqs_hz, dtype=float) / fs_hz) / np.tan(np.pi * cutoff_hz / fs_hz)
    return w ** order / np.sqrt(1.0 + w ** (2 * order))


# --------------------------------------------------------------------------
# filtering and resampling
# --------------------------------------------------------------------------

def filter_forward(coeffs: FilterCoefficients, x: ChannelStream) -> ChannelStream:
    """Causal single-pass IIR filtering (cascade of direct-form biquads)."""
    if x.has_missing:
        raise UnimputedInputError(f"{x.name}: impute missing samples before filtering")
    y = sps.sosfilt(coeffs.sos(), x.samples)
    return ChannelStream(x.name, x.fs_hz, y, np.zeros(len(y), dtype=bool))


def filter_channels(coeffs: FilterCoefficients, channels: Sequence[ChannelStream]) -> list:
    return [filter_forward(coeffs, c) for c in channels]


def resample(x: ChannelStream, target_fs: float) -> ChannelStream:
    """Change the sample rate of ``x``.

    Downsampling first applies a causal 6th-order Butterworth low-pass at
    0.45 * ``target_fs``. Integer ratios then keep every k-th sample; other
    ratios use linear interpolation on the (filtered) signal.
    """
    if not target_fs > 0:
        raise ValueError("target_fs must be > 0")
    if len(x) == 0:
        raise EmptyInputError(f"{x.name}: empty stream")
    if x.has_missing:
        raise UnimputedInputError(f"{x.name}: impute missing samples before resampling")
    fs = x.fs_hz
    if target_fs == fs:
        return ChannelStream(x.name, fs, x.samples.copy())
    n_out = int(round(len(x) * target_fs / fs))
    y = x.samples
    if target_fs < fs:
        lp = design_butterworth_lowpass(6, 0.45 * target_fs, fs)
        y = sps.sosfilt(lp.sos(), y)
    ratio = fs / target_fs
    k = int(round(ratio))
    if abs(ratio - k) < 1e-9:
        out = y[::k][:n_out]
    else:
        t_src = np.arange(len(y)) / fs
        t_out = np.arange(n_out) / target_fs
        out = np.interp(t_out, t_src, y)
    return ChannelStream(x.name, target_fs, out)


# --------------------------------------------------------------------------
# session directory I/O
# --------------------------------------------------------------------------

def _read_manifest(path: Path) -> dict:
    if not path.exists():
        raise MissingFileError(f"missing file: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MalformedCsvError(f"{path}: line {lineno} is not key=value")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def _read_channel_csv(path: Path, fs_hz: float, expected_channels=None):
    if not path.exists():
        raise MissingFileError(f"missing file: {path}")
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MalformedCsvError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[0] != "t_s":
        raise MalformedCsvError(f"{path}: first column must be t_s")
    ncomma = len(header) - 1
    for i, line in enumerate(lines[1:], start=2):
        if line.count(",") != ncomma:
            raise MalformedCsvError(
                f"{path}: row {i} has {line.count(',') + 1} fields, expected {ncomma + 1}")
    if expected_channels is not None and ncomma != expected_channels:
        raise MalformedCsvError(f"{path}: {ncomma} channels, manifest says {expected_channels}")
    try:
        df = pd.read_csv(io.StringIO(text), dtype=float, keep_default_na=False,
                         na_values=[""])
    except ValueError as exc:
        raise MalformedCsvError(f"{path}: {exc}") from exc
    t = df["t_s"].to_numpy()
    if np.isnan(t).any():
        raise MalformedCsvError(f"{path}: empty t_s cell")
    if len(t) > 1:
        dt = np.diff(t)
        if np.any(dt <= 0):
            bad = int(np.argmax(dt <= 0)) + 3
            raise MalformedCsvError(f"{path}: t_s not increasing at row {bad}")
        if abs(np.median(dt) * fs_hz - 1.0) > 1e-3:
            raise InconsistentRateError(
                f"{path}: t_s spacing implies {1 / np.median(dt):.6g} Hz, manifest says {fs_hz} Hz")
    chans = []
    for name in header[1:]:
        v = df[name].to_numpy()
        mask = np.isnan(v)
        chans.append(ChannelStream(name, fs_hz, np.where(mask, 0.0, v), mask))
    return chans


def read_events(path: Path) -> EventSchedule:
    if not path.exists():
        raise MissingFileError(f"missing file: {path}")
    rows = path.read_text(encoding="utf-8").splitlines()
    if not rows or rows[0].strip() != "label,start_s,end_s":
        raise MalformedCsvError(f"{path}: header must be label,start_s,end_s")
    ivs = []
    for i, line in enumerate(rows[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise MalformedCsvError(f"{path}: row {i} has {len(parts)} fields, expected 3")
        try:
            ivs.append((parts[0], float(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise MalformedCsvError(f"{path}: row {i}: {exc}") from exc
    try:
        return EventSchedule(tuple(ivs))
    except ValueError as exc:
        raise MalformedCsvError(f"{path}: {exc}") from exc


def load_recording(session_dir) -> MultimodalRecording:
    """Read a session directory into a validated :class:`MultimodalRecording`."""
    d = Path(session_dir)
    man = _read_manifest(d / "manifest.txt")
    try:
        fs = {"eeg": float(man["eeg_fs"]), "fnirs_hbo2": float(man["fnirs_fs"]),
              "fnirs_hbr": float(man["fnirs_fs"]), "pupil": float(man["pupil_fs"])}
    except KeyError as exc:
        raise MalformedCsvError(f"{d / 'manifest.txt'}: missing key {exc}") from exc
    counts = {"eeg": man.get("eeg_channels"), "fnirs_hbo2": man.get("fnirs_channels"),
              "fnirs_hbr": man.get("fnirs_channels"), "pupil": man.get("pupil_channels")}
    mods = {}
    for mod, fname in MODALITY_FILES.items():
        n = counts[mod]
        mods[mod] = _read_channel_csv(d / fname, fs[mod], int(n) if n is not None else None)
    if len(mods["fnirs_hbo2"][0]) != len(mods["fnirs_hbr"][0]):
        raise InconsistentRateError(f"{d}: HbO2 and HbR files differ in length")
    events = read_events(d / "events.csv")
    return MultimodalRecording(events=events, subject_id=man.get("subject_id", d.name), **mods)


def _write_channel_csv(path: Path, channels: Sequence[ChannelStream]):
    fs = channels[0].fs_hz
    n = len(channels[0])
    data = {"t_s": np.arange(n) / fs}
    for c in channels:
        data[c.name] = np.where(c.missing_mask, np.nan, c.samples)
    pd.DataFrame(data).to_csv(path, index=False, na_rep="", float_format="%.7g",
                              lineterminator="\n")


def write_events(path: Path, events: EventSchedule):
    lines = ["label,start_s,end_s"] + [f"{lab},{s:.6g},{e:.6g}" for lab, s, e in events]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_recording(rec: MultimodalRecording, session_dir) -> Path:
    """Write ``rec`` in the session-directory layout read by :func:`load_recording`."""
    d = Path(session_dir)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {
        "subject_id": rec.subject_id,
        "eeg_fs": f"{rec.eeg[0].fs_hz:g}",
        "fnirs_fs": f"{rec.fnirs_hbo2[0].fs_hz:g}",
        "pupil_fs": f"{rec.pupil[0].fs_hz:g}",
        "eeg_channels": len(rec.eeg),
        "fnirs_channels": len(rec.fnirs_hbo2),
        "pupil_channels": len(rec.pupil),
    }
    (d / "manifest.txt").write_text("".join(f"{k}={v}\n" for k, v in manifest.items()),
                                    encoding="utf-8")
    for mod, fname in MODALITY_FILES.items():
        _write_channel_csv(d / fname, rec.modality(mod))
    write_events(d / "events.csv", rec.events)
    return d
