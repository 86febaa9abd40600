"""Study instruments: SURG-TLX pairwise-weighted workload and fNIRS epoch averages."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DuplicatePairError,
    MalformedCsvError,
    MissingFileError,
    MissingPairError,
    NoEpochsError,
    RatingOutOfRangeError,
    ShapeMismatchError,
)
from .signals import MultimodalRecording

SURGTLX_DIMENSIONS = ("MD", "PD", "TD", "TC", "SS", "DI")
SURGTLX_NAMES = {
    "MD": "mental demand",
    "PD": "physical demand",
    "TD": "temporal demand",
    "TC": "task complexity",
    "SS": "situational stress",
    "DI": "distractions",
}
N_PAIRS = 15


# --------------------------------------------------------------------------
# SURG-TLX
# --------------------------------------------------------------------------

def parse_pair(entry):
    """``"MD>PD"`` or ``("MD", "PD")`` -> ``(winner, loser)``."""
    if isinstance(entry, str):
        parts = entry.strip().split(">")
        if len(parts) != 2:
            raise ValueError(f"pair entry {entry!r} is not of the form WINNER>LOSER")
        winner, loser = (p.strip() for p in parts)
    else:
        winner, loser = entry
    for d in (winner, loser):
        if d not in SURGTLX_DIMENSIONS:
            raise ValueError(f"unknown dimension {d!r} in pair entry {entry!r}")
    if winner == loser:
        raise ValueError(f"pair entry {entry!r} compares a dimension with itself")
    return winner, loser


@dataclass(frozen=True)
class SurgTlxResponse:
    ratings: tuple                  # six values, ordered as SURGTLX_DIMENSIONS
    pairwise: tuple                 # 15 entries naming the winner of each pair
    rating_max: float = 20.0

    def validate(self):
        """Raise unless the response is complete; return ``{pair: winner}``."""
        r = np.asarray(self.ratings, dtype=float)
        if r.shape != (len(SURGTLX_DIMENSIONS),):
            raise ShapeMismatchError(f"expected {len(SURGTLX_DIMENSIONS)} ratings, got {r.size}")
        bad = ~((r >= 0) & (r <= self.rating_max))
        if bad.any():
            i = int(np.argmax(bad))
            raise RatingOutOfRangeError(
                f"{SURGTLX_DIMENSIONS[i]} rating {r[i]} outside [0, {self.rating_max:g}]")
        winners = {}
        for entry in self.pairwise:
            w, l = parse_pair(entry)
            key = frozenset((w, l))
            if key in winners:
                raise DuplicatePairError(f"pair {'/'.join(sorted(key))} appears more than once")
            winners[key] = w
        missing = [f"{a}/{b}" for a, b in combinations(SURGTLX_DIMENSIONS, 2)
                   if frozenset((a, b)) not in winners]
        if missing:
            raise MissingPairError(f"{len(missing)} pair(s) not compared: {', '.join(missing)}")
        return winners


@dataclass(frozen=True)
class SurgTlxScore:
    weights: tuple          # pairs won per dimension, sums to 15
    weighted_score: float
    raw_mean: float


def surgtlx_score(r: SurgTlxResponse) -> SurgTlxScore:
    """Weight = pairs won; score = sum(rating * weight) / 15."""
    winners = r.validate()
    weights = tuple(sum(1 for w in winners.values() if w == d) for d in SURGTLX_DIMENSIONS)
    ratings = np.asarray(r.ratings, dtype=float)
    score = float(np.dot(ratings, weights) / N_PAIRS)
    return SurgTlxScore(weights, score, float(ratings.mean()))


SURGTLX_HEADER = (["participant", "task"] + list(SURGTLX_DIMENSIONS)
                  + [f"p{i + 1}" for i in range(N_PAIRS)])


def read_surgtlx_csv(path):
    """Rows of ``(participant, task, SurgTlxResponse)``.

    Validation errors are re-raised with the 1-based data row number.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"{path}: file not found")
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or [h.strip() for h in header[:8]] != SURGTLX_HEADER[:8]:
            raise MalformedCsvError(f"{path}: header must start with {','.join(SURGTLX_HEADER[:8])}")
        for row_no, row in enumerate(rd, start=1):
            if not row:
                continue
            if len(row) < 8:
                raise MalformedCsvError(f"{path}: row {row_no} has {len(row)} fields")
            try:
                ratings = tuple(float(v) for v in row[2:8])
            except ValueError as exc:
                raise MalformedCsvError(f"{path}: row {row_no}: {exc}") from exc
            pairs = tuple(v for v in row[8:] if v.strip())
            resp = SurgTlxResponse(ratings, pairs)
            try:
                resp.validate()
            except ValueError as exc:
                kind = type(exc) if hasattr(exc, "code") else MalformedCsvError
                raise kind(f"{path}: row {row_no}: {exc}") from exc
            out.append((row[0], row[1], resp))
    return out


def write_surgtlx_csv(path, rows):
    """Inverse of :func:`read_surgtlx_csv`; pairs are written as ``W>L``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(SURGTLX_HEADER)
        for participant, task, resp in rows:
            pairs = ["%s>%s" % parse_pair(p) for p in resp.pairwise]
            wr.writerow([participant, task] + [f"{v:g}" for v in resp.ratings] + pairs)


def write_surgtlx_scores(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["participant", "task"] + [f"w_{d}" for d in SURGTLX_DIMENSIONS]
                    + ["weighted_score", "raw_mean"])
        for participant, task, resp in rows:
            s = surgtlx_score(resp)
            wr.writerow([participant, task, *s.weights, repr(s.weighted_score), repr(s.raw_mean)])


# --------------------------------------------------------------------------
# hemodynamic epoch averages
# --------------------------------------------------------------------------

MODALITIES = ("fnirs_hbo2", "fnirs_hbr")


@dataclass(frozen=True)
class EpochAverage:
    """Onset-aligned, baseline-corrected means per task.

    ``responses[modality][task]`` has shape ``(n_channels, n_samples)``;
    ``times_s`` is relative to task onset.
    """

    times_s: np.ndarray
    responses: dict
    channel_names: tuple
    epoch_counts: dict      # task -> epochs averaged
    dropped: dict           # task -> epochs outside the recording
    pre_s: float
    post_s: float
    fs_hz: float

    @property
    def tasks(self):
        return tuple(self.epoch_counts)


def epoch_average(rec: MultimodalRecording, pre_s: float = 5.0, post_s: float = 30.0,
                  tasks: Sequence[str] = None) -> EpochAverage:
    """Average ``[onset - pre_s, onset + post_s)`` segments of HbO2 and HbR per task.

    Each epoch has the mean of its pre-onset span subtracted (nothing is
    subtracted when ``pre_s == 0``). Epochs running past either end of the
    recording are dropped and counted. ``tasks`` defaults to every labelled
    task except NoTask.
    """
    if pre_s < 0 or post_s < 0:
        raise ValueError("pre_s and post_s must be >= 0")
    if not rec.events.intervals:
        raise NoEpochsError("recording has no events")
    fs = rec.fnirs_hbo2[0].fs_hz
    n_pre, n_post = int(round(pre_s * fs)), int(round(post_s * fs))
    length = n_pre + n_post
    if length < 1:
        raise ValueError("epoch window is empty")
    if tasks is None:
        tasks = sorted({lab for lab, _, _ in rec.events.intervals if lab != "NoTask"})
    data = {m: np.stack([c.samples for c in rec.modality(m)]) for m in MODALITIES}
    n_total = data[MODALITIES[0]].shape[1]

    responses = {m: {} for m in MODALITIES}
    counts, dropped = {}, {}
    for task in tasks:
        starts = [int(round(t * fs)) - n_pre for t in rec.events.onsets(task)]
        good = [s for s in starts if s >= 0 and s + length <= n_total]
        dropped[task] = len(starts) - len(good)
        if not good:
            raise NoEpochsError(f"no usable epochs for {task}")
        counts[task] = len(good)
        for m in MODALITIES:
            seg = np.stack([data[m][:, s:s + length] for s in good])   # (epochs, ch, L)
            if n_pre:
                seg = seg - seg[:, :, :n_pre].mean(axis=2, keepdims=True)
            responses[m][task] = seg.mean(axis=0)
    times = (np.arange(length) - n_pre) / fs
    names = tuple(c.name for c in rec.fnirs_hbo2)
    return EpochAverage(times, responses, names, counts, dropped, pre_s, post_s, fs)


def grand_average(eas: Sequence[EpochAverage]) -> EpochAverage:
    """Across-subject mean of per-subject averages, each subject weighted equally.

    Channels are kept and a ``mean`` channel is appended; it averages
    channels within each subject first and then across subjects.
    """
    if not eas:
        raise NoEpochsError("no subjects to average")
    ref = eas[0]
    for ea in eas[1:]:
        if ea.times_s.shape != ref.times_s.shape or ea.channel_names != ref.channel_names:
            raise ShapeMismatchError("subjects differ in epoch grid or channel layout")
    tasks = [t for t in ref.tasks if all(t in ea.epoch_counts for ea in eas)]
    responses = {m: {} for m in MODALITIES}
    for m in MODALITIES:
        for t in tasks:
            per_ch = np.mean([ea.responses[m][t] for ea in eas], axis=0)
            ch_mean = np.mean([ea.responses[m][t].mean(axis=0) for ea in eas], axis=0)
            responses[m][t] = np.vstack([per_ch, ch_mean[None]])
    return EpochAverage(ref.times_s, responses, ref.channel_names + ("mean",),
                        {t: sum(ea.epoch_counts[t] for ea in eas) for t in tasks},
                        {t: sum(ea.dropped[t] for ea in eas) for t in tasks},
                        ref.pre_s, ref.post_s, ref.fs_hz)


@dataclass(frozen=True)
class ResponseStats:
    task: str
    channel: str
    modality: str
    mean: float
    peak: float             # signed value of the largest post-onset excursion
    time_to_peak_s: float


def task_summary_stats(ea: EpochAverage) -> list:
    """Mean, signed peak and time-to-peak over the post-onset span, per task/channel/modality."""
    post = ea.times_s >= 0
    t_post = ea.times_s[post]
    out = []
    for task in ea.tasks:
        for m in MODALITIES:
            resp = ea.responses[m][task][:, post]
            for ch, x in zip(ea.channel_names, resp):
                if x.size == 0:
                    out.append(ResponseStats(task, ch, m, 0.0, 0.0, 0.0))
                    continue
                k = int(np.argmax(np.abs(x)))
                out.append(ResponseStats(task, ch, m, float(x.mean()), float(x[k]),
                                         float(t_post[k])))
    return out


HEMO_HEADER = ["task", "channel", "modality", "mean", "peak", "time_to_peak_s"]


def write_hemo_summary(path, stats: Sequence[ResponseStats]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(HEMO_HEADER)
        for s in stats:
            wr.writerow([s.task, s.channel, s.modality, repr(s.mean), repr(s.peak),
                         repr(s.time_to_peak_s)])


def peak_by_task(stats: Sequence[ResponseStats], channel: str = "mean",
                 modality: str = "fnirs_hbo2") -> dict:
    return {s.task: s.peak for s in stats if s.channel == channel and s.modality == modality}
