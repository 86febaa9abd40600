"""Session preprocessing: impute -> filter -> resample -> z-score -> segment."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .features import PUPIL_FS, WindowSpec, segment, zscore_per_channel
from .impute import FcmConfig, impute_pupil
from .signals import MultimodalRecording, design_butterworth_highpass, filter_forward, resample

log = logging.getLogger(__name__)

STAGES = ("impute", "filter", "resample", "zscore", "segment")


@dataclass(frozen=True)
class PreprocessConfig:
    target_fs: float = 500.0
    highpass_order: int = 5
    highpass_hz: float = 0.5
    fcm: FcmConfig = FcmConfig()
    impute_dim: int = 8
    impute_lag: int = 4
    window: WindowSpec = field(default_factory=WindowSpec)


def clean_recording(rec: MultimodalRecording, cfg: PreprocessConfig = PreprocessConfig(),
                    trace=None) -> MultimodalRecording:
    """Everything up to (not including) segmentation."""
    trace = trace if trace is not None else []

    trace.append("impute")
    log.info("%s: impute pupil gaps", rec.subject_id)
    rec = rec.with_modality("pupil", [
        impute_pupil(c, cfg.fcm, cfg.impute_dim, cfg.impute_lag) for c in rec.pupil])

    trace.append("filter")
    log.info("%s: order-%d high-pass at %g Hz", rec.subject_id, cfg.highpass_order, cfg.highpass_hz)
    for mod in ("eeg", "fnirs_hbo2", "fnirs_hbr", "pupil"):
        chans = rec.modality(mod)
        hp = design_butterworth_highpass(cfg.highpass_order, cfg.highpass_hz, chans[0].fs_hz)
        rec = rec.with_modality(mod, [filter_forward(hp, c) for c in chans])

    trace.append("resample")
    log.info("%s: resample to %g Hz (pupil %g Hz)", rec.subject_id, cfg.target_fs, PUPIL_FS)
    rec = rec.map_channels(lambda c: resample(c, cfg.target_fs), ("eeg", "fnirs_hbo2", "fnirs_hbr"))
    rec = rec.map_channels(lambda c: resample(c, PUPIL_FS), ("pupil",))

    trace.append("zscore")
    log.info("%s: z-score channels", rec.subject_id)
    return zscore_per_channel(rec)


def preprocess(rec: MultimodalRecording, cfg: PreprocessConfig = PreprocessConfig(),
               trace=None) -> list:
    """Full chain from a raw recording to labelled feature windows."""
    trace = trace if trace is not None else []
    rec = clean_recording(rec, cfg, trace)
    trace.append("segment")
    windows = segment(rec, cfg.window)
    log.info("%s: %d windows", rec.subject_id, len(windows))
    return windows
