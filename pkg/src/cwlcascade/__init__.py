"""Multimodal cognitive-workload pipeline with a two-stage classification cascade.

Modules: ``signals`` (streams, Butterworth design, resampling, session I/O),
``impute`` (fuzzy c-means for incomplete data), ``features`` (windows and the
848-value vector), ``cwt`` (Morlet scalograms), ``nn`` (numpy CNN engine),
``cascade`` (gated two-stage model and experiments), ``baselines`` (ELM,
MELM, PCA), ``study`` (SURG-TLX, epoch averages), ``synth`` (seeded sessions)
and ``cli``.
"""

from .cascade import (
    CascadeModel,
    ConfusionMatrix,
    ExperimentConfig,
    evaluate,
    run_experiment,
)
from .errors import CwlError
from .features import FeatureWindow, WindowSpec, segment
from .pipeline import PreprocessConfig, preprocess
from .signals import TASK_LABELS, ChannelStream, EventSchedule, MultimodalRecording
from .synth import SynthConfig, generate_session

__version__ = "0.1.0"

__all__ = [
    "CascadeModel", "ChannelStream", "ConfusionMatrix", "CwlError", "EventSchedule",
    "ExperimentConfig", "FeatureWindow", "MultimodalRecording", "PreprocessConfig",
    "SynthConfig", "TASK_LABELS", "WindowSpec", "evaluate", "generate_session", "preprocess",
    "run_experiment", "segment",
]
