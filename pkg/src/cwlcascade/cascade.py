"""Two-stage decision procedure, evaluation metrics and the repeated-split harness.

Stage 1 looks at the scalogram image of a feature vector and decides CWL vs
NoTask. Only windows flagged as CWL reach stage 2, a 1D-CNN over the raw
vector whose NoTask output is ignored at inference time.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import elm_fit, melm_fit
from .cwt import CwtConfig, scalogram_images
from .errors import (
    EmptyInputError,
    InvalidConfigError,
    ModelNotTrainedError,
    ShapeMismatchError,
    TrainingFailedError,
)
from .features import VECTOR_LENGTH, FeatureWindow, split_train_test, stack
from .nn import Sequential, TrainConfig, build_cnn1d, build_cnn2d, one_hot, pretrain_and_freeze, train
from .signals import BINARY_LABELS, TASK_LABELS
from .synth import generate_pretraining_set

log = logging.getLogger(__name__)

NOTASK = TASK_LABELS.index("NoTask")
BIN_NOTASK = BINARY_LABELS.index("NoTask")

# model name -> (task, class names). "tl" is stage 1 on its own.
MODEL_TASKS = {
    "tl": ("binary", BINARY_LABELS),
    "cascade": ("multiclass", TASK_LABELS),
    "cnn1d": ("multiclass", TASK_LABELS),
}
MODEL_NAMES = ("cascade", "cnn1d", "elm", "melm")
SPLITS = ("train", "test")


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predictions. Averaged matrices hold floats."""

    counts: np.ndarray
    class_names: tuple

    def __post_init__(self):
        c = np.asarray(self.counts)
        k = len(self.class_names)
        if c.shape != (k, k):
            raise ShapeMismatchError(f"counts {c.shape} do not match {k} classes")
        if np.any(c < 0):
            raise ValueError("confusion counts must be >= 0")

    @classmethod
    def from_labels(cls, y_true, y_pred, class_names) -> "ConfusionMatrix":
        k = len(class_names)
        y_true = np.asarray(y_true, dtype=int)
        y_pred = np.asarray(y_pred, dtype=int)
        counts = np.zeros((k, k), dtype=np.int64)
        np.add.at(counts, (y_true, y_pred), 1)
        return cls(counts, tuple(class_names))

    @property
    def total(self):
        return self.counts.sum()

    @property
    def support(self):
        return self.counts.sum(axis=1)

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)

    @property
    def precision(self) -> np.ndarray:
        col = self.counts.sum(axis=0).astype(float)
        diag = np.diag(self.counts).astype(float)
        return np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)

    @property
    def recall(self) -> np.ndarray:
        row = self.support.astype(float)
        diag = np.diag(self.counts).astype(float)
        return np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)


@dataclass(frozen=True)
class Evaluation:
    confusion: ConfusionMatrix
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix) -> "Evaluation":
        return cls(cm, cm.accuracy, cm.precision, cm.recall)


def evaluate_predictions(y_true, y_pred, class_names) -> Evaluation:
    if len(y_true) == 0:
        raise EmptyInputError("nothing to evaluate")
    return Evaluation.from_confusion(ConfusionMatrix.from_labels(y_true, y_pred, class_names))


def average_evaluations(evals: Sequence[Evaluation]) -> Evaluation:
    """Element-wise means of matrices, accuracies, precisions and recalls."""
    if not evals:
        raise EmptyInputError("no evaluations to average")
    names = evals[0].confusion.class_names
    cm = ConfusionMatrix(np.mean([e.confusion.counts for e in evals], axis=0), names)
    return Evaluation(cm, float(np.mean([e.accuracy for e in evals])),
                      np.mean([e.precision for e in evals], axis=0),
                      np.mean([e.recall for e in evals], axis=0))


# --------------------------------------------------------------------------
# the cascade
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CascadeOutput:
    """Batch prediction. ``stage2_proba`` rows are NaN where stage 2 was skipped."""

    labels: np.ndarray
    stage1_proba: np.ndarray
    stage2_proba: np.ndarray
    stage2_evaluated: np.ndarray

    @property
    def stage2_calls(self) -> int:
        return int(self.stage2_evaluated.sum())

    @property
    def binary_labels(self) -> np.ndarray:
        return np.where(self.stage2_evaluated, 0, BIN_NOTASK)


@dataclass(frozen=True)
class CascadePrediction:
    task_label: str
    stage1_proba: np.ndarray
    stage2_proba: np.ndarray = None   # None when stage 2 was not invoked


@dataclass
class CascadeModel:
    stage1: Sequential = None
    stage2: Sequential = None
    cwt_cfg: CwtConfig = field(default_factory=CwtConfig)
    fs_hz: float = 500.0

    def __post_init__(self):
        if self.stage1 is not None and self.stage1.output_shape != (2,):
            raise ShapeMismatchError(f"stage 1 must output 2 classes, got {self.stage1.output_shape}")
        if self.stage2 is not None and self.stage2.output_shape != (len(TASK_LABELS),):
            raise ShapeMismatchError(
                f"stage 2 must output {len(TASK_LABELS)} classes, got {self.stage2.output_shape}")

    def _require_trained(self):
        if self.stage1 is None or self.stage2 is None:
            raise ModelNotTrainedError("both stages must be trained before prediction")

    def stage1_inputs(self, X) -> np.ndarray:
        """Scalogram images ``(n, 1, H, W)`` in [0, 1] for raw feature vectors."""
        return scalogram_images(X, self.fs_hz, self.cwt_cfg)[:, None].astype(np.float32) / 255.0

    def predict_batch(self, X, images=None) -> CascadeOutput:
        """Gated prediction for ``X`` of shape ``(n, 848)``.

        ``images`` may carry precomputed stage-1 inputs. Stage 2 only ever
        sees the rows stage 1 flags as CWL.
        """
        self._require_trained()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != VECTOR_LENGTH:
            raise ShapeMismatchError(f"feature vectors must have {VECTOR_LENGTH} values")
        n = len(X)
        if images is None:
            images = self.stage1_inputs(X) if n else np.zeros((0, 1, 1, 1), np.float32)
        p1 = self.stage1.predict_proba(images) if n else np.zeros((0, 2), np.float32)
        gate = p1.argmax(axis=1) != BIN_NOTASK
        p2 = np.full((n, len(TASK_LABELS)), np.nan, dtype=np.float32)
        labels = np.full(n, NOTASK, dtype=int)
        if gate.any():
            p2[gate] = self.stage2.predict_proba(X[gate][:, None, :])
            masked = p2[gate].copy()
            masked[:, NOTASK] = -np.inf
            labels[gate] = masked.argmax(axis=1)
        return CascadeOutput(labels, p1, p2, gate)

    def predict(self, w: FeatureWindow) -> CascadePrediction:
        out = self.predict_batch(np.asarray(w.vector, dtype=float)[None, :])
        p2 = out.stage2_proba[0] if out.stage2_evaluated[0] else None
        return CascadePrediction(TASK_LABELS[out.labels[0]], out.stage1_proba[0], p2)


def evaluate(model: CascadeModel, windows: Sequence[FeatureWindow], images=None) -> Evaluation:
    """Five-class confusion matrix and metrics of the gated cascade."""
    if not windows:
        raise EmptyInputError("no windows to evaluate")
    X, y_task, _ = stack(windows)
    out = model.predict_batch(X, images)
    return evaluate_predictions(y_task, out.labels, TASK_LABELS)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 7
    train_frac: float = 0.7
    fs_hz: float = 500.0
    cwt: CwtConfig = field(default_factory=CwtConfig)
    models: tuple = ("cascade", "elm", "melm")
    baseline_task: str = "multiclass"     # task for elm / melm: binary or multiclass
    stage1_epochs: int = 50
    stage2_epochs: int = 80
    batch_size: int = 32
    lr: float = 1e-3
    k_trainable_tail: int = 1
    pretrain_n: int = 800
    pretrain_epochs: int = 10
    elm_hidden: int = 256
    melm_layers: tuple = (256, 128)
    ridge: float = 1e-6

    def __post_init__(self):
        unknown = set(self.models) - set(MODEL_NAMES)
        if unknown or not self.models:
            raise InvalidConfigError(f"models must be a non-empty subset of {MODEL_NAMES}")
        if self.baseline_task not in ("binary", "multiclass"):
            raise InvalidConfigError("baseline_task must be 'binary' or 'multiclass'")
        if not (0 < self.train_frac < 1):
            raise InvalidConfigError("train_frac must lie in (0, 1)")
        if self.stage1_epochs < 1 or self.stage2_epochs < 1 or self.pretrain_epochs < 1:
            raise InvalidConfigError("epoch counts must be >= 1")
        self.cwt.check(self.fs_hz)

    def task_of(self, model: str):
        if model in MODEL_TASKS:
            return MODEL_TASKS[model]
        return (self.baseline_task,
                BINARY_LABELS if self.baseline_task == "binary" else TASK_LABELS)

    def report_models(self) -> list:
        """Row order of every report: stage 1 alone, then the requested models."""
        out = []
        for m in MODEL_NAMES:
            if m in self.models:
                out += ["tl", "cascade"] if m == "cascade" else [m]
        return out


def _check_history(name, hist):
    if not hist.loss or not np.all(np.isfinite(hist.loss)):
        raise TrainingFailedError(f"{name}: training loss is not finite")


def pretrain_stage1(cfg: ExperimentConfig = ExperimentConfig()):
    """Surrogate-pretrained 2D network, frozen except its last ``k`` parameterised layers."""
    P, pl = generate_pretraining_set(cfg.pretrain_n, seed=cfg.seed, fs_hz=cfg.fs_hz,
                                     cwt_cfg=cfg.cwt)
    net = build_cnn2d((cfg.cwt.image_h, cfg.cwt.image_w), 2, seed=cfg.seed)
    tcfg = TrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, epochs=cfg.pretrain_epochs,
                       seed=cfg.seed)
    net, hist = pretrain_and_freeze(P, pl, net, cfg.k_trainable_tail, tcfg)
    _check_history("stage-1 pretraining", hist)
    return net, hist


def finetune_stage1(pretrained: Sequential, images, y_bin, seed: int, cfg: ExperimentConfig):
    """Fresh copy of the pretrained network with a reseeded tail, trained on ``images``."""
    net = pretrained.copy()
    rng = np.random.default_rng(seed)
    for i in range(net.frozen_prefix, len(net)):
        if net.layers[i].has_params:
            net.layers[i].reset(rng)
    tcfg = TrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, epochs=cfg.stage1_epochs, seed=seed)
    net, hist = train(net, images, y_bin, tcfg)
    _check_history("stage 1", hist)
    return net, hist


def train_stage2(X, y_task, seed: int, cfg: ExperimentConfig):
    net = build_cnn1d(X.shape[1], len(TASK_LABELS), seed=seed)
    tcfg = TrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, epochs=cfg.stage2_epochs, seed=seed)
    net, hist = train(net, np.asarray(X, dtype=np.float32)[:, None, :], y_task, tcfg)
    _check_history("stage 2", hist)
    return net, hist


# --------------------------------------------------------------------------
# repeated-split experiment
# --------------------------------------------------------------------------

@dataclass
class RepeatResult:
    repeat: int
    seed: int
    evaluations: dict = field(default_factory=dict)   # (model, split) -> Evaluation
    histories: dict = field(default_factory=dict)     # model -> TrainHistory
    timings: dict = field(default_factory=dict)       # model -> fit seconds
    stage2_calls: dict = field(default_factory=dict)  # split -> (calls, stage-1 positives)
    frozen_checksum: str = ""                          # stage-1 frozen layers after fine-tuning


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    repeats: list
    mean: dict                 # (model, split) -> averaged Evaluation
    pretrain_history: object = None
    pretrain_seconds: float = 0.0
    last_model: CascadeModel = None
    pretrained_checksum: str = ""   # stage-1 frozen layers before any fine-tuning


def _split_indices(windows, train_frac, seed):
    tagged = [FeatureWindow(w.vector, w.task_label, w.t_start_s, str(i)) for i, w in
              enumerate(windows)]
    tr, te = split_train_test(tagged, train_frac, seed)
    return (np.array([int(w.subject_id) for w in tr], dtype=int),
            np.array([int(w.subject_id) for w in te], dtype=int))


def run_experiment(windows: Sequence[FeatureWindow], cfg: ExperimentConfig = ExperimentConfig(),
                   n_repeats: int = 5) -> ExperimentResult:
    """Repeat a stratified split ``n_repeats`` times (seeds ``seed .. seed+n-1``).

    Stage 1 is pretrained once; every repeat fine-tunes a fresh copy, trains a
    new stage 2 and fits the requested baselines, then evaluates on both
    splits. The mean report averages every metric element-wise.
    """
    if n_repeats < 1:
        raise InvalidConfigError("n_repeats must be >= 1")
    if not windows:
        raise EmptyInputError("no windows")
    X, y_task, y_bin = stack(windows)
    need_cascade = "cascade" in cfg.models
    need_stage2 = need_cascade or "cnn1d" in cfg.models

    images = pretrained = pre_hist = None
    pre_s = 0.0
    if need_cascade:
        log.info("computing %d scalograms", len(X))
        images = scalogram_images(X, cfg.fs_hz, cfg.cwt)
        t0 = time.perf_counter()
        pretrained, pre_hist = pretrain_stage1(cfg)
        pre_s = time.perf_counter() - t0

    repeats = []
    model = None
    for r in range(n_repeats):
        seed = cfg.seed + r
        tr, te = _split_indices(windows, cfg.train_frac, seed)
        res = RepeatResult(r, seed)
        log.info("repeat %d (seed %d): %d train / %d test", r, seed, len(tr), len(te))
        split_idx = {"train": tr, "test": te}

        stage2 = None
        if need_stage2:
            t0 = time.perf_counter()
            stage2, res.histories["cnn1d"] = train_stage2(X[tr], y_task[tr], seed, cfg)
            res.timings["cnn1d"] = time.perf_counter() - t0
        if need_cascade:
            img = lambda idx: images[idx][:, None].astype(np.float32) / 255.0
            t0 = time.perf_counter()
            stage1, res.histories["tl"] = finetune_stage1(pretrained, img(tr), y_bin[tr], seed, cfg)
            res.timings["tl"] = time.perf_counter() - t0
            res.frozen_checksum = stage1.frozen_checksum()
            model = CascadeModel(stage1, stage2, cfg.cwt, cfg.fs_hz)
            for split, idx in split_idx.items():
                out = model.predict_batch(X[idx], img(idx))
                p1_pos = int(np.sum(out.stage1_proba.argmax(axis=1) != BIN_NOTASK))
                res.stage2_calls[split] = (out.stage2_calls, p1_pos)
                res.evaluations[("tl", split)] = evaluate_predictions(
                    y_bin[idx], out.stage1_proba.argmax(axis=1), BINARY_LABELS)
                res.evaluations[("cascade", split)] = evaluate_predictions(
                    y_task[idx], out.labels, TASK_LABELS)
        if "cnn1d" in cfg.models:
            for split, idx in split_idx.items():
                pred = stage2.predict_proba(X[idx][:, None, :]).argmax(axis=1)
                res.evaluations[("cnn1d", split)] = evaluate_predictions(
                    y_task[idx], pred, TASK_LABELS)

        for name, fit in (("elm", _fit_elm), ("melm", _fit_melm)):
            if name not in cfg.models:
                continue
            _, classes = cfg.task_of(name)
            y = y_bin if len(classes) == 2 else y_task
            t0 = time.perf_counter()
            clf = fit(X[tr], one_hot(y[tr], len(classes), float), seed, cfg)
            res.timings[name] = time.perf_counter() - t0
            for split, idx in split_idx.items():
                res.evaluations[(name, split)] = evaluate_predictions(
                    y[idx], clf.predict(X[idx]), classes)
        repeats.append(res)

    mean = {key: average_evaluations([r.evaluations[key] for r in repeats])
            for key in repeats[0].evaluations}
    return ExperimentResult(cfg, repeats, mean, pre_hist, pre_s, model,
                            pretrained.frozen_checksum() if pretrained is not None else "")


def _fit_elm(X, Y, seed, cfg):
    return elm_fit(X, Y, cfg.elm_hidden, cfg.ridge, seed)


def _fit_melm(X, Y, seed, cfg):
    return melm_fit(X, Y, cfg.melm_layers, cfg.ridge, seed, head_hidden=cfg.elm_hidden)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

REPORT_CLASSES = TASK_LABELS + ("CWL",)
SENSOR_SET = "EEG+fNIRS+PE"     # every model sees the fused 848-value vector


def _num(v) -> str:
    return repr(float(v))


def _report_rows(result: ExperimentResult):
    cfg = result.config
    tagged = [(str(r.repeat), r.evaluations) for r in result.repeats] + [("mean", result.mean)]
    for model in cfg.report_models():
        task, classes = cfg.task_of(model)
        for rep, evals in tagged:
            for split in SPLITS:
                ev = evals[(model, split)]
                prec = dict(zip(classes, ev.precision))
                rec = dict(zip(classes, ev.recall))
                yield ([model, task, SENSOR_SET, rep, split, _num(ev.accuracy),
                        _num(ev.confusion.total)]
                       + [_num(prec[c]) if c in prec else "" for c in REPORT_CLASSES]
                       + [_num(rec[c]) if c in rec else "" for c in REPORT_CLASSES])


REPORT_HEADER = (["model", "task", "sensors", "repeat", "split", "accuracy", "n"]
                 + [f"precision_{c}" for c in REPORT_CLASSES]
                 + [f"recall_{c}" for c in REPORT_CLASSES])


def write_reports(result: ExperimentResult, out_dir) -> list:
    """Write report.csv, confusion_<split>.csv, history.csv and summary.txt.

    Every file depends only on data and seeds, so identical runs give
    identical bytes. Wall-clock timings go to timings.csv via
    :func:`write_timings`.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    paths = []

    p = out / "report.csv"
    with open(p, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(REPORT_HEADER)
        wr.writerows(_report_rows(result))
    paths.append(p)

    for split in SPLITS:
        p = out / f"confusion_{split}.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["model", "task", "true_label", "predicted_label", "mean_count"])
            for model in cfg.report_models():
                cm = result.mean[(model, split)].confusion
                task, _ = cfg.task_of(model)
                for i, t in enumerate(cm.class_names):
                    for j, q in enumerate(cm.class_names):
                        wr.writerow([model, task, t, q, _num(cm.counts[i, j])])
        paths.append(p)

    p = out / "history.csv"
    with open(p, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["model", "repeat", "epoch", "loss", "accuracy"])
        if result.pretrain_history is not None:
            for e, (l, a) in enumerate(zip(result.pretrain_history.loss,
                                           result.pretrain_history.accuracy)):
                wr.writerow(["tl_pretrain", "", e + 1, _num(l), _num(a)])
        for r in result.repeats:
            for model, h in r.histories.items():
                for e, (l, a) in enumerate(zip(h.loss, h.accuracy)):
                    wr.writerow([model, r.repeat, e + 1, _num(l), _num(a)])
    paths.append(p)

    p = out / "summary.txt"
    p.write_text(format_summary(result), encoding="utf-8")
    paths.append(p)
    return paths


def format_summary(result: ExperimentResult) -> str:
    cfg = result.config
    lines = [f"repeats: {len(result.repeats)}  seeds: {cfg.seed}..{cfg.seed + len(result.repeats) - 1}",
             f"{'model':<8} {'task':<10} {'train_acc':>9} {'test_acc':>9} {'test_prec':>9}"]
    for model in cfg.report_models():
        task, _ = cfg.task_of(model)
        tr, te = result.mean[(model, "train")], result.mean[(model, "test")]
        lines.append(f"{model:<8} {task:<10} {tr.accuracy:9.4f} {te.accuracy:9.4f} "
                     f"{float(np.mean(te.precision)):9.4f}")
    calls = [r.stage2_calls["test"] for r in result.repeats if r.stage2_calls]
    if calls:
        ok = all(c == p for c, p in calls)
        lines.append(f"stage-2 calls equal stage-1 positives on every test split: {ok}")
    return "\n".join(lines) + "\n"


def write_timings(result: ExperimentResult, out_dir) -> Path:
    p = Path(out_dir) / "timings.csv"
    with open(p, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["model", "repeat", "fit_seconds"])
        if result.pretrain_history is not None:
            wr.writerow(["tl_pretrain", "", f"{result.pretrain_seconds:.3f}"])
        for r in result.repeats:
            for model, s in r.timings.items():
                wr.writerow([model, r.repeat, f"{s:.3f}"])
    return p
