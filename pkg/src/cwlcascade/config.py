"""Run configuration: built-in defaults < key=value file < command-line flags.

Every key of :class:`RunConfig` can appear in the config file (``key = value``,
``#`` comments) and as a flag (``--key-name``). Unknown keys are an error.

Randomness flows from the root ``seed``: each module seed is
``(seed + tag_hash(tag)) mod 2**31`` with ``tag_hash`` the first four bytes of
the SHA-256 of the module tag, unless an explicit module seed is given.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .cascade import ExperimentConfig
from .cwt import CwtConfig
from .errors import InvalidConfigError, MissingFileError
from .features import WindowSpec
from .impute import FcmConfig
from .pipeline import PreprocessConfig
from .synth import SynthConfig

SEED_TAGS = ("synth", "impute", "experiment", "surgtlx")


def tag_hash(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:4], "big")


def derive_seed(root: int, tag: str) -> int:
    return (int(root) + tag_hash(tag)) % 2 ** 31


def _opt(default, help_text):
    return field(default=default, metadata={"help": help_text})


@dataclass(frozen=True)
class RunConfig:
    seed: int = _opt(7, "root seed for every random choice")
    out: str = _opt("out", "output root directory")
    sessions: str = _opt("", "session directory root (default OUT/sessions)")
    features: str = _opt("", "feature directory (default OUT/features)")
    # generate
    subjects: int = _opt(5, "number of synthetic subjects")
    task_s: float = _opt(120.0, "task block length in seconds")
    rest_s: float = _opt(60.0, "NoTask block length in seconds")
    eeg_fs: float = _opt(1000.0, "synthetic EEG rate (Hz)")
    fnirs_fs: float = _opt(1000.0, "synthetic fNIRS rate (Hz)")
    pupil_fs: float = _opt(120.0, "synthetic pupil rate (Hz)")
    blink_rate: float = _opt(15.0, "blinks per minute")
    synth_seed: int = _opt(-1, "generator seed (-1 derives it from --seed)")
    # preprocess
    target_fs: float = _opt(500.0, "EEG/fNIRS resampling rate (Hz)")
    highpass_order: int = _opt(5, "Butterworth high-pass order")
    highpass_hz: float = _opt(0.5, "high-pass cutoff (Hz)")
    impute_c: int = _opt(5, "fuzzy c-means cluster count")
    impute_m: float = _opt(2.0, "fuzzy c-means fuzzifier")
    impute_tol: float = _opt(1e-5, "fuzzy c-means tolerance")
    impute_max_iter: int = _opt(100, "fuzzy c-means iteration cap")
    impute_seed: int = _opt(-1, "fuzzy c-means seed (-1 derives it from --seed)")
    impute_dim: int = _opt(8, "delay-embedding dimension")
    impute_lag: int = _opt(4, "delay-embedding lag (samples)")
    window: int = _opt(400, "window length (samples)")
    stride: int = _opt(200, "window stride (samples)")
    label_rule: str = _opt("majority", "window label rule: majority or center")
    # train-eval
    repeats: int = _opt(5, "number of random 70/30 splits")
    models: str = _opt("cascade,elm,melm", "comma list from cascade,cnn1d,elm,melm")
    baseline_task: str = _opt("multiclass", "task for elm/melm: binary or multiclass")
    train_frac: float = _opt(0.7, "training fraction per class")
    stage1_epochs: int = _opt(50, "stage-1 fine-tuning epochs")
    stage2_epochs: int = _opt(80, "stage-2 training epochs")
    batch_size: int = _opt(32, "mini-batch size")
    lr: float = _opt(1e-3, "Adam learning rate")
    k_trainable_tail: int = _opt(1, "parameterised layers left trainable after pretraining")
    pretrain_n: int = _opt(800, "surrogate pretraining images")
    pretrain_epochs: int = _opt(10, "surrogate pretraining epochs")
    elm_hidden: int = _opt(256, "ELM hidden units")
    melm_layers: str = _opt("256,128", "MELM autoencoder widths")
    ridge: float = _opt(1e-6, "ridge term for ELM/MELM readouts")
    n_scales: int = _opt(64, "wavelet scales")
    freq_min_hz: float = _opt(0.5, "lowest wavelet frequency")
    freq_max_hz: float = _opt(60.0, "highest wavelet frequency")
    # study
    pre_s: float = _opt(5.0, "epoch baseline span before onset (s)")
    post_s: float = _opt(30.0, "epoch span after onset (s)")
    surgtlx: str = _opt("", "questionnaire CSV (default OUT/surgtlx.csv)")
    # dump-scalograms
    limit: int = _opt(0, "scalograms to dump (0 = all)")

    def __post_init__(self):
        checks = [
            (self.subjects >= 1, "subjects must be >= 1"),
            (self.repeats >= 1, "repeats must be >= 1"),
            (self.window >= 1 and self.stride >= 1, "window and stride must be >= 1"),
            (self.label_rule in ("majority", "center"), "label_rule must be majority or center"),
            (self.limit >= 0, "limit must be >= 0"),
            (self.task_s > 0 and self.rest_s > 0, "block lengths must be > 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidConfigError(msg)
        self.model_list()
        self.melm_dims()

    # ---- derived paths and seeds -------------------------------------------------

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def sessions_dir(self) -> Path:
        return Path(self.sessions) if self.sessions else self.out_dir / "sessions"

    @property
    def features_dir(self) -> Path:
        return Path(self.features) if self.features else self.out_dir / "features"

    @property
    def surgtlx_path(self) -> Path:
        return Path(self.surgtlx) if self.surgtlx else self.out_dir / "surgtlx.csv"

    def module_seed(self, tag: str) -> int:
        explicit = {"synth": self.synth_seed, "impute": self.impute_seed}.get(tag, -1)
        return explicit if explicit >= 0 else derive_seed(self.seed, tag)

    def model_list(self) -> tuple:
        models = tuple(m.strip() for m in self.models.split(",") if m.strip())
        if not models:
            raise InvalidConfigError("models must name at least one model")
        return models

    def melm_dims(self) -> tuple:
        try:
            dims = tuple(int(v) for v in self.melm_layers.split(",") if v.strip())
        except ValueError as exc:
            raise InvalidConfigError(f"melm_layers: {exc}") from exc
        if any(d < 1 for d in dims):
            raise InvalidConfigError("melm_layers widths must be >= 1")
        return dims

    # ---- module configs ------------------------------------------------------------

    def synth_config(self) -> SynthConfig:
        return SynthConfig(seed=self.module_seed("synth"), task_s=self.task_s, rest_s=self.rest_s,
                           eeg_fs=self.eeg_fs, fnirs_fs=self.fnirs_fs, pupil_fs=self.pupil_fs,
                           blink_rate_per_min=self.blink_rate)

    def preprocess_config(self) -> PreprocessConfig:
        fcm = FcmConfig(n_clusters=self.impute_c, m=self.impute_m, tol=self.impute_tol,
                        max_iter=self.impute_max_iter, seed=self.module_seed("impute"))
        spec = WindowSpec(self.window, self.stride, self.label_rule)
        return PreprocessConfig(target_fs=self.target_fs, highpass_order=self.highpass_order,
                                highpass_hz=self.highpass_hz, fcm=fcm, impute_dim=self.impute_dim,
                                impute_lag=self.impute_lag, window=spec)

    def experiment_config(self) -> ExperimentConfig:
        cwt = CwtConfig(n_scales=self.n_scales, freq_min_hz=self.freq_min_hz,
                        freq_max_hz=self.freq_max_hz)
        return ExperimentConfig(
            seed=self.module_seed("experiment"), train_frac=self.train_frac,
            fs_hz=self.target_fs, cwt=cwt, models=self.model_list(),
            baseline_task=self.baseline_task, stage1_epochs=self.stage1_epochs,
            stage2_epochs=self.stage2_epochs, batch_size=self.batch_size, lr=self.lr,
            k_trainable_tail=self.k_trainable_tail, pretrain_n=self.pretrain_n,
            pretrain_epochs=self.pretrain_epochs, elm_hidden=self.elm_hidden,
            melm_layers=self.melm_dims(), ridge=self.ridge)


CONFIG_FIELDS = {f.name: f for f in fields(RunConfig)}


def _convert(name: str, raw):
    f = CONFIG_FIELDS[name]
    typ = {"int": int, "float": float, "str": str}[f.type if isinstance(f.type, str)
                                                   else f.type.__name__]
    if isinstance(raw, typ) and not isinstance(raw, bool):
        return raw
    try:
        return typ(str(raw).strip())
    except ValueError as exc:
        raise InvalidConfigError(f"{name}: cannot parse {raw!r} as {typ.__name__}") from exc


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines to a dict of converted values; unknown keys raise."""
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"{source}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_FIELDS:
            raise InvalidConfigError(f"{source}:{n}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def read_config_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"{p}: config file not found")
    return parse_config_text(p.read_text(encoding="utf-8"), str(p))


def build_config(file_values: dict = None, overrides: dict = None) -> RunConfig:
    """Defaults, then file values, then explicit overrides (flags)."""
    values = {}
    for src in (file_values or {}, overrides or {}):
        for key, v in src.items():
            if key not in CONFIG_FIELDS:
                raise InvalidConfigError(f"unknown key {key!r}")
            values[key] = _convert(key, v)
    return replace(RunConfig(), **values)


def format_config(cfg: RunConfig) -> str:
    """Round-trippable ``key = value`` text of every setting."""
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in fields(cfg))
