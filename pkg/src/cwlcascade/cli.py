"""Command-line batch runner: generate, preprocess, train-eval, study, dump-scalograms.

Exit status is 0 on success, 2 for usage and configuration errors and 1 for
runtime failures. Failures print one ``ERROR <code>: <message>`` line on
stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import cascade, study, synth
from .config import RunConfig, build_config, format_config, read_config_file
from .cwt import CwtConfig, scalogram_images
from .errors import CwlError, EmptyDatasetError, InvalidConfigError, MissingFileError, UsageError
from .features import read_features_csv, stack, write_features_csv
from .nn import save_checkpoint
from .pipeline import preprocess
from .signals import load_recording, write_recording

log = logging.getLogger("cwlcascade")

COMMANDS = ("generate", "preprocess", "train-eval", "study", "dump-scalograms")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                   help="key = value settings file")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                   help="log pipeline stages to stderr")
    for f in fields(RunConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, metavar="V",
                       default=argparse.SUPPRESS, help=f"{f.metadata['help']} [{f.default}]")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = _Parser(prog="cwlcascade", parents=[common],
                     description="Synthetic multimodal workload pipeline and two-stage cascade.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    helps = {
        "generate": "write synthetic session directories and a questionnaire CSV",
        "preprocess": "impute, filter, resample, z-score and segment every session",
        "train-eval": "repeated-split cascade and baseline evaluation",
        "study": "SURG-TLX scores and hemodynamic epoch summaries",
        "dump-scalograms": "write stage-1 scalogram images for the feature windows",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
    return parser


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    args = vars(ns)
    file_values = read_config_file(args["config"]) if "config" in args else {}
    overrides = {f.name: args[f.name] for f in fields(RunConfig) if f.name in args}
    return build_config(file_values, overrides)


@contextlib.contextmanager
def _context(prefix: str):
    """Prefix the message of any pipeline error raised inside the block."""
    try:
        yield
    except CwlError as exc:
        raise type(exc)(f"{prefix}: {exc}") from exc


def _write_lines(path: Path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_generate(cfg: RunConfig) -> list:
    base = cfg.synth_config()
    root = cfg.sessions_dir
    written = []
    for i in range(cfg.subjects):
        with _context(f"subject {i}"):
            rec, truth = synth.generate_session(synth.subject_config(base, i))
            d = write_recording(rec, root / rec.subject_id)
            synth.write_ground_truth(truth, d / "ground_truth.csv")
        log.info("wrote %s", d)
        written.append(d)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    rows = synth.generate_surgtlx(cfg.subjects, cfg.module_seed("surgtlx"))
    study.write_surgtlx_csv(cfg.surgtlx_path, rows)
    written.append(cfg.surgtlx_path)
    return written


def _session_dirs(cfg: RunConfig) -> list:
    root = cfg.sessions_dir
    dirs = sorted(p for p in root.glob("*") if (p / "manifest.txt").is_file()) if root.is_dir() else []
    if not dirs:
        raise MissingFileError(f"{root}: no session directories found")
    return dirs


def cmd_preprocess(cfg: RunConfig) -> list:
    pcfg = cfg.preprocess_config()
    out = cfg.features_dir
    out.mkdir(parents=True, exist_ok=True)
    written, stage_log = [], []
    for d in _session_dirs(cfg):
        with _context(str(d)):
            rec = load_recording(d)
            trace = []
            windows = preprocess(rec, pcfg, trace)
        stage_log.append(f"{rec.subject_id}: {' -> '.join(trace)}")
        p = out / f"{rec.subject_id}.csv"
        write_features_csv(p, windows)
        log.info("%s: %d windows -> %s", rec.subject_id, len(windows), p)
        written.append(p)
    _write_lines(out / "stages.txt", stage_log)
    return written


def _load_features(cfg: RunConfig) -> list:
    root = cfg.features_dir
    files = sorted(root.glob("*.csv")) if root.is_dir() else []
    if not files:
        raise MissingFileError(f"{root}: no feature files found")
    windows = []
    for p in files:
        with _context(str(p)):
            windows += read_features_csv(p)
    if not windows:
        raise EmptyDatasetError(f"{root}: feature files contain no windows")
    return windows


def cmd_train_eval(cfg: RunConfig) -> list:
    ecfg = cfg.experiment_config()
    windows = _load_features(cfg)
    result = cascade.run_experiment(windows, ecfg, cfg.repeats)
    out = cfg.out_dir / "reports"
    written = cascade.write_reports(result, out)
    written.append(cascade.write_timings(result, out))
    if result.last_model is not None:
        for name, net in (("stage1", result.last_model.stage1), ("stage2", result.last_model.stage2)):
            p = out / f"{name}.cwlnn"
            save_checkpoint(net, p)
            written.append(p)
    print(cascade.format_summary(result), end="")
    return written


def cmd_study(cfg: RunConfig) -> list:
    out = cfg.out_dir / "study"
    out.mkdir(parents=True, exist_ok=True)
    rows = study.read_surgtlx_csv(cfg.surgtlx_path)
    p_scores = out / "surgtlx_scores.csv"
    study.write_surgtlx_scores(p_scores, rows)

    eas = []
    for d in _session_dirs(cfg):
        with _context(str(d)):
            eas.append(study.epoch_average(load_recording(d), cfg.pre_s, cfg.post_s))
    stats = study.task_summary_stats(study.grand_average(eas))
    p_hemo = out / "hemo_summary.csv"
    study.write_hemo_summary(p_hemo, stats)
    peaks = study.peak_by_task(stats)
    print(f"{len(rows)} questionnaire rows scored; {len(eas)} sessions averaged")
    print("HbO2 peak (channel mean): "
          + ", ".join(f"{t}={v:.4f}" for t, v in sorted(peaks.items())))
    return [p_scores, p_hemo]


def write_pgm(path: Path, image: np.ndarray):
    """Binary greyscale PGM (P5) for a uint8 image."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())


def cmd_dump_scalograms(cfg: RunConfig) -> list:
    windows = _load_features(cfg)
    if cfg.limit:
        windows = windows[:cfg.limit]
    X, _, _ = stack(windows)
    ccfg = CwtConfig(n_scales=cfg.n_scales, freq_min_hz=cfg.freq_min_hz, freq_max_hz=cfg.freq_max_hz)
    ccfg.check(cfg.target_fs)
    images = scalogram_images(X, cfg.target_fs, ccfg)
    out = cfg.out_dir / "scalograms"
    out.mkdir(parents=True, exist_ok=True)
    p = out / "scalograms.npz"
    np.savez(p, images=images, task_labels=np.array([w.task_label for w in windows]),
             subject_ids=np.array([w.subject_id for w in windows]),
             t_start_s=np.array([w.t_start_s for w in windows]))
    written = [p]
    for w, img in zip(windows, images):
        q = out / f"{w.subject_id}_{int(round(w.t_start_s * 1000))}_{w.task_label}.pgm"
        write_pgm(q, img)
        written.append(q)
    return written


HANDLERS = {
    "generate": cmd_generate,
    "preprocess": cmd_preprocess,
    "train-eval": cmd_train_eval,
    "study": cmd_study,
    "dump-scalograms": cmd_dump_scalograms,
}


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        if ns.command is None:
            raise UsageError(f"a command is required: {', '.join(COMMANDS)}")
        cfg = resolve_config(ns)
    except (UsageError, InvalidConfigError) as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 2
    except CwlError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 1

    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        (cfg.out_dir / f"config_{ns.command}.txt").write_text(format_config(cfg), encoding="utf-8")
        for p in HANDLERS[ns.command](cfg):
            print(p)
    except InvalidConfigError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 2
    except CwlError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0
