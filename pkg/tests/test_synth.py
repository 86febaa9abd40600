import numpy as np
import pytest

from cwlcascade.errors import InvalidConfigError
from cwlcascade.signals import TASK_LABELS
from cwlcascade.study import surgtlx_score
from cwlcascade.synth import (
    HrfParams,
    SynthConfig,
    default_blocks,
    generate_pretraining_set,
    generate_session,
    generate_surgtlx,
    pink_noise,
    subject_config,
    write_ground_truth,
)
from conftest import short_config


def test_same_seed_is_bit_identical():
    a, ta = generate_session(short_config(seed=5))
    b, tb = generate_session(short_config(seed=5))
    for mod in ("eeg", "fnirs_hbo2", "fnirs_hbr", "pupil"):
        for x, y in zip(a.modality(mod), b.modality(mod)):
            assert np.array_equal(x.samples, y.samples)
            assert np.array_equal(x.missing_mask, y.missing_mask)
    assert np.array_equal(ta.pupil_clean, tb.pupil_clean)


def test_different_seeds_differ():
    a, _ = generate_session(short_config(seed=5))
    b, _ = generate_session(short_config(seed=6))
    assert not np.array_equal(a.eeg[0].samples, b.eeg[0].samples)


def test_schedule_matches_ground_truth(short_session):
    rec, truth = short_session
    assert truth.events == rec.events
    labels = [lab for lab, _, _ in rec.events]
    assert labels[0::2] == ["NoTask"] * 5
    assert sorted(labels[1::2]) == ["Task1", "Task2", "Task3", "Task4"]


def test_shapes_and_rates(short_session):
    rec, _ = short_session
    duration = rec.events.intervals[-1][2]
    assert len(rec.eeg) == 4 and len(rec.fnirs_hbo2) == 3 and len(rec.pupil) == 2
    assert len(rec.eeg[0]) == round(duration * 1000)
    assert rec.fnirs_hbo2[0].fs_hz == 1000.0
    assert len(rec.pupil[0]) == round(duration * 120)


def test_null_config_is_flat():
    zero = {lab: 0.0 for lab in TASK_LABELS}
    cfg = short_config(eeg_noise_uv=0.0, eeg_band_uv=0.0, hrf_amplitude=zero, fnirs_noise=0.0,
                       fnirs_drift=0.0, cardiac_amp=0.0, pupil_dilation=zero, pupil_noise_mm=0.0,
                       blink_rate_per_min=0.0)
    rec, _ = generate_session(cfg)
    assert all(np.all(c.samples == 0) for c in rec.eeg)
    assert all(np.all(c.samples == 0) for c in rec.fnirs_hbo2 + rec.fnirs_hbr)
    assert not rec.pupil[0].has_missing
    assert np.ptp(rec.pupil[0].samples) < 0.7


def test_missing_fraction_matches_blink_model():
    fracs, expected = [], []
    for seed in range(3):
        cfg = SynthConfig(seed=seed, task_s=120.0, rest_s=60.0, n_eeg=1, n_fnirs=1)
        rec, _ = generate_session(cfg)
        duration = rec.events.intervals[-1][2]
        assert duration >= 600
        mean_gap = np.mean(cfg.blink_gap_s)
        rate = cfg.blink_rate_per_min / 60.0
        fracs.append(rec.pupil[0].missing_mask.mean())
        expected.append(rate * mean_gap / (1 + rate * mean_gap))
    assert abs(np.mean(fracs) - np.mean(expected)) <= 0.2 * np.mean(expected)


def test_blink_gaps_below_one_second(short_session):
    _, truth = short_session
    assert all(e - s < 1.0 for s, e in truth.blink_intervals)
    with pytest.raises(InvalidConfigError):
        SynthConfig(blink_gap_s=(0.5, 1.2))


def test_invalid_effect_sizes():
    with pytest.raises(InvalidConfigError):
        SynthConfig(fnirs_noise=float("nan"))
    with pytest.raises(InvalidConfigError):
        SynthConfig(blocks=(("Task5", 10.0),)).schedule()


def test_hrf_mode_and_amplitude_contrast(short_session):
    h = HrfParams()
    t = np.linspace(0, 30, 30001)
    assert abs(t[np.argmax(h(t))] - h.mode_s) < 0.01
    _, truth = short_session
    a = truth.hrf_amplitude
    assert min(a["Task2"], a["Task4"]) > max(a["Task1"], a["Task3"])


def test_pink_noise_spectrum_slope():
    x = pink_noise(np.random.default_rng(0), 4, 2 ** 15, 1000.0)
    np.testing.assert_allclose(x.std(axis=1), 1.0)
    f = np.fft.rfftfreq(x.shape[1], 1e-3)
    p = np.mean(np.abs(np.fft.rfft(x, axis=1)) ** 2, axis=0)
    lo = p[(f > 2) & (f < 4)].mean()
    hi = p[(f > 32) & (f < 64)].mean()
    assert 8 < lo / hi < 32


def test_subject_configs_are_distinct():
    base = SynthConfig(seed=7)
    cfgs = [subject_config(base, i) for i in range(3)]
    assert [c.subject_id for c in cfgs] == ["S01", "S02", "S03"]
    assert len({c.seed for c in cfgs}) == 3


def test_default_blocks_layout():
    b = default_blocks(task_s=120.0, rest_s=60.0)
    assert len(b) == 9 and sum(d for _, d in b) == 4 * 120 + 5 * 60


def test_pretraining_set_balance_and_separability():
    imgs, labels = generate_pretraining_set(100, seed=2)
    assert imgs.shape == (100, 1, 128, 128)
    assert np.sum(labels == 0) == 50
    assert imgs.min() >= 0 and imgs.max() <= 1
    # pixel-mean of the high-frequency half of the rows, best threshold
    score = imgs[:, 0, :64, :].mean(axis=(1, 2))
    best = max(max(np.mean((score > t) == labels), np.mean((score <= t) == labels))
               for t in np.unique(score))
    assert best > 0.8


def test_ground_truth_file(tmp_path, short_session):
    rec, truth = short_session
    p = write_ground_truth(truth, tmp_path / "gt.csv")
    rows = p.read_text().splitlines()
    assert rows[0] == "record,label,start_s,end_s,value"
    assert sum(r.startswith("event,") for r in rows) == len(rec.events)
    assert sum(r.startswith("blink,") for r in rows) == len(truth.blink_intervals)


def test_surgtlx_generator_rows_are_valid():
    rows = generate_surgtlx(5, seed=1)
    assert len(rows) == 20
    scores = {}
    for participant, task, resp in rows:
        s = surgtlx_score(resp)
        scores.setdefault(task, []).append(s.weighted_score)
    means = {t: np.mean(v) for t, v in scores.items()}
    assert min(means["Task2"], means["Task4"]) > max(means["Task1"], means["Task3"])
