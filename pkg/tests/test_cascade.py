import numpy as np
import pytest

from cwlcascade.cascade import (
    BIN_NOTASK,
    NOTASK,
    REPORT_HEADER,
    CascadeModel,
    ConfusionMatrix,
    ExperimentConfig,
    average_evaluations,
    evaluate,
    evaluate_predictions,
    run_experiment,
    write_reports,
)
from cwlcascade.cwt import CwtConfig
from cwlcascade.errors import EmptyInputError, InvalidConfigError, ModelNotTrainedError, ShapeMismatchError
from cwlcascade.features import VECTOR_LENGTH, FeatureWindow
from cwlcascade.nn import Dense, Flatten, Sequential, Softmax, build_cnn1d, build_cnn2d
from cwlcascade.signals import TASK_LABELS


class FixedOutput:
    """Stand-in network returning preset probabilities and counting calls."""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=np.float32)
        self.output_shape = (self.probs.shape[1],)
        self.calls = 0
        self.rows = 0

    def predict_proba(self, x):
        self.calls += 1
        self.rows += len(x)
        return self.probs[:len(x)] if len(self.probs) >= len(x) else np.repeat(
            self.probs[:1], len(x), axis=0)


def dummy_images(n):
    return np.zeros((n, 1, 4, 4), np.float32)


# ---- confusion matrix and metrics ---------------------------------------------------

def test_hand_built_matrix():
    cm = ConfusionMatrix(np.array([[5, 1, 0], [0, 4, 2], [1, 0, 7]]), ("a", "b", "c"))
    assert cm.accuracy == pytest.approx(0.8, abs=1e-15)
    assert cm.precision[0] == pytest.approx(5 / 6, abs=1e-15)
    assert cm.recall[1] == pytest.approx(4 / 6, abs=1e-15)
    assert cm.total == 20
    assert list(cm.support) == [6, 6, 8]


def test_perfect_predictor():
    y = np.array([0, 1, 2, 3, 4, 0, 1])
    ev = evaluate_predictions(y, y, TASK_LABELS)
    assert ev.accuracy == 1.0
    assert np.all(ev.confusion.counts == np.diag(np.diag(ev.confusion.counts)))


def test_constant_predictor_on_balanced_four_classes():
    y = np.repeat(np.arange(4), 10)
    ev = evaluate_predictions(y, np.zeros_like(y), ("a", "b", "c", "d"))
    assert ev.accuracy == 0.25
    assert list(ev.precision[1:]) == [0.0, 0.0, 0.0]


def test_empty_and_negative():
    with pytest.raises(EmptyInputError):
        evaluate_predictions([], [], TASK_LABELS)
    with pytest.raises(ValueError):
        ConfusionMatrix(np.array([[1, -1], [0, 1]]), ("a", "b"))


def test_average_evaluations(rng):
    evs = [evaluate_predictions(rng.integers(0, 3, 30), rng.integers(0, 3, 30), "abc")
           for _ in range(4)]
    mean = average_evaluations(evs)
    assert mean.accuracy == pytest.approx(np.mean([e.accuracy for e in evs]), abs=1e-12)
    np.testing.assert_allclose(mean.confusion.support,
                               np.mean([e.confusion.support for e in evs], axis=0))


# ---- gating -------------------------------------------------------------------------

def test_notask_stage1_skips_stage2():
    s1 = FixedOutput([[0.1, 0.9]])
    s2 = FixedOutput([[0.1, 0.1, 0.6, 0.1, 0.1]])
    model = CascadeModel(s1, s2)
    out = model.predict_batch(np.zeros((1, VECTOR_LENGTH)), dummy_images(1))
    assert out.labels[0] == NOTASK
    assert s2.calls == 0 and out.stage2_calls == 0
    assert np.all(np.isnan(out.stage2_proba[0]))


def test_cwl_stage1_composes_with_stage2():
    s1 = FixedOutput([[0.8, 0.2]])
    s2 = FixedOutput([[0.1, 0.1, 0.6, 0.1, 0.1]])
    out = CascadeModel(s1, s2).predict_batch(np.zeros((1, VECTOR_LENGTH)), dummy_images(1))
    assert TASK_LABELS[out.labels[0]] == "Task3"
    assert s2.rows == 1


def test_notask_logit_masked_and_ties_lowest_index():
    s1 = FixedOutput([[0.9, 0.1], [0.9, 0.1]])
    s2 = FixedOutput([[0.1, 0.1, 0.1, 0.1, 0.6], [0.0, 0.3, 0.3, 0.0, 0.4]])
    out = CascadeModel(s1, s2).predict_batch(np.zeros((2, VECTOR_LENGTH)), dummy_images(2))
    assert list(out.labels) == [0, 1]


def test_gating_invariant_on_random_networks(rng):
    s1 = FixedOutput(rng.dirichlet([1, 1], 200))
    s2 = FixedOutput(rng.dirichlet(np.ones(5), 200))
    out = CascadeModel(s1, s2).predict_batch(np.zeros((200, VECTOR_LENGTH)), dummy_images(200))
    positives = int(np.sum(s1.probs.argmax(1) != BIN_NOTASK))
    assert out.stage2_calls == positives == s2.rows
    assert np.all((out.labels == NOTASK) == ~out.stage2_evaluated)


def test_predict_single_window_runs_real_cwt():
    s1 = build_cnn2d((128, 128), 2, seed=0)
    s2 = build_cnn1d(VECTOR_LENGTH, 5, seed=0)
    model = CascadeModel(s1, s2, CwtConfig())
    w = FeatureWindow(np.random.default_rng(0).standard_normal(VECTOR_LENGTH), "Task1", 0.0)
    pred = model.predict(w)
    assert pred.task_label in TASK_LABELS
    np.testing.assert_allclose(pred.stage1_proba.sum(), 1.0, atol=1e-6)
    assert (pred.stage2_proba is None) == (pred.task_label == "NoTask")


def test_untrained_and_wrong_heads():
    with pytest.raises(ModelNotTrainedError):
        CascadeModel(None, None).predict_batch(np.zeros((1, VECTOR_LENGTH)))
    three = Sequential([Flatten(), Dense(3), Softmax()], (1, 4, 4))
    with pytest.raises(ShapeMismatchError):
        CascadeModel(three, None)


def test_evaluate_uses_gated_labels():
    windows = [FeatureWindow(np.zeros(VECTOR_LENGTH), lab, 0.0) for lab in ("Task3", "NoTask")]
    s1 = FixedOutput([[0.7, 0.3], [0.2, 0.8]])
    s2 = FixedOutput([[0.0, 0.1, 0.8, 0.1, 0.0]])
    ev = evaluate(CascadeModel(s1, s2), windows, dummy_images(2))
    assert ev.accuracy == 1.0
    assert ev.confusion.total == 2
    with pytest.raises(EmptyInputError):
        evaluate(CascadeModel(s1, s2), [])


# ---- experiment harness ---------------------------------------------------------------

def toy_windows(rng, n_per=24):
    out = []
    t = np.arange(VECTOR_LENGTH) / 500.0
    for k, lab in enumerate(TASK_LABELS):
        for i in range(n_per):
            v = np.sin(2 * np.pi * (4 + 6 * k) * t) + 0.3 * rng.standard_normal(VECTOR_LENGTH)
            out.append(FeatureWindow(v, lab, float(i), "S01"))
    return out


SMALL = dict(cwt=CwtConfig(n_scales=8, image_h=16, image_w=16), stage1_epochs=2, stage2_epochs=2,
             pretrain_n=16, pretrain_epochs=1, elm_hidden=32, melm_layers=(16,), batch_size=16)


def test_experiment_config_validation():
    with pytest.raises(InvalidConfigError):
        ExperimentConfig(models=("svm",))
    with pytest.raises(InvalidConfigError):
        ExperimentConfig(baseline_task="ternary")
    assert ExperimentConfig(models=("cascade", "melm")).report_models() == ["tl", "cascade", "melm"]


@pytest.fixture(scope="module")
def small_result():
    cfg = ExperimentConfig(models=("cascade", "cnn1d", "elm", "melm"), **SMALL)
    return run_experiment(toy_windows(np.random.default_rng(0)), cfg, n_repeats=3)


def test_experiment_repeats_and_means(small_result):
    assert len(small_result.repeats) == 3
    assert [r.seed for r in small_result.repeats] == [7, 8, 9]
    for key, ev in small_result.mean.items():
        per = [r.evaluations[key].accuracy for r in small_result.repeats]
        assert abs(ev.accuracy - sum(per) / len(per)) < 1e-12


def test_experiment_gating_counts(small_result):
    for r in small_result.repeats:
        for calls, positives in r.stage2_calls.values():
            assert calls == positives


def test_confusion_totals_match_split_sizes(small_result):
    n = len(toy_windows(np.random.default_rng(0)))
    for r in small_result.repeats:
        tr = r.evaluations[("cascade", "train")].confusion.total
        te = r.evaluations[("cascade", "test")].confusion.total
        assert tr + te == n
        assert r.evaluations[("tl", "test")].confusion.class_names == ("CWL", "NoTask")


def test_cascade_decomposition_bound(small_result):
    # cascade accuracy >= P(stage 1 correct) * P(stage 2 correct | stage 1 correct) on CWL rows
    for r in small_result.repeats:
        casc = r.evaluations[("cascade", "test")].confusion.counts
        tl = r.evaluations[("tl", "test")].confusion.counts
        n = casc.sum()
        notask_correct = tl[1, 1]
        cwl_task_correct = np.trace(casc) - casc[NOTASK, NOTASK]
        assert casc[NOTASK, NOTASK] == notask_correct
        assert np.trace(casc) / n >= (notask_correct + cwl_task_correct) / n - 1e-12


def test_single_repeat_mean_equals_run():
    cfg = ExperimentConfig(models=("elm",), **SMALL)
    res = run_experiment(toy_windows(np.random.default_rng(1)), cfg, n_repeats=1)
    for key, ev in res.mean.items():
        assert ev.accuracy == res.repeats[0].evaluations[key].accuracy
        np.testing.assert_array_equal(ev.confusion.counts, res.repeats[0].evaluations[key].confusion.counts)


def test_reports_written(tmp_path, small_result):
    paths = write_reports(small_result, tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["confusion_test.csv", "confusion_train.csv", "history.csv", "report.csv",
                     "summary.txt"]
    rows = (tmp_path / "report.csv").read_text().splitlines()
    assert rows[0].split(",") == REPORT_HEADER
    models = {r.split(",")[0] for r in rows[1:]}
    assert models == {"tl", "cascade", "cnn1d", "elm", "melm"}
    repeats = {r.split(",")[3] for r in rows[1:]}
    assert repeats == {"0", "1", "2", "mean"}
    assert "stage-2 calls equal stage-1 positives on every test split: True" in (
        tmp_path / "summary.txt").read_text()
