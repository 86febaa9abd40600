import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwlcascade.errors import EmptyRowError, ShapeMismatchError, TooManyMissingError
from cwlcascade.impute import (
    FcmConfig,
    delay_indices,
    fcm_fit_impute,
    fcm_fit_incomplete,
    fcm_impute,
    impute_pupil,
)
from cwlcascade.signals import ChannelStream
from cwlcascade.synth import SynthConfig, generate_session


def two_clouds(rng, n=200, d=3, sep=10.0, sd=0.1):
    a = rng.normal(0.0, sd, (n, d))
    b = rng.normal(sep, sd, (n, d))
    return np.vstack([a, b]), a.mean(axis=0), b.mean(axis=0)


def match_centroids(found, expected):
    # order-free comparison: pair each expected mean with its nearest centroid
    return max(np.min(np.linalg.norm(found - e, axis=1)) for e in expected)


def assert_state_invariants(state):
    U = state.memberships
    assert np.all(U >= 0) and np.all(U <= 1)
    assert np.max(np.abs(U.sum(axis=0) - 1)) < 1e-9
    assert state.objective >= 0
    h = np.array(state.history)
    assert np.all(np.diff(h) <= 1e-12 * np.maximum(1.0, h[:-1]))


def test_config_invariants():
    for kw in ({"n_clusters": 1}, {"m": 1.0}, {"tol": 0.0}):
        with pytest.raises(ValueError):
            FcmConfig(**kw)


def test_separated_clouds_complete_data(rng):
    X, ma, mb = two_clouds(rng)
    st_ = fcm_fit_incomplete(X, np.zeros_like(X, bool), FcmConfig(n_clusters=2, seed=1))
    assert match_centroids(st_.centroids, [ma, mb]) < 1e-3
    assert np.min(st_.memberships.max(axis=0)) > 0.99
    assert_state_invariants(st_)


def test_n_equals_c_converges_onto_rows():
    X = np.array([[0.0, 0.0], [5.0, 1.0], [-3.0, 4.0]])
    st_ = fcm_fit_incomplete(X, np.zeros_like(X, bool), FcmConfig(n_clusters=3, seed=0))
    assert match_centroids(st_.centroids, X) < 1e-6


def test_masked_clouds_match_complete_fit(rng):
    X, _, _ = two_clouds(rng, sd=0.5)
    cfg = FcmConfig(n_clusters=2, seed=3)
    full = fcm_fit_incomplete(X, np.zeros_like(X, bool), cfg)
    mask = rng.random(X.shape) < 0.2
    mask[mask.all(axis=1), 0] = False
    part = fcm_fit_incomplete(X, mask, cfg)
    assert match_centroids(part.centroids, full.centroids) < 5e-2
    assert_state_invariants(part)


def test_sharp_fuzzifier_gives_near_hard_memberships(rng):
    X, _, _ = two_clouds(rng)
    st_ = fcm_fit_incomplete(X, np.zeros_like(X, bool), FcmConfig(n_clusters=2, m=1.05, seed=0))
    assert np.min(st_.memberships.max(axis=0)) > 0.99


def test_empty_row_and_shape_errors():
    X = np.ones((5, 2))
    mask = np.zeros((5, 2), bool)
    mask[2] = True
    with pytest.raises(EmptyRowError):
        fcm_fit_incomplete(X, mask, FcmConfig(n_clusters=2))
    with pytest.raises(ShapeMismatchError):
        fcm_fit_incomplete(X, np.zeros((5, 3), bool), FcmConfig(n_clusters=2))


def test_impute_identity_without_missing(rng):
    X, _, _ = two_clouds(rng, n=30)
    mask = np.zeros_like(X, bool)
    st_ = fcm_fit_incomplete(X, mask, FcmConfig(n_clusters=2))
    out = fcm_impute(X, mask, st_)
    np.testing.assert_array_equal(out, X)


def test_impute_single_missing_in_tight_cluster(rng):
    sd = 0.05
    X = np.vstack([rng.normal(2.0, sd, (100, 4)), rng.normal(-6.0, sd, (100, 4))])
    mask = np.zeros_like(X, bool)
    mask[17, 2] = True
    out, _ = fcm_fit_impute(X, mask, FcmConfig(n_clusters=2, seed=5))
    cluster_mean = np.delete(X[:100, 2], 17).mean()
    assert abs(out[17, 2] - cluster_mean) < sd


def test_impute_shape_mismatch(rng):
    X, _, _ = two_clouds(rng, n=30)
    st_ = fcm_fit_incomplete(X, np.zeros_like(X, bool), FcmConfig(n_clusters=2))
    with pytest.raises(ShapeMismatchError):
        fcm_impute(X[:10], np.zeros((10, 3), bool), st_)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), frac=st.floats(0.0, 0.4), c=st.integers(2, 5))
def test_observed_entries_untouched_and_objective_monotone(seed, frac, c):
    r = np.random.default_rng(seed)
    X = r.normal(0, 1, (60, 4)) + r.integers(0, 3, 60)[:, None] * 4.0
    mask = r.random(X.shape) < frac
    mask[mask.all(axis=1), 0] = False
    out, st_ = fcm_fit_impute(X, mask, FcmConfig(n_clusters=c, seed=seed))
    assert np.array_equal(out[~mask], X[~mask])
    assert_state_invariants(st_)


def test_sinusoid_with_100ms_gaps_delay_embedded():
    fs = 120.0
    t = np.arange(int(60 * fs)) / fs
    x = 3.5 + 0.5 * np.sin(2 * np.pi * 0.2 * t)
    mask = np.zeros(len(x), bool)
    gap = int(0.1 * fs)
    for start in range(200, len(x) - 200, 400):
        mask[start:start + gap] = True
    idx = delay_indices(len(x), 8, 1)
    rows, rmask = x[idx], mask[idx]
    keep = ~rmask.all(axis=1)
    out, _ = fcm_fit_impute(rows[keep], rmask[keep], FcmConfig(n_clusters=5, seed=0))
    err = (out - rows[keep])[rmask[keep]]
    assert np.sqrt(np.mean(err ** 2)) < 0.1 * 0.5


def test_delay_indices():
    idx = delay_indices(10, 3, 2)
    assert idx.shape == (6, 3)
    np.testing.assert_array_equal(idx[0], [0, 2, 4])
    np.testing.assert_array_equal(idx[-1], [5, 7, 9])
    with pytest.raises(ValueError):
        delay_indices(4, 3, 2)


def test_impute_pupil_identity():
    x = ChannelStream("left", 120.0, np.linspace(3, 4, 500))
    assert impute_pupil(x) is x


def test_impute_pupil_too_many_missing():
    mask = np.zeros(1000, bool)
    mask[:600] = True
    with pytest.raises(TooManyMissingError):
        impute_pupil(ChannelStream("left", 120.0, np.ones(1000), mask))


def test_impute_pupil_recovers_synthetic_blinks():
    cfg = SynthConfig(seed=21, task_s=40.0, rest_s=20.0, n_eeg=1, n_fnirs=1)
    rec, truth = generate_session(cfg)
    for k, ch in enumerate(rec.pupil):
        assert ch.has_missing
        out = impute_pupil(ch)
        assert not out.missing_mask.any()
        np.testing.assert_array_equal(out.samples[~ch.missing_mask], ch.samples[~ch.missing_mask])
        m = ch.missing_mask
        r = np.corrcoef(out.samples[m], truth.pupil_clean[k][m])[0, 1]
        assert r > 0.95
        assert np.corrcoef(out.samples, truth.pupil_clean[k])[0, 1] > 0.95
