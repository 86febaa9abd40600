"""Fuzzy c-means on incomplete data (partial-distance strategy) and gap filling.

Distances use only the observed components of each row, rescaled by
``d / n_observed``. Missing entries are completed from the fitted model as
the membership-weighted centroid value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDataError,
    EmptyRowError,
    GapTooLongError,
    ShapeMismatchError,
    TooManyMissingError,
)
from .signals import ChannelStream


@dataclass(frozen=True)
class FcmConfig:
    n_clusters: int = 5
    m: float = 2.0
    tol: float = 1e-5
    max_iter: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 2:
            raise ValueError("n_clusters must be >= 2")
        if not self.m > 1:
            raise ValueError("fuzzifier m must be > 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class FcmState:
    centroids: np.ndarray     # (c, d)
    memberships: np.ndarray   # (c, n)
    objective: float
    m: float = 2.0
    history: tuple = ()       # objective after every iteration
    n_iter: int = 0


def _partial_sq_dist(Xo, obs_f, x_sq, centroids, weights):
    # (c, n) squared partial distances (d / |obs_i|) * sum_obs (x - v)^2, expanded
    # as sum_obs x^2 - 2 x.v + v^2 so each term is a matrix product
    d2 = x_sq[None, :] - 2.0 * (centroids @ Xo.T) + (centroids ** 2) @ obs_f.T
    return weights[None, :] * np.maximum(d2, 0.0)


def _memberships(d2, m):
    c, n = d2.shape
    zero = d2 <= 0.0
    with np.errstate(divide="ignore"):
        inv = np.where(zero, 0.0, d2) ** (-1.0 / (m - 1.0))
    inv[zero] = 0.0
    u = inv / inv.sum(axis=0, keepdims=True)
    hit = zero.any(axis=0)
    if hit.any():
        # coincident centroid: hard membership to the first zero-distance centroid
        first = np.argmax(zero, axis=0)
        u[:, hit] = 0.0
        u[first[hit], np.nonzero(hit)[0]] = 1.0
    return u


def _objective(u, d2, m):
    return float(np.sum(u ** m * d2))


def fcm_fit_incomplete(data, missing_mask, cfg: FcmConfig = FcmConfig()) -> FcmState:
    """Alternating-optimisation FCM over the observed entries of ``data``.

    Stops when the largest membership change falls below ``cfg.tol`` or after
    ``cfg.max_iter`` iterations. The centroid step carries the same
    ``d / n_observed`` row weights as the distance, which makes each step an
    exact minimiser and the objective nonincreasing.
    """
    X = np.asarray(data, dtype=float)
    mask = np.asarray(missing_mask, dtype=bool)
    if X.ndim != 2 or mask.shape != X.shape:
        raise ShapeMismatchError(f"data {X.shape} and mask {mask.shape} must be equal 2-D shapes")
    n, d = X.shape
    observed = ~mask
    n_obs = observed.sum(axis=1)
    if np.any(n_obs == 0):
        raise EmptyRowError(f"row {int(np.argmax(n_obs == 0))} has no observed component")
    c = cfg.n_clusters
    if n < c:
        raise DegenerateDataError(f"need at least {c} rows, got {n}")
    Xo = np.where(observed, X, 0.0)
    weights = d / n_obs

    complete = np.nonzero(n_obs == d)[0]
    pool = complete if len(complete) >= c else np.arange(n)
    filled = np.where(observed, X, np.nanmean(np.where(observed, X, np.nan), axis=0))
    uniq = np.unique(filled[pool], axis=0)
    if len(uniq) < c:
        raise DegenerateDataError(f"fewer than {c} distinct rows to seed centroids")
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(pool))
    seeds, seen = [], set()
    for i in order:
        key = filled[pool[i]].tobytes()
        if key not in seen:
            seen.add(key)
            seeds.append(pool[i])
        if len(seeds) == c:
            break
    V = filled[np.array(seeds)].copy()

    wobs = observed * weights[:, None]
    obs_f = observed.astype(float)
    x_sq = np.sum(Xo * Xo, axis=1)
    U = None
    history = []
    it = 0
    for it in range(1, cfg.max_iter + 1):
        d2 = _partial_sq_dist(Xo, obs_f, x_sq, V, weights)
        U_new = _memberships(d2, cfg.m)
        um = U_new ** cfg.m
        num = um @ (wobs * Xo)
        den = um @ wobs
        V = np.where(den > 0, num / np.where(den > 0, den, 1.0), V)
        d2 = _partial_sq_dist(Xo, obs_f, x_sq, V, weights)
        history.append(_objective(U_new, d2, cfg.m))
        delta = np.inf if U is None else np.max(np.abs(U_new - U))
        U = U_new
        if delta < cfg.tol:
            break
    return FcmState(centroids=V, memberships=U, objective=history[-1], m=cfg.m,
                    history=tuple(history), n_iter=it)


def fcm_impute(data, missing_mask, state: FcmState) -> np.ndarray:
    """Replace missing entries by the ``u**m``-weighted centroid values.

    Observed entries are returned bit-for-bit unchanged.
    """
    X = np.asarray(data, dtype=float)
    mask = np.asarray(missing_mask, dtype=bool)
    if mask.shape != X.shape or state.memberships.shape[1] != X.shape[0] \
            or state.centroids.shape[1] != X.shape[1]:
        raise ShapeMismatchError("data, mask and fitted state disagree in shape")
    out = X.copy()
    if not mask.any():
        return out
    um = state.memberships ** state.m
    est = (um.T @ state.centroids) / um.sum(axis=0)[:, None]
    out[mask] = est[mask]
    return out


def fcm_fit_impute(data, missing_mask, cfg: FcmConfig = FcmConfig()):
    """Fit then impute; returns ``(completed, state)``."""
    state = fcm_fit_incomplete(data, missing_mask, cfg)
    return fcm_impute(data, missing_mask, state), state


def delay_indices(n_samples: int, dim: int, lag: int) -> np.ndarray:
    """Index rows ``[t, t+lag, ..., t+(dim-1)*lag]`` for every valid ``t``."""
    span = (dim - 1) * lag
    n = n_samples - span
    if n <= 0:
        raise ValueError("signal shorter than one delay vector")
    idx = np.arange(n)[:, None] + lag * np.arange(dim)[None, :]
    return idx


def impute_pupil(x: ChannelStream, cfg: FcmConfig = FcmConfig(), dim: int = 8,
                 lag: int = 4, states: list = None) -> ChannelStream:
    """Fill blink gaps in one pupil-diameter channel.

    The stream is embedded into overlapping ``dim``-component delay vectors
    spaced ``lag`` samples apart, completed with FCM, and every missing sample
    is set to the average of its estimates across the vectors that contain it.
    Vectors with no observed component are left out of the fit. When
    ``states`` is a list, the fitted :class:`FcmState` is appended to it.
    """
    mask = x.missing_mask
    if not mask.any():
        return x
    if mask.mean() >= 0.5:
        raise TooManyMissingError(
            f"{x.name}: {100 * mask.mean():.1f}% of samples missing (limit 50%)")
    idx = delay_indices(len(x), dim, lag)
    rows = x.samples[idx]
    rmask = mask[idx]
    keep = ~rmask.all(axis=1)
    touches_gap = rmask.any(axis=1)
    completed, state = fcm_fit_impute(rows[keep], rmask[keep], cfg)
    if states is not None:
        states.append(state)

    total = np.zeros(len(x))
    count = np.zeros(len(x))
    sel = touches_gap[keep]
    kidx = idx[keep][sel]
    kmask = rmask[keep][sel]
    np.add.at(total, kidx[kmask], completed[sel][kmask])
    np.add.at(count, kidx[kmask], 1.0)
    unresolved = mask & (count == 0)
    if unresolved.any():
        raise GapTooLongError(
            f"{x.name}: gap at sample {int(np.argmax(unresolved))} longer than the "
            f"delay span ({(dim - 1) * lag} samples)")
    out = x.samples.copy()
    out[mask] = total[mask] / count[mask]
    return ChannelStream(x.name, x.fs_hz, out, np.zeros(len(x), dtype=bool))
