"""Shared fixtures: short synthetic sessions built once per test session."""

import numpy as np
import pytest

from cwlcascade.synth import SynthConfig, generate_session


def short_config(**kw):
    """A compact session: 4 task blocks of 12 s around 6 s rests, few channels."""
    base = dict(seed=3, task_s=12.0, rest_s=6.0, n_eeg=4, n_fnirs=3)
    base.update(kw)
    return SynthConfig(**base)


@pytest.fixture(scope="session")
def short_session():
    return generate_session(short_config())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
