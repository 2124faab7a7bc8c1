import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from rawbci.data import EpochSet  # noqa: E402
from rawbci.synth import SynthConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_toy_set(n=40, n_features=4, seed=0):
    """Two linearly separable Gaussian blobs, balanced."""
    g = np.random.default_rng(seed)
    y = np.arange(n) % 2
    centres = np.array([[-2.0] * n_features, [2.0] * n_features])
    X = centres[y] + 0.5 * g.standard_normal((n, n_features))
    return EpochSet(X, y, [None] * n, ("neg", "pos"))


@pytest.fixture
def toy_set():
    return make_toy_set()


@pytest.fixture
def small_synth():
    """A fast two-subject config with short blocks."""
    return SynthConfig(
        n_subjects=2,
        activity_seconds=2.0,
        rest_seconds=1.0,
        repetitions=3,
        modalities={"FNIRS": {"enabled": True, "sampling_rate_hz": 10.0, "n_channels": 4}},
        seed=7,
    )


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
