import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trajconflict.ingest import HIST_LENGTH, BoundingBox, ClassLabel, Detection, FrameDetections

settings.register_profile("default", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=1000, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def det(frame, x, y, w=20.0, h=20.0, label=ClassLabel.VEHICLE, hist=None, conf=0.9):
    return Detection(frame, label, BoundingBox(float(x), float(y), float(w), float(h)), conf,
                     None if hist is None else np.asarray(hist, dtype=float))


def frame_of(frame, *dets):
    return FrameDetections(frame, list(dets))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def hist(rng):
    return rng.gamma(0.5, 1.0, HIST_LENGTH) * 100


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
