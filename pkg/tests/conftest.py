import os

import numpy as np
import pytest

from coronaLab.Domain import BallDomain
from coronaLab.PointMeasure import PointMeasure, segment

SAMPLE_CONFIGS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "sample_configs")


@pytest.fixture
def sample_configs():
    return SAMPLE_CONFIGS


@pytest.fixture
def unit_atom():
    return PointMeasure(np.zeros((1, 2)), [1.0])


@pytest.fixture
def segment_measure():
    return segment(1000)


@pytest.fixture
def disk():
    return BallDomain(2)


@pytest.fixture
def write_config(tmp_path):
    """Write an INI document to a temporary file and return its path."""
    def write(text, name="experiment.conf"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return write
