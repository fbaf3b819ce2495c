import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qpool.spectrogram import Spectrogram  # noqa: E402


def make_spec(values, source_id="", fingerprint="test"):
    return Spectrogram(np.asarray(values, dtype=float), source_id, fingerprint)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
