import numpy as np
import pytest

from pushresp.series import MidSeries, from_session_arrays


def make_series(blocks, dates=None) -> MidSeries:
    """Build a MidSeries from per-session price lists."""
    arrays = [np.asarray(b, dtype=np.float64) for b in blocks]
    if dates is None:
        dates = [18262 + i for i in range(len(arrays))]
    return from_session_arrays(list(dates), arrays)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
