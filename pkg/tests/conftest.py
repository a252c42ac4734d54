import sys
from datetime import datetime
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from viewrecon.core import GroundTruthSeries, Resolution


def make_truth(
    views,
    corrections,
    video_id="v0",
    channel_id="c0",
    published_at=datetime(2022, 2, 3, 10, 0),
    resolution=Resolution.HOUR,
):
    return GroundTruthSeries(
        video_id=video_id,
        channel_id=channel_id,
        published_at=published_at,
        resolution=resolution,
        views=tuple(views),
        corrections=tuple(corrections),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
