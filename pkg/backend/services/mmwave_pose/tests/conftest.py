import os
import sys

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
sys.path.insert(0, os.path.dirname(__file__))

from synthetic_data import make_samples, tiny_model_config  # noqa: E402


def pytest_collection_modifyitems(config, items):
    """Skip @pytest.mark.slow tests unless MMWAVE_POSE_RUN_SLOW=1"""
    if os.getenv('MMWAVE_POSE_RUN_SLOW', '0') == '1':
        return
    skip_slow = pytest.mark.skip(reason="set MMWAVE_POSE_RUN_SLOW=1 to run full-size tests")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tiny_cfg():
    return tiny_model_config()


@pytest.fixture
def samples():
    """12 random clips: 3 persons x 2 actions x 2 clips, RD only"""
    return make_samples()


@pytest.fixture
def dual_samples():
    return make_samples(modalities=('rd', 'ra'))
