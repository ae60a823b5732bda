import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from foursim.optics import OpticalConfig, OtfModel  # noqa: E402

@pytest.fixture(scope="session")
def cfg64():
    return OpticalConfig(grid_xy=64)

@pytest.fixture(scope="session")
def cfg128():
    return OpticalConfig(grid_xy=128)

@pytest.fixture(scope="session")
def cfg256():
    return OpticalConfig(grid_xy=256)

@pytest.fixture(scope="session")
def otf_model(cfg128):
    return OtfModel(cfg128)

@pytest.fixture
def rng():
    return np.random.default_rng(1234)

def pytest_terminal_summary(terminalreporter):
    import acceptance_log
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
