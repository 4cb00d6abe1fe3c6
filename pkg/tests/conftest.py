import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rfdvc.core import Frame

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_frame(rng, w=32, h=32, **kw) -> Frame:
    return Frame(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8), **kw)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
