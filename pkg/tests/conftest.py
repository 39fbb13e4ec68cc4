import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402
from zenopm.montecarlo import ExperimentConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quick_config():
    """Small lossless eight-loop acquisition with a light background."""
    return ExperimentConfig.create(loops=8, tau_g=1.6, n_pulses=60_000, seed=3,
                                   loss_db_per_loop=0.0, background_rate_per_gate=0.02)


def pytest_terminal_summary(terminalreporter):
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
