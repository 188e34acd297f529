import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fimstar.config import ScenarioConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cfg():
    """Tiny scenario for fast unit tests: U=3 (2 T + 1 R), N=2, M=3, K=4."""
    return ScenarioConfig().replace(
        system={"u_t": 2, "u_r": 1, "m_x": 3, "m_z": 1, "n_subcarriers": 2, "ris_mx": 2, "ris_mz": 2},
        agent={"actor_hidden": [16, 16], "critic_hidden": [16, 16], "meta_hidden": [8, 8],
               "buffer_capacity": 1000, "batch_size": 8},
        training={"episodes": 3, "steps_per_episode": 4},
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
