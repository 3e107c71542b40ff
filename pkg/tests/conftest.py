import numpy as np
import pytest

from wrsn_doc.config import NetworkConfig
from wrsn_doc.scenario import Scenario


@pytest.fixture
def small_config():
    return NetworkConfig(area_side=100.0, node_count=30, mcv_count=3, horizon=600.0, rng_seed=7)


def small_scenario(**kw):
    base = dict(area_side=100.0, node_count=30, mcv_count=3, horizon=1500.0, rng_seed=3)
    base.update(kw)
    return Scenario().replace(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
