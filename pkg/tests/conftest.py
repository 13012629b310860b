from pathlib import Path

import numpy as np
import pytest

from tclflex.thermal import (COOLING_PUMP, HEATING_PUMP, REFRIGERATOR, WATER_HEATER, DeviceGroup,
                             PopulationSpec)

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture
def summer_spec():
    return PopulationSpec((DeviceGroup(REFRIGERATOR, 1000, "indoor"),
                           DeviceGroup(WATER_HEATER, 1000, "indoor"),
                           DeviceGroup(COOLING_PUMP, 1000, "outdoor")), master_seed=7)


@pytest.fixture
def small_spec():
    return PopulationSpec((DeviceGroup(REFRIGERATOR, 40, "indoor"),
                           DeviceGroup(WATER_HEATER, 30, "indoor"),
                           DeviceGroup(COOLING_PUMP, 30, "outdoor")), master_seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def acceptance_line(criterion: str, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
