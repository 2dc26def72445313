"""Shared fixtures and the acceptance-summary terminal hook."""

import re

import pytest

from semsense.channel import PathComponent, PhysicalSemantics, SamplingGrid
from semsense.config import DatasetConfig, GridConfig, ScenarioConfig
from semsense.scenario import generate_datasets, make_scenario

# Results of the numbered acceptance tests, printed as one line each at
# the end of the terminal report (so the summary survives output capture).
_CRITERION_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = re.match(r"test_c(\d+)", item.name)
    if m and "test_acceptance" in str(item.fspath) and rep.when == "call":
        _CRITERION_RESULTS[int(m.group(1))] = rep.passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_RESULTS:
        return
    terminalreporter.write_line("")
    for n in sorted(_CRITERION_RESULTS):
        status = "PASS" if _CRITERION_RESULTS[n] else "FAIL"
        terminalreporter.write_line(f"[criterion {n}] {status}")


# --- geometry fixtures -------------------------------------------------------

@pytest.fixture(scope="session")
def tiny_grid():
    """Small enough for the scalar-loop oracles to stay fast."""
    return SamplingGrid(
        num_packets=16,
        num_subcarriers=6,
        num_antennas=3,
        packet_interval=2e-3,
        subcarrier_spacing=3.125e6,
        carrier_freq=5.825e9,
    )


@pytest.fixture(scope="session")
def small_grid():
    """Enough resolution for real estimation, still quick to synthesize."""
    return SamplingGrid(
        num_packets=250,
        num_subcarriers=16,
        num_antennas=3,
        packet_interval=1e-3,
        subcarrier_spacing=3.125e6,
        carrier_freq=5.825e9,
    )


def dynamic_path(amplitude=1.0, tof=3.0e-8, aoa=0.3, dfs=40.0):
    return PathComponent(amplitude, tof, aoa, dfs, kind="dynamic")


def static_path(amplitude=1.0, tof=2.0e-8, aoa=0.1):
    return PathComponent(amplitude, tof, aoa, kind="static")


@pytest.fixture(scope="session")
def single_dynamic_semantics():
    return PhysicalSemantics(
        environment_paths=(), gesture_paths=(dynamic_path(),)
    )


@pytest.fixture(scope="session")
def mixed_semantics():
    return PhysicalSemantics(
        environment_paths=(static_path(), static_path(0.6, 6.0e-8, -0.3)),
        gesture_paths=(dynamic_path(0.8), dynamic_path(0.5, 7.0e-8, -0.2, 60.0)),
    )


# --- scenario fixtures -------------------------------------------------------

SMALL_GRID_CFG = GridConfig(num_packets=64, num_subcarriers=8, num_antennas=3)


def quick_scenario_config(**overrides):
    base = dict(
        num_receivers=6,
        num_labeled=4,
        num_clusters=2,
        seed=0,
        grid=SMALL_GRID_CFG,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def quick_dataset_config(**overrides):
    base = dict(
        samples_per_class=20, test_per_class=15, num_classes=4
    )
    base.update(overrides)
    return DatasetConfig(**base)


@pytest.fixture(scope="session")
def two_cluster_scenario():
    """Four labeled + two unlabeled receivers across two clusters."""
    return generate_datasets(
        make_scenario(quick_scenario_config()),
        dataset_cfg=quick_dataset_config(),
    )
