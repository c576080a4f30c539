import sys

import pytest
from hypothesis import HealthCheck, settings

from ccachesim.config import CacheConfig, LevelConfig, desk_config
from ccachesim.machine import Machine

settings.register_profile("sim", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("sim")


def tiny_config(cores=2, l1_ways=8):
    """Small enough that sets fill quickly, large enough to hold a few lines per set."""
    return CacheConfig(
        l1=LevelConfig(l1_ways, l1_ways * 64 * 4, 4),
        l2=LevelConfig(8, 8 * 64 * 8, 10),
        llc=LevelConfig(16, 16 * 64 * 16, 70),
        core_count=cores,
    ).validate()


@pytest.fixture
def desk_machine():
    return Machine(desk_config(4))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
