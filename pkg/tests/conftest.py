import time

import pytest

from sentinel.episode import simulate_perception
from sentinel.sweeps import DEFAULT_SUITE
from sentinel.world import bundled_scenario


@pytest.fixture(scope="session")
def suite_traces_timed():
    """The bundled occlusion suite, simulated once with per-agent frames."""
    t0 = time.monotonic()
    traces = [
        simulate_perception(bundled_scenario(name), collect_agent_frames=True)
        for name in DEFAULT_SUITE
    ]
    return traces, time.monotonic() - t0


@pytest.fixture(scope="session")
def suite_traces(suite_traces_timed):
    return suite_traces_timed[0]


@pytest.fixture(scope="session")
def t_junction_trace():
    return simulate_perception(
        bundled_scenario("occlusion_t_junction"), collect_agent_frames=True
    )
