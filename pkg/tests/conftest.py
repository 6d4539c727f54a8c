import numpy as np
import pytest

from stemtune.optics import OpticalConfig
from stemtune.virtual_scope import LatencyModel, NoiseConfig, VirtualScope


@pytest.fixture
def small_optics():
    return OpticalConfig(grid_size=64)


@pytest.fixture
def make_scope():
    """Factory for 64x64 virtual scopes."""

    def factory(noise=True, seed=0, hw=0.0, realtime=False):
        return VirtualScope(
            OpticalConfig(grid_size=64),
            noise=NoiseConfig(enabled=noise),
            latency=LatencyModel(hw_seconds_per_acquire=hw, realtime=realtime),
            master_seed=seed,
        )

    return factory


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion; printed in the summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(label, ok, detail):
        line = f"{label}: {'PASS' if ok else 'FAIL'} - {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
