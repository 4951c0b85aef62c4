import numpy as np
import pytest

from sparselsf.geometry import NetworkConfig, correlation_matrices, drop_network
from sparselsf.pilots import assign_pilots, estimation_stats
from sparselsf.power_control import fractional_power_control
from sparselsf.uplink import combined_moments


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_network():
    """A small drop with Monte Carlo moments shared by several test modules."""
    cfg = NetworkConfig(L=6, N=2, K=4, area_side=150.0)
    rng = np.random.default_rng(7)
    geom = drop_network(cfg, rng)
    stats = correlation_matrices(geom, cfg)
    assign = assign_pilots(geom.beta, 3)
    est = estimation_stats(stats, assign, 0.1)
    p = fractional_power_control(geom.beta, None, 0.5, 0.1)
    mom = combined_moments(stats, est, assign, p, "L-MMSE", 2000, rng)
    return dict(cfg=cfg, geom=geom, stats=stats, assign=assign, est=est, p=p, moments=mom)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion and assert on it."""

    def _report(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
