import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", parent=settings.get_profile("default"), derandomize=True)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def naive_gemm(w, x):
    """Triple loop over Python floats (double precision), rounded once."""
    m, k = w.shape
    n = x.shape[1]
    out = np.zeros((m, n), dtype=np.float32)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += float(w[i, t]) * float(x[t, j])
            out[i, j] = acc
    return out


def scaled_error(sim, w, x):
    """Worst |sim - ref| relative to the magnitude sum |W|.|X| per element."""
    w64, x64 = w.astype(np.float64), x.astype(np.float64)
    ref = w64 @ x64
    scale = np.abs(w64) @ np.abs(x64)
    err = np.abs(sim.astype(np.float64) - ref)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, err / scale, err)
    return float(rel.max()) if rel.size else 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; the lines are replayed after the run."""

    def _record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
