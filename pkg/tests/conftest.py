import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class _Criterion:
    def __init__(self, lines):
        self.lines = lines
        self.label = None
        self.t_start = None
        self.reported = False

    def __call__(self, number, title):
        import time

        self.label = f"criterion {number:>2} ({title})"
        self.t_start = time.perf_counter()
        return self

    @property
    def elapsed(self):
        import time

        return time.perf_counter() - self.t_start

    def done(self, ok, detail="", limit=None):
        """Record the outcome; a wall-clock ``limit`` in seconds is part of the criterion."""
        secs = self.elapsed
        if limit is not None and secs > limit:
            ok = False
            detail = f"{detail}; runtime {secs:.1f}s over {limit}s"
        line = f"{'PASS' if ok else 'FAIL'} {self.label}: {detail} [{secs:.1f}s]"
        self.lines.append(line)
        self.reported = True
        print(line)
        assert ok, line


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def criterion(request):
    rec = _Criterion(request.config._acceptance_lines)
    yield rec
    if rec.label is not None and not rec.reported:
        rec.lines.append(f"FAIL {rec.label}: raised before reporting")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
