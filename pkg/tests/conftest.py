import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ------------------------------------------------------
_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion's verdict for the end-of-run summary."""
    def record(number: int, ok: bool, detail: str) -> bool:
        results = request.config.stash.setdefault(_ACCEPTANCE, {})
        results[number] = (ok, detail)
        print(f"Criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"Criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
