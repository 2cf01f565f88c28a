import os
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=int(os.environ.get("WHQUANT_HYPOTHESIS_EXAMPLES", "25")),
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("default")

# acceptance results collected by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


def maxabs(x):
    return float(np.max(np.abs(x)))


@pytest.fixture(autouse=True)
def _quiet_accuracy_warnings():
    from whquant import AccuracyWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        yield
