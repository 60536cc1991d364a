"""Suite-wide hooks.

Every BFGS run in the session is recorded so the acceptance module can
check that all objective traces were nonincreasing, and the acceptance
tests are moved to the end so that check sees the whole suite. Their
one-line verdicts are repeated in the terminal summary.
"""

import numpy as np

from expectnn import optim

TRACE_LOG = {"runs": 0, "violations": 0}
ACCEPTANCE_LINES = []

_bfgs = optim.bfgs_minimize


def _recording_bfgs(fun, x0, opts=None):
    res = _bfgs(fun, x0, opts)
    TRACE_LOG["runs"] += 1
    if np.any(np.diff(res.f_trace) > 0):
        TRACE_LOG["violations"] += 1
    return res


_recording_bfgs.__doc__ = _bfgs.__doc__
optim.bfgs_minimize = _recording_bfgs


def pytest_collection_modifyitems(items):
    items.sort(key=lambda item: item.module.__name__.endswith("test_acceptance"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
