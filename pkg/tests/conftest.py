from __future__ import annotations

import numpy as np
import pytest

from gdflow import sim
from gdflow.core import check_metric_identities

# every trace simulated anywhere in the session: (policy, n_jobs, identity errors)
TRACE_LOG = []
# acceptance criterion -> (passed, detail), filled by tests/test_acceptance.py
CRITERIA = {}


def _record(inst, trace):
    TRACE_LOG.append((trace.meta.get("policy"), inst.n, check_metric_identities(trace, inst)))


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: numbered acceptance criteria")
    sim.TRACE_OBSERVERS.append(_record)


def pytest_collection_modifyitems(session, config, items):
    # acceptance runs last so criterion 10 sees the traces of every other test
    items.sort(key=lambda it: it.get_closest_marker("acceptance") is not None)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
