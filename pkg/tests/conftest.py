import numpy as np
import pytest

SEED = 2026


@pytest.fixture
def rng(request):
    # one independent stream per test, stable across runs
    key = [SEED] + [ord(c) for c in request.node.name[:48]]
    return np.random.default_rng(key)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        ok, detail = RESULTS[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2}: {detail}")
