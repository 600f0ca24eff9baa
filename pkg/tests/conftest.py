from collections import defaultdict

import numpy as np
import pytest

# acceptance clauses recorded by test_acceptance.py: number -> [(clause, passed, detail)]
ACCEPTANCE = defaultdict(list)


def record(number, clause, passed, detail):
    ACCEPTANCE[number].append((clause, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        clauses = ACCEPTANCE[n]
        ok = all(p for _, p, _ in clauses)
        parts = "; ".join("%s %s (%s)" % (c, "ok" if p else "MISSED", d) for c, p, d in clauses)
        terminalreporter.write_line("criterion %2d: %s  %s" % (n, "PASS" if ok else "FAIL", parts))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
