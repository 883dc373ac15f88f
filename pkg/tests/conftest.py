import contextlib
import time

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# one line per acceptance criterion, repeated in the terminal summary
_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class _Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.details = []

    def note(self, text):
        self.details.append(text)


@pytest.fixture
def criterion():
    """Context manager recording a PASS/FAIL line for an acceptance criterion."""

    @contextlib.contextmanager
    def run(number, title):
        c = _Criterion(number, title)
        t0 = time.perf_counter()
        ok = False
        try:
            yield c
            ok = True
        finally:
            c.note(f"{time.perf_counter() - t0:.1f}s")
            line = (f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title} "
                    f"({'; '.join(c.details)})")
            _ACCEPTANCE.append((number, line))
            print(line)

    return run


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
