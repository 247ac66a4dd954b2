import warnings

import numpy as np
import pytest

from vortexmoduli import make_flat_torus

TAU = 0.3 + 1.1j


@pytest.fixture(scope="session")
def base16():
    return make_flat_torus(TAU, 16)


@pytest.fixture(scope="session")
def base32():
    return make_flat_torus(TAU, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _quiet_eigensolver():
    # lobpcg warns when it stops a little short of its internal tolerance; the
    # kernel is polished afterwards, so the warning carries no information here
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", module="scipy.sparse.linalg")
        yield


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Record one pass/fail line per acceptance criterion, printed after the run."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number: int, title: str, passed: bool, detail: str) -> None:
        lines[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {title}: {detail}"
        print(lines[number])
        assert passed, detail

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
