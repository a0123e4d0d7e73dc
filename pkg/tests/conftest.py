import numpy as np
import pytest

from tiltmarl.topology import generate_hex_grid, optimized_cells

_ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line; ``criterion(ok, detail)`` before asserting."""
    name = request.node.name

    def record(ok: bool, detail: str):
        _ACCEPTANCE[name] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="session")
def grid19():
    return generate_hex_grid(2, 1500.0)


@pytest.fixture(scope="session")
def grid7():
    return generate_hex_grid(1, 1500.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def opt19(grid19):
    return optimized_cells(grid19, 1)
