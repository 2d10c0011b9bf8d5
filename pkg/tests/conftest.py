import numpy as np
import pytest

from tile360 import _kernels

BACKENDS = [pytest.param(_kernels.python_backend, id="python")]
if _kernels.compiled_backend is not None:
    BACKENDS.append(pytest.param(_kernels.compiled_backend, id="compiled"))


@pytest.fixture(params=BACKENDS)
def kernels(request):
    """Each available kernel backend in turn."""
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record ``(ok, name, detail)``; lines are printed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(ok: bool, name: str, detail: str) -> bool:
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name:<22} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
