import importlib

import pytest
from hypothesis import settings

from bbs_sense import _kernels_py

settings.register_profile("ci", deadline=None, max_examples=60)
settings.load_profile("ci")


def _backends():
    out = [pytest.param(_kernels_py, id="python")]
    try:
        out.append(pytest.param(importlib.import_module("bbs_sense._kernels"), id="cython"))
    except ImportError:
        pass
    return out


BACKENDS = _backends()


@pytest.fixture(params=BACKENDS)
def kern(request):
    return request.param


@pytest.fixture(scope="session")
def small_grid():
    from bbs_sense.coverage import build_manhattan_grid
    return build_manhattan_grid(2, 2, 40, 30, 1.0)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for k in sorted(verdicts):
            terminalreporter.write_line(verdicts[k])
