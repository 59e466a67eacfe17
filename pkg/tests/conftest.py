import numpy as np
import pytest
from hypothesis import settings

from hybridrc import kernels

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

KERNEL_NAMES = ("ode_sample", "ode_propagate", "dde_sample", "reservoir_drive", "closed_loop")
BACKENDS = ["python"] + (["cython"] if kernels.HAVE_EXTENSION else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route every kernel call through one backend for the test's duration."""
    mod = kernels.get_backend(request.param)
    for name in KERNEL_NAMES:
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
