import numpy as np
import pytest

from mlmc_opt import _backend


@pytest.fixture(params=sorted(_backend.BACKENDS))
def backend(request):
    return request.param


def assert_close(a, b, rtol=1e-12, atol=0.0):
    np.testing.assert_allclose(a, b, rtol=rtol, atol=atol)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", None) != "call":
                continue
            lines += [v for k, v in rep.user_properties if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        key = lambda s: int(s.split("criterion")[1].split()[0])
        for ln in sorted(lines, key=key):
            terminalreporter.write_line(ln)
