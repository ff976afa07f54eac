import numpy as np
import pytest


def central_difference(f, x, h=1e-5):
    """Numerical gradient of scalar ``f`` with respect to array ``x`` (modified in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def rel_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one acceptance criterion as a PASS/FAIL line and assert it."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else "")
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
