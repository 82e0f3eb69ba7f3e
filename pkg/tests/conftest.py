import numpy as np
import pytest

from bilstmcrf import tensor as T


@pytest.fixture
def f64():
    """Run the test with float64 as the default tensor dtype."""
    old = T.get_default_dtype()
    T.set_default_dtype(np.float64)
    yield
    T.set_default_dtype(old)


def param(rng, *shape, scale=1.0):
    return T.Tensor(rng.normal(scale=scale, size=shape), requires_grad=True, dtype=np.float64)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}"
        if detail:
            line += f" ({detail})"
        _CRITERIA.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
