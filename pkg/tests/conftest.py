import numpy as np
import pytest


def random_instance(rng, G, p, N, spread=2.0):
    """Labelled Gaussian data with every class holding at least p + 2 rows."""
    base = np.repeat(np.arange(G), p + 2)
    labels = np.concatenate([base, rng.integers(0, G, size=N - base.size)])
    rng.shuffle(labels)
    means = rng.normal(0.0, spread, size=(G, p))
    data = np.empty((N, p))
    for g in range(G):
        A = rng.normal(size=(p, p)) * 0.5 + np.eye(p)
        idx = labels == g
        data[idx] = means[g] + rng.normal(size=(idx.sum(), p)) @ A.T
    return data, labels


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_instance(rng):
    return random_instance(rng, 3, 2, 60)


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    status = "SKIP" if passed is None else ("PASS" if bool(passed) else "FAIL")
    line = f"criterion {number:>2}: {status}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
