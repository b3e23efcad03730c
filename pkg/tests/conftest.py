import numpy as np
import pytest

from transmatch.synth import smooth_noise_image


def naive_window_sums(a, m, n):
    rows, cols = a.shape[0] - m + 1, a.shape[1] - n + 1
    out = np.empty((rows, cols))
    for x in range(rows):
        for y in range(cols):
            out[x, y] = sum(float(a[x + i, y + j]) for i in range(m) for j in range(n))
    return out


def naive_zncc(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    da, db = a - a.mean(), b - b.mean()
    den = np.sqrt((da * da).sum()) * np.sqrt((db * db).sum())
    return 0.0 if den == 0 else float((da * db).sum() / den)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def smooth_image():
    return smooth_noise_image((96, 110), 2.0, np.random.default_rng(7), detail=0.5)


@pytest.fixture(scope="session")
def noise_image():
    return np.random.default_rng(11).integers(0, 256, size=(64, 70)).astype(np.float64)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
