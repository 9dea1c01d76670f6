from pathlib import Path

import numpy as np
import pytest

from safdr import kernels
from safdr.dataset import Dataset

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    if request.param == "numba" and kernels._NUMBA is None:
        pytest.skip("numba unavailable")
    previous = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


@pytest.fixture
def toy2d():
    """Two square point clouds: class means (1, 1) and (5, 5), S_W = diag(2, 2)."""
    X = np.array([[0, 0], [2, 0], [0, 2], [2, 2], [4, 4], [6, 4], [4, 6], [6, 6]], float)
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    return Dataset(X, y, ["a", "b"])


def random_dataset(rng, n=60, K=6, shift=0.5):
    y = np.zeros(n, np.int64)
    y[: n // 2] = 1
    X = rng.normal(size=(n, K)) @ rng.normal(size=(K, K)) + shift * y[:, None] * rng.normal(size=K)
    return Dataset(X, y, [f"f{j}" for j in range(K)])


def write_csv(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")
    return path


# acceptance criteria report: one line per criterion in the terminal summary
ACCEPTANCE = []


@pytest.fixture
def report_criterion():
    def record(number, title, passed, detail):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
