import numpy as np
import pytest

from conformal_ocm.datasets import load_bundled

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def iris_class():
    ds = load_bundled("iris25.csv")
    return ds.X, ds.y


@pytest.fixture(scope="session")
def iris_reg():
    ds = load_bundled("iris25.csv", label_column="petal")
    return ds.X, ds.y


@pytest.fixture(scope="session")
def czuber():
    return load_bundled("czuber.csv").y


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
