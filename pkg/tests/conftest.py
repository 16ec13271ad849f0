import numpy as np
import pytest
from hypothesis import settings

from humanseed.dataset import Dataset, FeatureSchema

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def toy_schema():
    return FeatureSchema(("a", "b"), "y")


@pytest.fixture
def balanced_ds():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(400, 3))
    y = np.repeat([0, 1], 200)
    return Dataset(FeatureSchema(("a", "b", "c"), "y"), X, y)


def separable_2d(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    return Dataset(FeatureSchema(("x0", "x1"), "y"), X, y)
