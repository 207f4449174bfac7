import numpy as np
import pytest

from bpcauth.types import BinaryImage, ModelConfig


@pytest.fixture
def config():
    return ModelConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def random_binary(rng, height, width):
    return BinaryImage.from_array(rng.integers(0, 2, size=(height, width), dtype=np.uint8))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
