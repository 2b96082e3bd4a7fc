from pathlib import Path

import numpy as np
import pytest

from aligndet.pixels import PixelBuffer, load_image
from helpers import FakeServer

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def photo() -> PixelBuffer:
    return load_image(DATA / "photo.png")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fake_server():
    servers = []

    def make(handler):
        s = FakeServer(handler).__enter__()
        servers.append(s)
        return s

    yield make
    for s in servers:
        s.__exit__(None, None, None)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
