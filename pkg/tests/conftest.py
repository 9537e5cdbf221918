import hypothesis
import numpy as np
import pytest

from diffsigma.imageio import Image

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture
def flat_image():
    return Image(np.full((256, 256), 128.0), tag="flat")


@pytest.fixture
def checkerboard():
    yy, xx = np.mgrid[:256, :256]
    return Image(np.where((yy + xx) % 2 == 0, 0.0, 255.0), tag="checkerboard")


@pytest.fixture
def textured():
    yy, xx = np.mgrid[:256, :256]
    return Image(127.5 + 100 * np.sin(xx / 3.0) * np.cos(yy / 5.0), tag="texture")


# acceptance verdicts, printed once at the end of the run
CRITERIA: dict[int, str] = {}


@pytest.fixture
def verdict():
    def record(number: int, passed: bool, detail: str) -> bool:
        CRITERIA[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
