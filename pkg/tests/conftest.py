import numpy as np
import pytest

from faceobf.extractor import BuiltinEmbedder
from faceobf.image import make_grid
from faceobf.rng import init_parameters
from faceobf.synthetic import random_image, synthetic_face


@pytest.fixture(scope="session")
def embedder():
    return BuiltinEmbedder()


@pytest.fixture
def grid56():
    return make_grid(56, 56, 7, 7)


@pytest.fixture
def img56():
    return random_image(56, 56, 1)


@pytest.fixture(scope="session")
def face112():
    return synthetic_face(112, 112, 0)


@pytest.fixture
def params56(grid56):
    return init_parameters(grid56, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one verdict line per acceptance criterion and echo it."""
    def report(number, title, ok, detail=""):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}"
        if detail:
            line += f" ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
