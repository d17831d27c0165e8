import math

import numpy as np
import pytest

from heatkern import geometry as geo
from heatkern.kernels import OperatorSpec

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def circle():
    return geo.ManifoldModel.circle(1.0)


@pytest.fixture(scope="session")
def sphere():
    return geo.ManifoldModel.sphere(1.0)


@pytest.fixture(scope="session")
def torus():
    return geo.ManifoldModel.torus(1.0, 2.0)


@pytest.fixture(scope="session")
def lap():
    return OperatorSpec.laplace()


@pytest.fixture(scope="session")
def cos_potential():
    return OperatorSpec.schroedinger((0.0, 1.0))


def random_points(model, n, rng):
    if model.kind == "circle":
        return rng.uniform(0, 2 * math.pi, (n, 1))
    if model.kind == "torus":
        return rng.uniform(0, 1, (n, 2)) * np.asarray(model.lengths)
    v = rng.normal(size=(n, 3))
    return geo.from_cartesian(v / np.linalg.norm(v, axis=1, keepdims=True))
