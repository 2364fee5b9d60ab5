import numpy as np
import pytest

from detpp.kernels import make_bergman_kernel, make_dyson_kernel
from detpp.specs import load_kernel

UNIT_BOX = {"shape": "box", "lower": [0.0, 0.0], "upper": [1.0, 1.0]}

RANK0 = {"type": "custom", "domain": UNIT_BOX, "eigenvalues": [], "eigenfunctions": {"kind": "polynomial", "polys": []}}
RANK1 = {
    "type": "custom", "domain": UNIT_BOX, "eigenvalues": [0.5],
    "eigenfunctions": {"kind": "polynomial", "polys": [[{"exponent": [0, 0], "coeff": 1.0}]]},
}
RANK3 = {
    "type": "custom", "domain": UNIT_BOX, "eigenvalues": [0.5, 0.3, 0.2],
    "eigenfunctions": {"kind": "polynomial", "orthonormalize": True, "polys": [
        [{"exponent": [0, 0], "coeff": 1.0}],
        [{"exponent": [1, 0], "coeff": 1.0}],
        [{"exponent": [0, 1], "coeff": [0.0, 1.0]}, {"exponent": [1, 1], "coeff": 0.5}],
    ]},
}

# acceptance results collected for the end-of-run summary
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def bergman():
    return make_bergman_kernel(0.5, 2)


@pytest.fixture(scope="session")
def dyson3():
    return make_dyson_kernel(3)


@pytest.fixture(scope="session")
def rank0():
    return load_kernel(RANK0)


@pytest.fixture(scope="session")
def rank1():
    return load_kernel(RANK1)


@pytest.fixture(scope="session")
def rank3():
    return load_kernel(RANK3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def disc_points(rng, n, R=0.5, margin=0.0):
    r = (R - margin) * np.sqrt(rng.random(n))
    t = 2 * np.pi * rng.random(n)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
