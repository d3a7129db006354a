import numpy as np
import pytest

from pqss.mesh import build_interval_mesh, build_square_mesh
from pqss.nonlinearity import NonlinearityQuad, piecewise_power, polynomial_sum


def sqrt_minus_one(coef=1.0):
    return polynomial_sum([(coef, 0.5)], offset=1.0)


def ex31_quad(coef=1.0):
    s = sqrt_minus_one(coef)
    return NonlinearityQuad(s, s, s, s)


def ex32_quad(inner=2.0, outer=0.5):
    s = piecewise_power(inner, outer)
    return NonlinearityQuad(s, s, s, s)


@pytest.fixture(scope="session")
def interval128():
    return build_interval_mesh(128)


@pytest.fixture(scope="session")
def interval256():
    return build_interval_mesh(256)


@pytest.fixture(scope="session")
def square32():
    return build_square_mesh(32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} | {detail}")
