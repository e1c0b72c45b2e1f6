import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from jklab.process import JumpKernelSpec, build_generator
from jklab.scale import ScaleFunction, make_triple
from jklab.space import build_lattice_torus

settings.register_profile("jklab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("jklab")


@pytest.fixture(scope="session")
def phi_j_11():
    """The two-exponent jump scale r v r^3."""
    return ScaleFunction.piecewise_power([1.0], [1.0, 3.0])


@pytest.fixture(scope="session")
def triple_11(phi_j_11):
    return make_triple(phi_j_11, ScaleFunction.power(2.0))


@pytest.fixture(scope="session")
def torus64():
    return build_lattice_torus(1, 64)


@pytest.fixture(scope="session")
def gen64(torus64, phi_j_11):
    return build_generator(torus64, JumpKernelSpec(phi_j_11))


@pytest.fixture(scope="session")
def torus256():
    return build_lattice_torus(1, 256)


@pytest.fixture(scope="session")
def gen256(torus256, phi_j_11):
    return build_generator(torus256, JumpKernelSpec(phi_j_11))


def random_generator(n, seed):
    """Symmetric random kernel on a small torus, for exactness checks."""
    from jklab.space import build_lattice_torus as torus
    rng = np.random.default_rng(seed)
    sp = torus(1, n)
    jm = rng.random((n, n))
    jm = jm + jm.T
    np.fill_diagonal(jm, 0.0)
    return build_generator(sp, jm)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance PASS/FAIL lines after the run, outside output capture."""
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "REPORT_LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
