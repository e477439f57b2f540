import numpy as np
import pytest

from sgfem.gpc_basis import build_multi_index_set
from sgfem.mesh_fem import build_mesh, model_rhs
from sgfem.random_field import build_kl_2d
from sgfem.sg_system import build_rhs, build_sg_operator


def make_problem(n, m, p, sigma, L=1.0, mean=1.0):
    mesh = build_mesh(n)
    kl = build_kl_2d(mean, sigma, L, m)
    mis = build_multi_index_set(m, p)
    op = build_sg_operator(mesh, kl, mis)
    b = build_rhs(mesh, mis, model_rhs)
    return mesh, kl, mis, op, b


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_problem():
    """m=2, p=2, h=1/8, sigma=0.3: N = 6 * 49 = 294."""
    return make_problem(8, 2, 2, 0.3)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
