import numpy as np
import pytest
from hypothesis import settings

from cbfeq import (ClassKInf, ControllerDef, ProblemInstance, SphereBarrier, SystemDef, WeightSpec)
from cbfeq.bundled import get_bundled

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("default")


def bundled_instance(name):
    return get_bundled(name).build_instance()


@pytest.fixture(scope="session")
def convex():
    return bundled_instance("convex-bounded")


@pytest.fixture(scope="session")
def continuum():
    return bundled_instance("continuum")


def random_spd(rng, m):
    M = rng.standard_normal((m, m))
    return M @ M.T + 0.1 * np.eye(m)


def random_planar_instance(rng, m=None, weight=True):
    """Linear planar plant, random gain, disk obstacle away from the origin."""
    m = m or int(rng.integers(1, 3))
    A = rng.uniform(-2, 2, (2, 2))
    B = rng.uniform(-2, 2, (2, m))
    while np.linalg.matrix_rank(B) < m:
        B = rng.uniform(-2, 2, (2, m))
    K = rng.uniform(-3, 3, (m, 2))
    ang = rng.uniform(0, 2 * np.pi)
    xc = rng.uniform(2, 5) * np.array([np.cos(ang), np.sin(ang)])
    r = rng.uniform(0.3, 1.5)
    G = WeightSpec.constant(random_spd(rng, m)) if weight else WeightSpec.identity(m)
    return ProblemInstance(SystemDef.linear(A, B), ControllerDef.gain(K), SphereBarrier(xc, r, 1), G,
                           ClassKInf.linear(rng.uniform(0.5, 5)))


def safe_states(inst, rng, k, box=6.0):
    X = rng.uniform(-box, box, (4 * k, inst.n))
    X = X[inst.barrier.value(X) > 0]
    return X[:k]


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
