import numpy as np
import pytest
from hypothesis import given, strategies as st

from cbfeq import (CassiniBarrier, ClassKInf, ConfigError, ControllerDef, HalfPlaneBarrier, PiecewiseBarrier,
                   PolarBarrier, ProblemInstance, QuadFormBarrier, SphereBarrier, SystemDef,
                   UnionCirclesBarrier, WeightSpec)
from cbfeq.bundled import bundled_names, get_bundled
from cbfeq.model import eval_eta, eval_f_tilde, is_hurwitz

from conftest import random_planar_instance


def test_f_tilde_origin_is_zero(convex):
    assert np.array_equal(eval_f_tilde(convex, np.zeros(2)), np.zeros(2))


def test_f_tilde_continuum_segment(continuum):
    np.testing.assert_allclose(eval_f_tilde(continuum, [-1.5, 0.0]), [0.0, -1.5], atol=1e-15)


def test_eta_convex_trap(convex):
    assert eval_eta(convex, [3.0, 3.0]) == pytest.approx(-60.0, abs=1e-12)


@pytest.mark.parametrize("s", [-1.9, -1.5, -1.1])
def test_eta_on_flat_piece_equals_coordinate(continuum, s):
    assert eval_eta(continuum, [s, 0.0]) == pytest.approx(s, abs=1e-14)


def test_controller_sign_conventions():
    K = np.array([[1.0, 2.0]])
    x = np.array([3.0, -1.0])
    assert ControllerDef.gain(K).k(x)[0] == pytest.approx(-1.0)
    assert ControllerDef.feedback(K).k(x)[0] == pytest.approx(1.0)


def test_rank_deficient_input_rejected():
    with pytest.raises(ConfigError):
        SystemDef.linear(np.eye(2), [[1, 2], [2, 4]])


def test_origin_must_be_interior():
    with pytest.raises(ConfigError, match="interior"):
        ProblemInstance(SystemDef.linear(np.eye(2), np.eye(2)), ControllerDef.zero(2, 2),
                        SphereBarrier([0, 0], 1.0, 1), WeightSpec.identity(2), ClassKInf.linear(1))


def test_weight_must_be_spd():
    with pytest.raises(ConfigError):
        WeightSpec.constant([[1, 0], [0, -1]])
    with pytest.raises(ConfigError):
        WeightSpec.constant([[1, 2], [0, 1]])


def test_alpha_validation():
    with pytest.raises(ConfigError):
        ClassKInf.linear(0.0)
    with pytest.raises(ConfigError):
        ClassKInf.cubic_odd(1.0, -1.0)
    a = ClassKInf.cubic_odd(2.0, 0.5)
    g = np.linspace(-10, 10, 100)
    assert a(0.0) == 0.0 and np.all(np.diff(a(g)) > 0)


def test_hurwitz_tolerance():
    assert is_hurwitz(np.diag([-1.0, -2.0]))
    assert not is_hurwitz(np.diag([-1.0, -1e-11]))


def test_evaluators_are_pure(convex):
    x = np.array([1.2345, 0.6789])
    a = eval_f_tilde(convex, x), eval_eta(convex, x)
    b = eval_f_tilde(convex, x), eval_eta(convex, x)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


def test_linear_f_tilde_matches_closed_loop_matrix():
    rng = np.random.default_rng(0)
    for _ in range(5):
        inst = random_planar_instance(rng)
        X = rng.normal(size=(100, 2))
        ref = X @ (np.array(inst.system.A) - np.array(inst.system.B) @ np.array(inst.controller.K)).T
        np.testing.assert_allclose(eval_f_tilde(inst, X), ref, rtol=0, atol=1e-13)


FAMILIES = [
    SphereBarrier([1.0, -2.0], 1.3, 1),
    SphereBarrier([0.5, 0.2, -0.3], 2.0, -1),
    QuadFormBarrier([[2.0, 0.3], [0.3, 0.5]], [3.0, 1.0], 1),
    CassiniBarrier(3.0, 3.15, 0.0, 4.0, 1),
    CassiniBarrier(6.587, 6.591, -5.0, 0.0, -1),
    HalfPlaneBarrier([0.6, 0.8], -1.0),
    PolarBarrier("ellipse", {"p": 3, "q": 1}),
    PolarBarrier("cassini", {"scale": 3, "e": 1.03}),
    PolarBarrier("rose", {"r0": 3, "amp": 2, "k": 3}),
    PiecewiseBarrier(-2.0, -1.0, 4.0),
    UnionCirclesBarrier(6.1, 10.027, 2.129),
]


@pytest.mark.parametrize("bar", FAMILIES, ids=lambda b: f"{b.family}{b.n}")
def test_gradient_matches_central_differences(bar):
    rng = np.random.default_rng(3)
    X = rng.uniform(-5, 8, (200, bar.n))
    if bar.family == "piecewise-example":
        # skip the kinks at lo and hi
        X = X[np.minimum(np.abs(X[:, 0] + 2), np.abs(X[:, 0] + 1)) > 1e-3]
    if bar.family == "union-of-circles-example":
        X = X[np.abs(X[:, 1] - 10.027) > 1e-3]
    G = bar.grad(X)
    e = 1e-6
    for i in range(bar.n):
        E = np.zeros(bar.n)
        E[i] = e
        fd = (bar.value(X + E) - bar.value(X - E)) / (2 * e)
        scale = 1 + np.abs(G[:, i])
        assert np.max(np.abs(fd - G[:, i]) / scale) < 1e-5


@given(st.floats(-6, 6), st.floats(-6, 6))
def test_polar_barrier_sign_matches_radius(x, y):
    bar = PolarBarrier("rose", {"r0": 3, "amp": 2, "k": 3})
    rho, th = np.hypot(x, y), np.arctan2(y, x)
    R = float(bar.radius(th)[0])
    if abs(rho - R) > 1e-9:
        assert (bar.value([x, y]) > 0) == (rho < R)


@pytest.mark.parametrize("name", bundled_names())
def test_bundled_instances_validate(name):
    inst = get_bundled(name).build_instance()
    assert inst.barrier.value(np.zeros(inst.n)) > 0
