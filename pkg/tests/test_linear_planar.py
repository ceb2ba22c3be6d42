import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cbfeq import (ClassKInf, ControllerDef, PolarBarrier, ProblemInstance, QuadFormBarrier, SystemDef,
                   WeightSpec, find_undesired_equilibria)
from cbfeq.equilibria import DEGENERATE, SADDLE, STABLE
from cbfeq.errors import InconsistentInstanceError, NotAnEigenvectorError
from cbfeq.planar import (PlanarLinearInstance, check_interior_circle, check_strict_cbf_circle_underactuated,
                          circle_problem, disk_case_analysis, eigenvector_case_analysis, ellipsoid_reduce,
                          general_case_roots, polar_safe_set_check, random_polar_instance,
                          random_underactuated_circle, synthesize_controller, union_circles_conditions,
                          underactuated_circle_equilibrium)

from planar_gen import eigvec_diag, eigvec_jordan, non_eigvec

ROW_COUNTS = {"below": (1, 0, 0), "equal": (1, 1, 0), "above": (2, 0, 1)}


def _counts(rep):
    c = rep.counts()
    return c[SADDLE], c[DEGENERATE], c[STABLE]


def test_interior_circle():
    assert check_interior_circle([2, 0], 1)
    assert not check_interior_circle([1, 0], 1)
    assert check_interior_circle([0, 2], 1.999)


def test_strict_cbf_needs_positive_t1():
    # A = -I, b = (0, 1): beta = -1, gamma = 0, T1 = -1 + alpha/2
    ok, d = check_strict_cbf_circle_underactuated(-np.eye(2), [0, 1], 0.5, [3, 0], 1)
    assert d["T1"] <= 0 and not ok


def test_strict_cbf_contrived_pass():
    # b = (0, 1): beta = a11, gamma = -a12, so a11 = -a12 = 2 gives beta = gamma = 2, T1 = 2 + 0.5
    ok, d = check_strict_cbf_circle_underactuated([[2, -2], [0, 1]], [0, 1], 1.0, [3, 3], 1.0)
    assert d["beta"] == d["gamma"] == 2.0 and d["T1"] == pytest.approx(2.5)
    assert ok


def test_strict_cbf_implies_positive_discriminant():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = random_underactuated_circle(rng)
        ok, d = check_strict_cbf_circle_underactuated(p.A, p.B, p.alpha, p.xc, p.r)
        assert ok and d["discriminant"] > 0


def test_underactuated_formula_matches_scan():
    rng = np.random.default_rng(1)
    for _ in range(25):
        p = random_underactuated_circle(rng)
        rec = underactuated_circle_equilibrium(p)
        S = find_undesired_equilibria(p.to_problem())
        assert len(S.actual) == 1
        assert np.linalg.norm(S.actual[0].point - rec.point) < 1e-6
        assert S.actual[0].classification == SADDLE == rec.classification


def test_bundled_underactuated_point():
    from cbfeq.bundled import get_bundled
    inst = get_bundled("circle-underactuated-analytic").build_instance()
    p = PlanarLinearInstance(inst.system.A, inst.system.B, inst.controller.K, inst.barrier.center,
                             inst.barrier.radius, 1.0)
    rec = underactuated_circle_equilibrium(p)
    np.testing.assert_allclose(rec.point, [-2.50206094, 1.19021545], atol=1e-6)


def test_underactuated_sign_flip_switches_branch():
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = random_underactuated_circle(rng)
        q = PlanarLinearInstance(p.A, p.B, p.K, -p.xc, p.r, p.alpha)
        try:
            a, b = underactuated_circle_equilibrium(p), underactuated_circle_equilibrium(q)
        except InconsistentInstanceError:
            continue
        # the point lies on the (gamma, beta) line; negating xc mirrors it through the origin
        np.testing.assert_allclose(a.point, -b.point, atol=1e-10)


def test_symmetric_center_on_gamma_beta_ray():
    A = np.array([[0.5, -1.0], [1.0, 0.3]])
    b = np.array([0.4, 1.0])
    beta = A[0, 0] * b[1] - b[0] * A[1, 0]
    gamma = A[1, 1] * b[0] - b[1] * A[0, 1]
    d = np.array([gamma, beta]) / np.hypot(gamma, beta)
    xc, r = -4 * d, 1.0
    ok, _ = check_strict_cbf_circle_underactuated(A, b, 1.0, xc, r)
    if ok:
        K = np.array([[3.0, 3.0]])
        rec = underactuated_circle_equilibrium(PlanarLinearInstance(A, b, K, xc, r, 1.0))
        assert min(np.linalg.norm(rec.point - (xc + r * d)), np.linalg.norm(rec.point - (xc - r * d))) < 1e-10


def test_eigenvector_row_one_example():
    rep = eigenvector_case_analysis(np.diag([-1.0, -2.0]), [2.0, 0.0], 1.0)
    assert rep.branch == "eigvec-diag-below"
    assert rep.diagnostics["threshold"] == pytest.approx(0.75)
    rec, = rep.equilibria
    np.testing.assert_allclose(rec.point, [3, 0], atol=1e-14)
    assert rec.delta == pytest.approx(-1.5) and rec.classification == SADDLE
    np.testing.assert_allclose(rep.potential[0].point, [1, 0], atol=1e-14)


@pytest.mark.parametrize("row", ["below", "above"])
@pytest.mark.parametrize("maker", [eigvec_diag, eigvec_jordan], ids=["diag", "jordan"])
def test_table_rows(maker, row):
    rng = np.random.default_rng(abs(hash((maker.__name__, row))) % 2**32)
    for _ in range(30):
        Atil, xc, r = maker(rng, row)
        rep = eigenvector_case_analysis(Atil, xc, r)
        assert rep.branch.endswith(row)
        assert _counts(rep) == ROW_COUNTS[row]
        for e in rep.equilibria:
            assert e.delta < 0
        for e in rep.potential:
            assert e.delta > 0


@pytest.mark.parametrize("maker", [eigvec_diag, eigvec_jordan], ids=["diag", "jordan"])
def test_table_equality_row(maker):
    rng = np.random.default_rng(5)
    Atil, xc, r = maker(rng, "equal")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = eigenvector_case_analysis(Atil, xc, r)
    assert rep.branch.endswith("equal")
    assert _counts(rep) == ROW_COUNTS["equal"]


def test_eigenvector_case_agrees_with_scan():
    rng = np.random.default_rng(6)
    for row in ("below", "above"):
        for _ in range(5):
            Atil, xc, r = eigvec_diag(rng, row)
            rep = eigenvector_case_analysis(Atil, xc, r)
            S = find_undesired_equilibria(circle_problem(Atil, xc, r))
            assert len(S.actual) == len(rep.equilibria)
            for e in rep.equilibria:
                d = min(np.linalg.norm(e.point - s.point) for s in S.actual)
                assert d < 1e-6


def test_not_an_eigenvector_raises():
    with pytest.raises(NotAnEigenvectorError):
        eigenvector_case_analysis(np.array([[-1.0, 1.0], [0.0, -2.0]]), [0.0, 3.0], 1.0)


def test_quartic_roots_match_scan():
    rng = np.random.default_rng(7)
    for _ in range(25):
        Atil, xc, r = non_eigvec(rng)
        rep = general_case_roots(Atil, xc, r)
        assert rep.diagnostics["F_at_zero"] > 0
        assert 1 <= rep.n_undesired <= 3
        assert any(d > 0 for d in rep.diagnostics["roots"])
        S = find_undesired_equilibria(circle_problem(Atil, xc, r))
        assert len(S.actual) == rep.n_undesired
        for e in rep.equilibria:
            s = min(S.actual, key=lambda q: np.linalg.norm(q.point - e.point))
            assert np.linalg.norm(s.point - e.point) < 1e-6
            assert s.classification == e.classification


def test_quartic_value_at_zero():
    rng = np.random.default_rng(9)
    for _ in range(20):
        Atil, xc, r = non_eigvec(rng)
        rep = general_case_roots(Atil, xc, r)
        lam = np.linalg.eigvals(Atil)
        expected = (xc @ xc - r * r) * abs(lam[0] * lam[1]) ** 2
        assert rep.diagnostics["F_at_zero"] == pytest.approx(expected, rel=1e-9)


def test_jordan_quartic_via_trace_and_determinant():
    # A~ with a double eigenvalue that is not a multiple of I, xc off the eigenvector
    lam = -1.3
    Atil = np.array([[lam, 2.0], [0.0, lam]])
    assert np.trace(Atil) ** 2 - 4 * np.linalg.det(Atil) == pytest.approx(0.0)
    xc, r = np.array([1.5, 3.0]), 1.0
    rep = disk_case_analysis(Atil, xc, r)
    assert rep.branch == "quartic-jordan"
    S = find_undesired_equilibria(circle_problem(Atil, xc, r))
    assert len(S.actual) == rep.n_undesired
    for e in rep.equilibria:
        assert min(np.linalg.norm(e.point - s.point) for s in S.actual) < 1e-6


@given(st.floats(-3, -0.2), st.floats(-3, -0.2), st.floats(0, 2 * np.pi))
def test_synthesis_places_poles(l1, l2, ang):
    A = np.array([[0.3, 1.0], [-0.5, 0.2]])
    B = np.array([[1.0, 0.2], [0.0, 1.5]])
    xc = 3.0 * np.array([np.cos(ang), np.sin(ang)])
    for mode in ("saddle-only", "stable-trap"):
        K = synthesize_controller(A, B, xc, 1.0, l1, l2, mode)
        ev = np.sort_complex(np.linalg.eigvals(A - B @ K))
        np.testing.assert_allclose(ev, np.sort_complex(np.array([l1, l2], complex)), atol=1e-8)


def test_synthesis_structures():
    A = np.array([[0.3, 1.0], [-0.5, 0.2]])
    B = np.eye(2)
    xc, r = np.array([3.0, 1.0]), 1.0
    K = synthesize_controller(A, B, xc, r, -1.0, -2.0, "saddle-only")
    rep = eigenvector_case_analysis(A - B @ K, xc, r)
    assert rep.branch == "eigvec-diag-below" and _counts(rep) == (1, 0, 0)
    K = synthesize_controller(A, B, xc, r, -1.0, -1.0, "stable-trap")
    rep = eigenvector_case_analysis(A - B @ K, xc, r)
    assert rep.branch == "eigvec-jordan-above" and _counts(rep) == (2, 0, 1)
    K = synthesize_controller(A, B, xc, r, -1.0, -2.0, "stable-trap")
    rep = eigenvector_case_analysis(A - B @ K, xc, r)
    assert rep.branch == "eigvec-diag-above" and _counts(rep) == (2, 0, 1)


def _ellipse_instance(P, xc, A, B, K):
    return ProblemInstance(SystemDef.linear(A, B), ControllerDef.gain(K), QuadFormBarrier(P, xc, 1),
                           WeightSpec.identity(B.shape[1]), ClassKInf.linear(1.0))


def test_ellipse_identity_and_diag_example():
    A = np.array([[-1.0, 0.5], [0.0, -2.0]])
    inst = _ellipse_instance(np.eye(2), [3.0, 0.0], A, np.eye(2), np.zeros((2, 2)))
    red = ellipsoid_reduce(inst)
    np.testing.assert_allclose(red.E, np.eye(2), atol=1e-15)
    inst = _ellipse_instance(np.diag([4.0, 1.0]), [1.0, 0.0], A, np.eye(2), np.zeros((2, 2)))
    red = ellipsoid_reduce(inst)
    np.testing.assert_allclose(red.problem.barrier.center, [2.0, 0.0], atol=1e-15)
    S0 = find_undesired_equilibria(inst).actual
    S1 = find_undesired_equilibria(red.problem).actual
    assert len(S0) == len(S1)
    for r in S1:
        back = red.to_original(r.point)
        q = min(S0, key=lambda s: np.linalg.norm(s.point - back))
        assert np.linalg.norm(q.point - back) < 1e-8
        np.testing.assert_allclose(np.sort_complex(q.eigenvalues), np.sort_complex(r.eigenvalues), atol=1e-8)


def test_union_circles_preflight():
    from cbfeq.bundled import get_bundled
    inst = get_bundled("union-circles").build_instance()
    bar = inst.barrier
    c = union_circles_conditions(inst.system.A, inst.system.B, bar.c1, bar.c2, bar.r1, 1.0)
    assert all(c["feasibility"].values())
    assert c["active_filter"] and c["stable"]
    np.testing.assert_allclose(c["point"], [3.157, 7.619], atol=2e-2)


@pytest.mark.parametrize("shape,params", [("ellipse", {"p": 3, "q": 1}), ("cassini", {"scale": 3, "e": 1.03}),
                                          ("rose", {"r0": 3, "amp": 2, "k": 3})])
def test_polar_no_undesired(shape, params):
    rng = np.random.default_rng(13)
    for _ in range(3):
        inst = random_polar_instance(shape, params, rng)
        chk = polar_safe_set_check(inst)
        assert chk.verdict == "no-undesired-equilibria" and chk.scan_undesired == 0
        s0, s1 = (np.sign(c["other_eigenvalue"]) for c in chk.candidates)
        assert s0 == s1
