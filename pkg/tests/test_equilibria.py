import numpy as np
import pytest

from cbfeq import ClassKInf, ScanConfig, SphereBarrier, find_undesired_equilibria
from cbfeq.barriers import safe_set_topology
from cbfeq.bundled import get_bundled
from cbfeq.equilibria import (DEGENERATE, SADDLE, STABLE, EquilibriumRecord, StructureInapplicable,
                              attach_jacobian, check_count_structure, classify, classify_eigenvalues,
                              indicator, isolated_check, jacobian_fd, jacobian_projected,
                              jacobian_sphere_formula)
from cbfeq.errors import UnsupportedDimensionError
from cbfeq.planar import PlanarLinearInstance, circle_problem
from cbfeq.safety import closed_loop_field

from planar_gen import non_eigvec, random_obstacle_instance


def _near(records, p, tol):
    return [r for r in records if np.linalg.norm(r.point - np.asarray(p)) < tol]


def test_indicator_examples(convex, continuum):
    assert indicator(convex, [3.0, 3.0]) == pytest.approx(-1.5, abs=1e-12)
    # the indicator on the flat piece is the coordinate itself (k1 = 0)
    assert indicator(continuum, [-2.0, 0.0]) == pytest.approx(-2.0, abs=1e-12)


def test_convex_bounded_records(convex):
    S = find_undesired_equilibria(convex)
    assert len(S.actual) == 2
    trap, = _near(S.actual, [3, 3], 1e-6)
    sad, = _near(S.actual, [3.161, 2.123], 2e-2)
    assert trap.classification == STABLE and sad.classification == SADDLE
    assert trap.delta == pytest.approx(-1.5, abs=1e-9)
    for r in S.actual:
        assert abs(convex.barrier.value(r.point)) < 1e-8
        assert r.residual <= 1e-8 and r.delta < 0
        assert np.max(np.abs(closed_loop_field(convex, r.point))) <= 1e-8


def test_potential_only_records_have_positive_delta(convex):
    S = find_undesired_equilibria(convex)
    for r in S.potential:
        assert r.delta > 0 and classify(r) == "potential-only"


def test_three_jacobian_routes_agree_on_eigenvector_case():
    Atil = np.diag([-1.0, -2.0])
    inst = circle_problem(Atil, [2.0, 0.0], 1.0, alpha0=1.0)
    x = np.array([3.0, 0.0])
    Js = jacobian_sphere_formula(Atil, [2.0, 0.0], x, -1.5, 1.0)
    Jp = jacobian_projected(inst, x, -1.5)
    Jf, warn = jacobian_fd(inst, x)
    assert not warn
    np.testing.assert_allclose(Js, Jp, atol=1e-12)
    np.testing.assert_allclose(Js, Jf, atol=1e-5)


def test_alpha_eigenvalue_present_on_every_record():
    rng = np.random.default_rng(4)
    for _ in range(20):
        inst = random_obstacle_instance(rng, "bounded-obstacle")
        for r in find_undesired_equilibria(inst).actual:
            assert np.min(np.abs(r.eigenvalues + inst.alpha.slope0)) < 1e-6


def test_projected_jacobian_matches_finite_differences():
    rng = np.random.default_rng(8)
    n = 0
    while n < 20:
        inst = random_obstacle_instance(rng, rng.choice(["bounded-obstacle", "compact-safe-set"]))
        for r in find_undesired_equilibria(inst).actual:
            Jf, _ = jacobian_fd(inst, r.point)
            np.testing.assert_allclose(r.jacobian, Jf, atol=1e-5 * (1 + np.abs(Jf).max()))
            n += 1


def test_classification_rules():
    assert classify_eigenvalues([-1.0, -2.0]) == STABLE
    assert classify_eigenvalues([-1.0, 2.0]) == SADDLE
    assert classify_eigenvalues([-1.0, 0.0]) == DEGENERATE
    rec = EquilibriumRecord(np.zeros(2), -1.0, 0.0, eigenvalues=np.array([-1.0, 1e-9]))
    assert classify(rec) == DEGENERATE and not isolated_check(rec)


def test_continuum_diagnosis_and_zero_eigenvalue(continuum):
    S = find_undesired_equilibria(continuum)
    assert len(S.continua) == 1
    c = S.continua[0]
    ends = sorted([c.start[0], c.end[0]])
    assert ends == pytest.approx([-2.0, -1.0], abs=1e-3)
    rec = EquilibriumRecord(np.array([-1.5, 0.0]), -1.5, 0.0)
    attach_jacobian(continuum, rec)
    assert not isolated_check(rec)


def test_lyapunov_sublevel_safe_set_has_no_undesired_equilibria():
    # h = c - x^T P x with A~^T P + P A~ = -I: the filter never acts
    from scipy.linalg import solve_continuous_lyapunov
    from cbfeq import ControllerDef, ProblemInstance, QuadFormBarrier, SystemDef, WeightSpec
    Atil = np.array([[-1.0, 2.0], [-1.0, -1.5]])
    P = solve_continuous_lyapunov(Atil.T, -np.eye(2))
    inst = ProblemInstance(SystemDef.linear(Atil, np.eye(2)), ControllerDef.zero(2, 2),
                           QuadFormBarrier(P / 4.0, [0, 0], -1), WeightSpec.identity(2), ClassKInf.linear(1))
    assert find_undesired_equilibria(inst).actual == []


def test_independence_of_alpha_slope():
    rng = np.random.default_rng(21)
    for _ in range(10):
        inst = random_obstacle_instance(rng, "bounded-obstacle")
        a = inst.alpha.slope0
        S1 = find_undesired_equilibria(inst).actual
        S2 = find_undesired_equilibria(inst.with_alpha(ClassKInf.linear(10 * a))).actual
        assert len(S1) == len(S2)
        for r1 in S1:
            r2, = _near(S2, r1.point, 1e-8)
            assert r1.classification == r2.classification
            e1 = sorted(r1.eigenvalues, key=lambda z: abs(z + a))
            e2 = sorted(r2.eigenvalues, key=lambda z: abs(z + 10 * a))
            assert abs(e1[0] + a) < 1e-6 and abs(e2[0] + 10 * a) < 1e-6
            assert abs(e1[1] - e2[1]) < 1e-6


def test_scan_matches_dense_scan():
    rng = np.random.default_rng(31)
    for _ in range(10):
        Atil, xc, r = non_eigvec(rng)
        inst = circle_problem(Atil, xc, r)
        S = find_undesired_equilibria(inst, with_jacobians=False)
        D = find_undesired_equilibria(inst, ScanConfig(grid=20000), with_jacobians=False)
        a = sorted(map(tuple, np.round([p.point for p in S], 5).tolist()))
        b = sorted(map(tuple, np.round([p.point for p in D], 5).tolist()))
        assert len(a) == len(b)
        np.testing.assert_allclose(np.array(a), np.array(b), atol=1e-5)


@pytest.mark.parametrize("name,topology", [("convex-bounded", "compact-safe-set"),
                                           ("cassini-obstacle-underactuated", "bounded-obstacle"),
                                           ("circle-underactuated-analytic", "bounded-obstacle")])
def test_count_structure_on_bundled(name, topology):
    inst = get_bundled(name).build_instance()
    assert safe_set_topology(inst.barrier) == topology
    rep = check_count_structure(find_undesired_equilibria(inst).actual, topology)
    assert rep.passed, rep


def test_structure_rejects_degenerate_records():
    rec = EquilibriumRecord(np.zeros(2), -1.0, 0.0, eigenvalues=np.array([-1.0, 0.0]), classification=DEGENERATE)
    with pytest.raises(StructureInapplicable):
        check_count_structure([rec], "bounded-obstacle")


def test_sphere_3d_scan_and_unsupported_dimension():
    inst = get_bundled("limit-cycle-3d").build_instance()
    S = find_undesired_equilibria(inst)
    for r in S.actual:
        assert np.max(np.abs(closed_loop_field(inst, r.point))) < 1e-8
    from cbfeq import ControllerDef, ProblemInstance, SystemDef, WeightSpec
    inst4 = ProblemInstance(SystemDef.linear(-np.eye(4), np.eye(4)), ControllerDef.zero(4, 4),
                            SphereBarrier([3, 0, 0, 0], 1.0, 1), WeightSpec.identity(4), ClassKInf.linear(1))
    with pytest.raises(UnsupportedDimensionError):
        find_undesired_equilibria(inst4)
