"""Closed-form analysis of linear planar plants with circular or elliptical obstacles.

Conventions: the nominal controller is u = -K x, the closed loop A~ = A - B K,
and the obstacle is the open disk {|x - xc| < r}, i.e. h = |x - xc|^2 - r^2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from numpy.polynomial import Polynomial

from .barriers import PolarBarrier, QuadFormBarrier, SphereBarrier, spd_sqrt
from .equilibria import (DEGENERATE, POTENTIAL, SADDLE, EquilibriumRecord, attach_jacobian,
                         classify_eigenvalues, find_undesired_equilibria, jacobian_sphere_formula)
from .errors import (ConfigError, ConsistencyError, InconsistentInstanceError,
                     NotAnEigenvectorError, NumericalError)
from .model import (ClassKInf, ControllerDef, ProblemInstance, SystemDef, WeightSpec, eval_f_tilde,
                    is_hurwitz)
from .safety import filter_terms

EIGVEC_ANGLE_TOL = 1e-10
JORDAN_TOL = 1e-9
MARGIN_TOL = 1e-9
COND_MAX = 1e10


# ---------------------------------------------------------------------------
# instances


@dataclass
class PlanarLinearInstance:
    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    xc: np.ndarray
    r: float = 1.0
    alpha: float = 1.0
    G: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None  # ellipse shape; None means a circle of radius r

    def __post_init__(self):
        self.A = np.asarray(self.A, float).reshape(2, 2)
        self.B = np.asarray(self.B, float).reshape(2, -1)
        self.K = np.asarray(self.K, float).reshape(self.B.shape[1], 2)
        self.xc = np.asarray(self.xc, float).reshape(2)
        if self.m not in (1, 2):
            raise ConfigError("planar instances need one or two inputs")
        if self.G is None:
            self.G = self.B.T @ self.B if self.m == 2 else np.eye(1)
        self.G = np.atleast_2d(np.asarray(self.G, float))

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def Atil(self) -> np.ndarray:
        return self.A - self.B @ self.K

    @property
    def beta(self) -> float:
        (a11, _), (a21, _) = self.A
        b1, b2 = self.B[:, 0]
        return float(a11 * b2 - b1 * a21)

    @property
    def gamma(self) -> float:
        (_, a12), (_, a22) = self.A
        b1, b2 = self.B[:, 0]
        return float(a22 * b1 - b2 * a12)

    def barrier(self):
        if self.P is None:
            return SphereBarrier(self.xc, self.r, 1)
        return QuadFormBarrier(self.P, self.xc, 1)

    def to_problem(self, name: str = "") -> ProblemInstance:
        return ProblemInstance(SystemDef.linear(self.A, self.B), ControllerDef.gain(self.K),
                               self.barrier(), WeightSpec.constant(self.G),
                               ClassKInf.linear(self.alpha), True, name)


def circle_problem(Atil, xc, r, alpha0: float = 1.0) -> ProblemInstance:
    """Fully actuated stand-in with B = I, G = I and A = A~ (same closed loop as any
    invertible B with G = B^T B)."""
    return PlanarLinearInstance(np.asarray(Atil, float), np.eye(2), np.zeros((2, 2)), xc, r,
                                alpha0, np.eye(2)).to_problem()


@dataclass
class CaseReport:
    branch: str
    equilibria: List[EquilibriumRecord]
    potential: List[EquilibriumRecord]
    notes: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_potential(self) -> int:
        return len(self.equilibria) + len(self.potential)

    @property
    def n_undesired(self) -> int:
        return len(self.equilibria)

    def counts(self) -> dict:
        c = {SADDLE: 0, "asymptotically-stable": 0, DEGENERATE: 0}
        for r in self.equilibria:
            c[r.classification] = c.get(r.classification, 0) + 1
        return c

    def to_dict(self) -> dict:
        return {"branch": self.branch, "E": self.n_potential, "E_hat": self.n_undesired,
                "counts": self.counts(),
                "undesired": [r.to_dict() for r in self.equilibria],
                "potential_only": [r.to_dict() for r in self.potential],
                "notes": list(self.notes),
                "diagnostics": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                                for k, v in self.diagnostics.items()}}


# ---------------------------------------------------------------------------
# feasibility tests


def check_interior_circle(xc, r: float) -> bool:
    """Origin strictly outside the disk obstacle."""
    if not r > 0:
        raise ConfigError("radius must be positive")
    xc = np.asarray(xc, float)
    return bool(xc @ xc > r * r)


def strict_cbf_terms(A, B, alpha0: float, xc, r: float) -> dict:
    A = np.asarray(A, float)
    b1, b2 = np.asarray(B, float).reshape(2)
    xc = np.asarray(xc, float)
    beta = A[0, 0] * b2 - b1 * A[1, 0]
    gamma = A[1, 1] * b1 - b2 * A[0, 1]
    T1 = b2 * beta + b1 * gamma + 0.5 * alpha0 * (b1 * b1 + b2 * b2)
    T3 = beta * xc[0] - gamma * xc[1]
    T2 = T3**2 + 2 * alpha0 * r * r * T1
    return {"beta": float(beta), "gamma": float(gamma), "T1": float(T1), "T2": float(T2),
            "T3": float(T3), "discriminant": float(r * r * (gamma**2 + beta**2) - T3**2)}


def check_strict_cbf_circle_underactuated(A, B, alpha0: float, xc, r: float):
    """Sufficient condition for the disk barrier to be strict with a single input.

    On the line B^T (x - xc) = 0 the CBF inequality becomes a quadratic in the
    line coordinate whose roots must lie inside the obstacle.
    """
    B = np.asarray(B, float).reshape(2)
    if not r > 0 or B @ B == 0:
        raise ConfigError("need r > 0 and a nonzero input column")
    d = strict_cbf_terms(A, B, alpha0, xc, r)
    ok = d["T1"] > 0 and d["T2"] >= 0 and \
        r / np.sqrt(B @ B) > (abs(d["T3"]) + np.sqrt(max(d["T2"], 0.0))) / (2 * d["T1"])
    return bool(ok), d


def underactuated_circle_equilibrium(pli: PlanarLinearInstance) -> EquilibriumRecord:
    """The unique undesired equilibrium for one input and a disk obstacle."""
    if pli.m != 1:
        raise ConfigError("single-input instance required")
    ok, d = check_strict_cbf_circle_underactuated(pli.A, pli.B, pli.alpha, pli.xc, pli.r)
    if not ok or not check_interior_circle(pli.xc, pli.r):
        raise InconsistentInstanceError("strict-CBF or interior condition fails")
    beta, gamma = d["beta"], d["gamma"]
    s = gamma * pli.xc[0] + beta * pli.xc[1]
    if abs(s) <= 1e-12:
        raise InconsistentInstanceError("gamma*xc1 + beta*xc2 vanishes")
    q = gamma**2 + beta**2
    root = np.sqrt(d["discriminant"])
    z = (s + root) / q if s < 0 else (s - root) / q
    x = np.array([gamma * z, beta * z])
    inst = pli.to_problem()
    T = filter_terms(inst, x[None])
    delta = float(T.grad[0] @ T.f_tilde[0] / T.denom[0])
    rec = EquilibriumRecord(point=x, delta=delta, residual=float(np.max(np.abs(
        eval_f_tilde(inst, x) - delta * T.direction[0]))), provenance="analytic-formula")
    if delta < 0:
        attach_jacobian(inst, rec)
        rec.notes.append(f"jacobian classification: {rec.classification}")
    rec.classification = SADDLE
    return rec


def underactuated_jacobian(A, B, w, alpha0: float) -> np.ndarray:
    """Single-input Jacobian at an undesired equilibrium; w is grad h there.
    It does not depend on the nominal gain."""
    A = np.asarray(A, float)
    b = np.asarray(B, float).reshape(-1)
    w = np.asarray(w, float)
    return A - np.outer(b, w @ (A + alpha0 * np.eye(len(b)))) / (w @ b)


# ---------------------------------------------------------------------------
# fully actuated disk: x_c an eigenvector of A~


def _record(x, delta, Atil, xc, alpha0, provenance="analytic-formula", force=None):
    rec = EquilibriumRecord(point=np.asarray(x, float), delta=float(delta), residual=0.0,
                            provenance=provenance)
    d = rec.point - xc
    rec.residual = float(np.max(np.abs(Atil @ rec.point - delta * 2 * d)))
    if delta > 0:
        rec.classification = POTENTIAL
        return rec
    J = jacobian_sphere_formula(Atil, xc, rec.point, delta, alpha0)
    rec.jacobian, rec.jacobian_method = J, "sphere-formula"
    rec.eigenvalues = np.linalg.eigvals(J)
    rec.classification = force or classify_eigenvalues(rec.eigenvalues)
    return rec


def _other_eigenvalue(Atil, xc, x, delta, alpha0):
    J = jacobian_sphere_formula(Atil, xc, x, delta, alpha0)
    return float(np.trace(J) + alpha0)


def _eigvec_angle(Atil, xc):
    u = xc / np.linalg.norm(xc)
    v = Atil @ u
    if not np.any(v):
        return 0.0
    return float(np.arctan2(abs(u[0] * v[1] - u[1] * v[0]), abs(u @ v)))


def is_eigenvector(Atil, xc, tol: float = EIGVEC_ANGLE_TOL) -> bool:
    return _eigvec_angle(np.asarray(Atil, float), np.asarray(xc, float)) < tol


def _row(value: float, threshold: float, tol: float):
    margin = value - threshold
    if abs(margin) <= tol:
        return "equal", margin
    return ("above" if margin > 0 else "below"), margin


def eigenvector_case_analysis(Atil, xc, r: float, alpha0: float = 1.0) -> CaseReport:
    """All equilibria on the disk boundary when x_c is an eigenvector of A~.

    Besides the pair (1 +- r/|xc|) xc, resonant solutions with 2 delta equal
    to the other eigenvalue (diagonalizable case) or to the repeated eigenvalue
    (Jordan case) exist when the eigenvector alignment exceeds a threshold.
    """
    Atil = np.asarray(Atil, float)
    xc = np.asarray(xc, float)
    if not check_interior_circle(xc, r):
        raise ConfigError("need |xc| > r")
    if not is_eigenvector(Atil, xc):
        raise NotAnEigenvectorError(f"xc is not an eigenvector of A~ (angle {_eigvec_angle(Atil, xc):.3e})")
    L = np.linalg.norm(xc)
    vi = xc / L
    lam = float(vi @ Atil @ vi)
    R = Atil - lam * np.eye(2)
    lam_j = float(np.trace(Atil) - lam)
    notes, diag = [], {"lambda_i": lam, "lambda_j": lam_j}
    eq, pot = [], []

    # non-resonant pair
    d_minus = lam / 2 + lam * L / (2 * r)
    d_plus = lam / 2 - lam * L / (2 * r)
    eq.append(_record((1 + r / L) * xc, d_minus, Atil, xc, alpha0))
    pot.append(_record((1 - r / L) * xc, d_plus, Atil, xc, alpha0))

    scale = max(1.0, np.abs(Atil).max())
    jordan = abs(lam - lam_j) <= JORDAN_TOL * scale and np.linalg.norm(R) > JORDAN_TOL * scale
    if jordan:
        # A~ v2 = lam v2 + mu v1 with v2 orthogonal to v1
        v2 = np.array([-vi[1], vi[0]])
        mu = float(vi @ Atil @ v2)
        cvv = 0.0
        threshold = 1 - (r * mu) ** 2 / (lam * L) ** 2
        row, margin = _row(cvv**2, threshold, MARGIN_TOL)
        branch = f"eigvec-jordan-{row}"
        diag.update(mu=mu, v1v2=cvv, threshold=threshold, margin=margin)
        y2 = -lam * L / mu
        # y1^2 + 2 c y1 y2 + y2^2 - r^2 = 0, c = 0
        disc = r * r - y2 * y2
        dres = lam / 2
        if row == "equal":
            roots = [0.0]
        elif row == "above":
            roots = [-np.sqrt(disc), np.sqrt(disc)]
        else:
            roots = []
        for y1 in roots:
            x = xc + y1 * vi + y2 * v2
            eq.append(_record(x, dres, Atil, xc, alpha0, force=DEGENERATE if row == "equal" else None))
    else:
        if abs(lam - lam_j) <= JORDAN_TOL * scale:
            vj = np.array([-vi[1], vi[0]])  # A~ = lam I: any completion works
        else:
            w, V = np.linalg.eig(Atil)
            k = int(np.argmin(np.abs(w - lam_j)))
            vj = np.real(V[:, k])
            vj /= np.linalg.norm(vj)
        cvv = float(vi @ vj)
        if cvv < 0:
            vj, cvv = -vj, -cvv
        if abs(lam - lam_j) <= JORDAN_TOL * scale:
            threshold = 1.0
        else:
            threshold = 1 - (lam - lam_j) ** 2 * r * r / (lam * lam * L * L)
        row, margin = _row(cvv**2, threshold, MARGIN_TOL)
        branch = f"eigvec-diag-{row}"
        diag.update(v1v2=cvv, threshold=threshold, margin=margin)
        if abs(lam - lam_j) > JORDAN_TOL * scale and row != "below":
            y1 = -lam * L / (lam - lam_j)
            # y2^2 + 2 c y1 y2 + y1^2 - r^2 = 0
            disc = max((cvv * y1) ** 2 - y1 * y1 + r * r, 0.0)
            roots = [-cvv * y1] if row == "equal" else [-cvv * y1 - np.sqrt(disc), -cvv * y1 + np.sqrt(disc)]
            dres = lam_j / 2
            for y2 in roots:
                x = xc + y1 * vi + y2 * vj
                rec = _record(x, dres, Atil, xc, alpha0, force=DEGENERATE if row == "equal" else None)
                (eq if dres < 0 else pot).append(rec)
    if row == "equal":
        notes.append(f"borderline row: alignment equals threshold within {MARGIN_TOL:g} "
                     f"(margin {margin:.3e}); merged equilibrium reported as degenerate")
        warnings.warn(notes[-1])
    for rec in eq:
        if rec.delta < 0:
            rec.notes.append(f"other eigenvalue {_other_eigenvalue(Atil, xc, rec.point, rec.delta, alpha0):.12g}")
    return CaseReport(branch, eq, pot, notes, diag)


# ---------------------------------------------------------------------------
# fully actuated disk: x_c not an eigenvector


def _real_poly(coefs_complex, what):
    c = np.asarray(coefs_complex, complex)
    sc = max(1.0, np.abs(c).max())
    if np.abs(c.imag).max() > 1e-10 * sc:
        raise NumericalError(f"{what}: imaginary residue {np.abs(c.imag).max():.3e}")
    return Polynomial(c.real)


def indicator_polynomial_diag(lam1, lam2, v1, v2, beta1, beta2, r) -> Polynomial:
    """Quartic in delta whose real roots index the equilibria (diagonalizable A~)."""
    p1 = Polynomial([lam1, -2.0])
    p2 = Polynomial([lam2, -2.0])
    p1c = Polynomial([np.conj(lam1), -2.0])
    p2c = Polynomial([np.conj(lam2), -2.0])
    c12 = np.vdot(v1, v2)  # v1^H v2
    a1 = lam1 * beta1
    a2 = lam2 * beta2
    F = (-(r * r) * p1 * p1c * p2 * p2c + abs(a1) ** 2 * p2 * p2c + abs(a2) ** 2 * p1 * p1c
         + np.conj(a1) * a2 * c12 * p2c * p1 + a1 * np.conj(a2) * np.conj(c12) * p2 * p1c)
    return _real_poly(F.coef, "indicator polynomial")


def indicator_polynomial_jordan(lam, mu, c, beta1, beta2, r) -> Polynomial:
    """Quartic for A~ v2 = lam v2 + mu v1 (non-diagonalizable)."""
    p = Polynomial([lam, -2.0])
    dl = Polynomial([0.0, 1.0])
    Y1 = -lam * beta1 * p + 2 * mu * beta2 * dl
    Y2 = -lam * beta2 * p
    return Y1 * Y1 + Y2 * Y2 + 2 * c * Y1 * Y2 - r * r * p**4


def _real_roots(P: Polynomial, tol: float = 1e-6):
    out = []
    for z in P.roots():
        if abs(z.imag) <= tol * (1 + abs(z.real)):
            x = z.real
            dP = P.deriv()
            for _ in range(3):
                d = dP(x)
                if d == 0:
                    break
                step = P(x) / d
                if abs(step) > 1e-3 * (1 + abs(x)):
                    break
                x -= step
            out.append(float(x))
    out.sort()
    merged = []
    for x in out:
        if merged and abs(x - merged[-1]) <= 1e-7 * (1 + abs(x)):
            continue
        merged.append(x)
    return merged


def general_case_roots(Atil, xc, r: float, alpha0: float = 1.0) -> CaseReport:
    """Equilibria on the disk boundary when x_c is not an eigenvector of A~."""
    Atil = np.asarray(Atil, float)
    xc = np.asarray(xc, float)
    if is_eigenvector(Atil, xc):
        raise ConfigError("xc is an eigenvector; use eigenvector_case_analysis")
    if not is_hurwitz(Atil):
        raise ConfigError("A~ must be Hurwitz")
    notes, diag = [], {}
    w, V = np.linalg.eig(Atil)
    scale = max(1.0, np.abs(Atil).max())
    lam0 = np.trace(Atil) / 2
    R = Atil - lam0 * np.eye(2)
    jordan = abs(w[0] - w[1]) <= 1e-6 * scale and np.linalg.norm(R) > JORDAN_TOL * scale
    if not jordan and np.linalg.cond(V) > COND_MAX:
        msg = "ill-conditioned eigenbasis; falling back to the boundary scan"
        warnings.warn(msg)
        return _scan_report(Atil, xc, r, alpha0, "scan-fallback", [msg])
    if jordan:
        lam = float(lam0)
        # kernel of the nilpotent part
        U, S, Vt = np.linalg.svd(R)
        v1 = U[:, 0] / np.linalg.norm(U[:, 0])
        v2 = np.array([-v1[1], v1[0]])
        mu = float(v1 @ Atil @ v2)
        c = 0.0
        beta1, beta2 = float(v1 @ xc), float(v2 @ xc)
        F = indicator_polynomial_jordan(lam, mu, c, beta1, beta2, r)
        branch = "quartic-jordan"
        diag.update(lam=lam, mu=mu, beta=[beta1, beta2])

        def to_x(dl):
            p = lam - 2 * dl
            y2 = -lam * beta2 / p
            y1 = -lam * beta1 / p + 2 * dl * mu * beta2 / p**2
            return xc + y1 * v1 + y2 * v2, (y1, y2)

        def other(dl, y):
            y1, y2 = y
            return lam - 2 * dl - mu * y2 / r**2 * (y1 + y2 * c)
        lams = (lam, lam)
    else:
        order = np.argsort(w.real) if np.all(np.abs(w.imag) < 1e-14) else [0, 1]
        lam1, lam2 = w[order[0]], w[order[1]]
        v1, v2 = V[:, order[0]], V[:, order[1]]
        real = np.all(np.abs(w.imag) < 1e-14)
        if real:
            lam1, lam2 = float(lam1.real), float(lam2.real)
            v1, v2 = np.real(v1), np.real(v2)
            v1, v2 = v1 / np.linalg.norm(v1), v2 / np.linalg.norm(v2)
            if v1 @ v2 < 0:
                v2 = -v2
        coef = np.linalg.solve(np.column_stack([v1, v2]), xc.astype(complex if not real else float))
        beta1, beta2 = coef
        F = indicator_polynomial_diag(lam1, lam2, v1, v2, beta1, beta2, r)
        branch = "quartic-diag"
        diag.update(lam=[complex(lam1), complex(lam2)] if not real else [lam1, lam2],
                    v1v2=float(np.real(np.vdot(v1, v2))))

        def to_x(dl):
            y1 = -lam1 * beta1 / (lam1 - 2 * dl)
            y2 = -lam2 * beta2 / (lam2 - 2 * dl)
            return np.real(xc + y1 * v1 + y2 * v2), (y1, y2)

        def other(dl, y):
            if not real:
                return None
            y1, y2 = y
            D1 = np.conj(y1) + np.conj(y2) * np.vdot(v2, v1)
            return float(np.real(lam1 - 2 * dl - y1 * (lam1 - lam2) * D1 / r**2))
        lams = (lam1, lam2)
    diag["F_coefficients"] = F.coef.tolist()
    diag["F_at_zero"] = float(F(0.0))
    roots = _real_roots(F)
    diag["roots"] = roots
    eq, pot = [], []
    for dl in roots:
        if abs(dl) <= 1e-12:
            continue
        x, y = to_x(dl)
        rec = _record(x, dl, Atil, xc, alpha0)
        if dl < 0:
            oe = other(dl, y)
            if oe is not None:
                rec.notes.append(f"other eigenvalue {oe:.12g}")
                # the closed form decides the class; the Jacobian route is the fallback
                rec.classification = classify_eigenvalues([oe, -alpha0])
            else:
                rec.notes.append("complex eigenvalues: classified from the Jacobian")
            eq.append(rec)
        else:
            pot.append(rec)
    claims = {"undesired_count_in_1_3": 1 <= len(eq) <= 3,
              "has_positive_root": any(d > 0 for d in roots)}
    if np.isrealobj(np.asarray(lams)) or all(np.imag(l) == 0 for l in lams):
        l1 = float(np.real(min(lams, key=np.real)))
        claims["root_below_half_lambda1"] = any(d < l1 / 2 for d in roots)
    diag["claims"] = claims
    if not all(claims.values()):
        notes.append(f"structural claim failed: {claims}")
    return CaseReport(branch, eq, pot, notes, diag)


def _scan_report(Atil, xc, r, alpha0, branch, notes):
    inst = circle_problem(Atil, xc, r, alpha0)
    S = find_undesired_equilibria(inst)
    return CaseReport(branch, list(S.actual), list(S.potential), notes, {})


def disk_case_analysis(Atil, xc, r: float, alpha0: float = 1.0) -> CaseReport:
    """Dispatch on the eigenvector test; borderline instances go to the quartic."""
    ang = _eigvec_angle(np.asarray(Atil, float), np.asarray(xc, float))
    if ang < EIGVEC_ANGLE_TOL:
        return eigenvector_case_analysis(Atil, xc, r, alpha0)
    rep = general_case_roots(Atil, xc, r, alpha0)
    if ang < 1e-6:
        rep.notes.append(f"near-eigenvector instance (angle {ang:.2e}) treated by the quartic")
    return rep


# ---------------------------------------------------------------------------
# controller synthesis


def _rot(th):
    return np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])


def synthesize_controller(A, B, xc, r: float, lam1: float, lam2: float, mode: str) -> np.ndarray:
    """Gain K (u = -K x) placing the eigenvalues of A - B K at {lam1, lam2} with a prescribed
    eigenvector geometry relative to the obstacle center.

    mode "stable-trap": the closed loop has an asymptotically stable undesired
    equilibrium; mode "saddle-only": a single undesired equilibrium, a saddle.
    """
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    xc = np.asarray(xc, float)
    if B.shape != (2, 2) or abs(np.linalg.det(B)) < 1e-12:
        raise ConfigError("B must be invertible")
    if not (lam1 < 0 and lam2 < 0):
        raise ConfigError("requested eigenvalues must be negative")
    if not check_interior_circle(xc, r):
        raise ConfigError("need |xc| > r")
    L = np.linalg.norm(xc)
    v1 = xc / L
    if mode == "stable-trap":
        if lam1 == lam2:
            Q = max(0.0, 1 - r * r / (2 * lam1**2 * L**2))
            v2 = _rot(np.arccos(np.sqrt(Q))) @ v1
            D = np.array([[lam1, 1.0], [0.0, lam1]])
        else:
            Q = max(0.0, 1 - (lam1 - lam2) ** 2 * r * r / (2 * lam1**2 * L**2))
            v2 = _rot(np.arccos(np.sqrt(Q))) @ v1
            D = np.diag([lam1, lam2])
    elif mode == "saddle-only":
        lo, hi = min(lam1, lam2), max(lam1, lam2)
        v2 = np.array([-v1[1], v1[0]])
        D = np.diag([lo, hi])
    else:
        raise ConfigError(f"unknown synthesis mode {mode!r}")
    V = np.column_stack([v1, v2])
    Atil = V @ D @ np.linalg.inv(V)
    return np.linalg.solve(B, A - Atil)


# ---------------------------------------------------------------------------
# ellipse -> circle


@dataclass
class ReducedInstance:
    problem: ProblemInstance
    E: np.ndarray

    def to_original(self, x_hat):
        return np.linalg.solve(self.E, np.asarray(x_hat, float).T).T

    def to_reduced(self, x):
        return (self.E @ np.asarray(x, float).T).T


def ellipsoid_reduce(inst: ProblemInstance) -> ReducedInstance:
    """Change coordinates x^ = E x with E the SPD root of P so the ellipse
    (x - xc)^T P (x - xc) = 1 becomes the unit circle around E xc."""
    bar = inst.barrier
    if not isinstance(bar, QuadFormBarrier):
        raise ConfigError("ellipse reduction needs a quadratic-form barrier")
    if not (inst.is_linear and inst.weight.is_constant):
        raise ConfigError("ellipse reduction needs a linear plant, linear controller and constant weight")
    E = spd_sqrt(bar.P)
    Einv = np.linalg.inv(E)
    A = np.asarray(inst.system.A)
    B = np.asarray(inst.system.B)
    Ah = E @ A @ Einv
    Bh = E @ B
    ctrl = inst.controller
    Kh = ctrl.K @ Einv
    new_ctrl = ControllerDef.gain(Kh) if ctrl.kind == "linear-gain" else ControllerDef.feedback(Kh)
    prob = ProblemInstance(SystemDef.linear(Ah, Bh), new_ctrl, SphereBarrier(E @ bar.center, 1.0, bar.sign),
                           inst.weight, inst.alpha, inst.origin_interior, inst.name + "/reduced")
    return ReducedInstance(prob, E)


# ---------------------------------------------------------------------------
# polar safe sets


@dataclass
class PolarCheck:
    verdict: str
    candidates: list
    scan_undesired: int
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "candidates": self.candidates,
                "scan_undesired": self.scan_undesired, "notes": list(self.notes)}


def polar_other_eigenvalue(theta, r_fn, beta, gamma, b) -> float:
    r, r1, _ = r_fn(np.asarray(theta, float))
    b1, b2 = b
    if abs(gamma) > 1e-12:
        return float(r * (beta**2 + gamma**2) / (r * (b1 * gamma + b2 * beta) - r1 * (-b1 * beta + b2 * gamma)))
    return float(beta * r / (r1 * b1 + r * b2))


def polar_safe_set_check(inst: ProblemInstance, scan_cfg=None) -> PolarCheck:
    """Boundary candidates of a star-shaped safe set with one input.

    Potential equilibria sit at the two angles with gamma sin = beta cos; the
    filter is active at neither when the barrier is strict, and the boundary
    scan must agree.
    """
    bar = inst.barrier
    if not isinstance(bar, PolarBarrier) or inst.m != 1 or not inst.is_linear:
        raise ConfigError("polar check needs a polar-radius barrier and a single-input linear instance")
    A = np.asarray(inst.system.A)
    b = np.asarray(inst.system.B).reshape(2)
    beta = A[0, 0] * b[1] - b[0] * A[1, 0]
    gamma = A[1, 1] * b[0] - b[1] * A[0, 1]
    if beta**2 + gamma**2 == 0:
        raise ConfigError("beta = gamma = 0 (not stabilizable)")
    th1 = float(np.arctan2(beta, gamma))
    cands = []
    for th in (th1, th1 + np.pi):
        rad = float(bar.radius(th)[0])
        x = rad * np.array([np.cos(th), np.sin(th)])
        T = filter_terms(inst, x[None])
        eta = float(T.eta[0])
        delta = float(T.grad[0] @ T.f_tilde[0] / T.denom[0])
        oe = polar_other_eigenvalue(th, bar.radius, beta, gamma, b)
        cands.append({"theta": th, "point": x.tolist(), "eta": eta, "delta": delta,
                      "other_eigenvalue": oe})
    active = [c for c in cands if c["eta"] < 0]
    S = find_undesired_equilibria(inst, scan_cfg, with_jacobians=False)
    notes = []
    if np.sign(cands[0]["other_eigenvalue"]) != np.sign(cands[1]["other_eigenvalue"]):
        notes.append("candidates have different stability signs")
    if len(S.actual) != len(active):
        raise ConsistencyError(f"polar candidates ({len(active)} active) disagree with the boundary "
                               f"scan ({len(S.actual)} undesired equilibria)")
    verdict = "no-undesired-equilibria" if not active else "premise-violated"
    if active:
        notes.append("filter active at a candidate: the barrier is not strict for this instance")
    return PolarCheck(verdict, cands, len(S.actual), notes)


def polar_strict_margin(inst: ProblemInstance, N: int = 4000) -> float:
    """min of grad h^T f over boundary points where g^T grad h changes sign
    (positive means the CBF condition holds strictly where the input has no authority)."""
    curve = inst.barrier.boundary_curves()[0]
    t = curve.grid(N)
    X = curve(t)
    T = filter_terms(inst, X)
    lg = T.Lg[:, 0]
    idx = np.nonzero(np.sign(lg) != np.sign(np.roll(lg, -1)))[0]
    if len(idx) == 0:
        return np.inf
    drift = np.einsum("ki,ki->k", T.grad, inst.system.f(X))
    return float(np.min(np.minimum(drift[idx], drift[(idx + 1) % N])))


# ---------------------------------------------------------------------------
# union-of-circles example: sufficient conditions


def union_circles_conditions(A, B, c1: float, c2: float, r1: float, alpha0: float) -> dict:
    """Strict-CBF, active-filter and stability conditions for the tube obstacle
    around a lower half circle, plus the predicted trap point."""
    A = np.asarray(A, float)
    b1, b2 = np.asarray(B, float).reshape(2)
    beta = A[0, 0] * b2 - b1 * A[1, 0]
    gamma = A[1, 1] * b1 - b2 * A[0, 1]
    nb = np.hypot(b1, b2)
    T1 = b2 * beta + b1 * gamma + 0.5 * alpha0 * (b1 * b1 + b2 * b2)
    sg = np.sign(b1)
    r_in, R = c1 - r1, c1 + r1
    feas = {
        "T1_positive": bool(T1 > 0 and nb > 0),
        "cap_left": bool(r1 / nb > (sg * (-gamma * c2 - beta * c1)
                                    + np.sqrt((gamma * c2 + beta * c1) ** 2 + 2 * alpha0 * r1**2 * T1)) / (2 * T1)),
        "inner_arc": bool(-r_in / nb > (sg * (-gamma * c2) - np.sqrt(gamma**2 * c2**2 + 2 * alpha0 * r_in**2 * T1)) / (2 * T1)),
        "cap_right": bool(r1 / nb > (sg * (-gamma * c2 + beta * c1)
                                     + np.sqrt((-gamma * c2 + beta * c1) ** 2 + 2 * alpha0 * r1**2 * T1)) / (2 * T1)),
        "outer_arc": bool(-R / nb < (sg * (-gamma * c2) - np.sqrt(gamma**2 * c2**2 + 2 * alpha0 * R**2 * T1)) / (2 * T1)),
    }
    disc = r_in**2 * (gamma**2 + beta**2) - gamma**2 * c2**2
    out = {"beta": float(beta), "gamma": float(gamma), "T1": float(T1), "feasibility": feas,
           "discriminant": float(disc)}
    if disc < 0:
        out.update(point=None, active_filter=False, stable=False)
        return out
    q = gamma**2 + beta**2
    z = (beta * c2 + np.sqrt(disc)) / q
    x = np.array([gamma * z, beta * z])
    out["point"] = x.tolist()
    out["active_filter"] = bool(z * (b1 * gamma * z + b2 * (beta * z - c2)) > 0)
    out["stable"] = bool((-gamma * c2) * (gamma * b2 - beta * b1) + (gamma * b1 + beta * b2) * np.sqrt(disc) < 0)
    xc = np.array([0.0, c2])
    J = underactuated_jacobian(A, [b1, b2], x - xc, alpha0)
    out["jacobian"] = J.tolist()
    out["jacobian_eigenvalues"] = [complex(v) for v in np.linalg.eigvals(J)]
    return out


# ---------------------------------------------------------------------------
# seeded samplers


def random_stabilizing_gain(A, B, rng, scale: float = 3.0, margin: float = 0.05,
                            max_tries: int = 100000) -> np.ndarray:
    """Rejection-sample K (u = -K x) with every eigenvalue of A - B K left of -margin."""
    A = np.asarray(A, float)
    B = np.asarray(B, float).reshape(A.shape[0], -1)
    for _ in range(max_tries):
        K = scale * rng.standard_normal((B.shape[1], A.shape[0]))
        if np.linalg.eigvals(A - B @ K).real.max() < -margin:
            return K
    raise NumericalError("no stabilizing gain found by sampling")


def random_underactuated_circle(rng, alpha: float = 1.0, max_tries: int = 10000) -> PlanarLinearInstance:
    """Single-input plant, disk obstacle away from the origin, strict-CBF condition
    satisfied and a Hurwitz closed loop."""
    from scipy.signal import place_poles
    for _ in range(max_tries):
        A = rng.uniform(-2, 2, (2, 2))
        b = rng.uniform(-2, 2, (2, 1))
        ang = rng.uniform(0, 2 * np.pi)
        xc = rng.uniform(2, 5) * np.array([np.cos(ang), np.sin(ang)])
        r = rng.uniform(0.3, 1.5)
        if abs(np.linalg.det(np.column_stack([b[:, 0], A @ b[:, 0]]))) < 0.1:
            continue
        ok, d = check_strict_cbf_circle_underactuated(A, b, alpha, xc, r)
        if not ok or abs(d["gamma"] * xc[0] + d["beta"] * xc[1]) < 1e-3:
            continue
        poles = -np.sort(rng.uniform(0.5, 4.0, 2))
        if abs(poles[0] - poles[1]) < 1e-2:
            continue
        K = place_poles(A, b, poles).gain_matrix
        return PlanarLinearInstance(A, b, K, xc, r, alpha)
    raise NumericalError("could not sample an admissible underactuated instance")


def random_polar_instance(shape: str, params: dict, rng, alpha: float = 1.0,
                          max_tries: int = 10000) -> ProblemInstance:
    """Single-input linear plant with a stabilizing gain for which the polar barrier
    is strict (positive drift margin where the input loses authority)."""
    bar = PolarBarrier(shape, params)
    for _ in range(max_tries):
        A = rng.uniform(-2, 2, (2, 2))
        b = rng.uniform(-2, 2, (2, 1))
        if abs(np.linalg.det(np.column_stack([b[:, 0], A @ b[:, 0]]))) < 0.1:
            continue
        try:
            K = random_stabilizing_gain(A, b, rng, scale=3.0, margin=0.05, max_tries=200)
        except NumericalError:
            continue
        inst = ProblemInstance(SystemDef.linear(A, b), ControllerDef.gain(K), bar,
                               WeightSpec.identity(1), ClassKInf.linear(alpha), True, f"polar-{shape}")
        if polar_strict_margin(inst) > 1e-6:
            return inst
    raise NumericalError("could not sample a strict polar instance")
