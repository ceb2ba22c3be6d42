"""Undesired equilibria of the filtered closed loop.

An undesired equilibrium x* sits on the boundary {h = 0} with the filter
active and f~(x*) = delta * g G^{-1} g^T grad h(x*) for a scalar delta < 0.
Points solving the same alignment with delta > 0 are kept as "potential-only".
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar, root

from .barriers import SphereBarrier
from .boundary import trace_level_set
from .errors import ConfigError, DegenerateConstraintError, UnsupportedDimensionError
from .model import ProblemInstance
from .safety import DEGENERATE_TOL, closed_loop_batch, filter_terms

HYPERBOLIC_TOL = 1e-8
DELTA_TOL = 1e-12

SADDLE = "saddle"
STABLE = "asymptotically-stable"
DEGENERATE = "degenerate"
POTENTIAL = "potential-only"


@dataclass
class EquilibriumRecord:
    point: np.ndarray
    delta: float
    residual: float
    jacobian: Optional[np.ndarray] = None
    eigenvalues: Optional[np.ndarray] = None
    classification: Optional[str] = None
    provenance: str = "boundary-scan"
    jacobian_method: Optional[str] = None
    notes: list = field(default_factory=list)

    @property
    def is_actual(self) -> bool:
        return self.delta < 0

    def to_dict(self) -> dict:
        d = {
            "point": [float(v) for v in self.point],
            "delta": float(self.delta),
            "residual": float(self.residual),
            "classification": self.classification,
            "provenance": self.provenance,
        }
        if self.eigenvalues is not None:
            d["eigenvalues"] = [[float(z.real), float(z.imag)] for z in self.eigenvalues]
            d["jacobian"] = np.asarray(self.jacobian).tolist()
            d["jacobian_method"] = self.jacobian_method
        if self.notes:
            d["notes"] = list(self.notes)
        return d


@dataclass
class ContinuumDiagnosis:
    start: np.ndarray
    end: np.ndarray
    count: int
    delta_range: tuple
    component: int

    def to_dict(self) -> dict:
        return {"kind": "continuum", "start": [float(v) for v in self.start],
                "end": [float(v) for v in self.end], "roots": self.count,
                "delta_range": [float(v) for v in self.delta_range], "component": self.component}


@dataclass
class ScanConfig:
    grid: int = 2000
    newton_tol: float = 1e-10
    dedup: float = 1e-6
    window: Optional[tuple] = None
    trace_step: Optional[float] = None
    continuum_min: int = 25
    sphere_grid: tuple = (90, 180)

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "ScanConfig":
        d = dict(d or {})
        if "window" in d and d["window"] is not None:
            d["window"] = tuple(float(v) for v in d["window"])
        if "sphere_grid" in d:
            d["sphere_grid"] = tuple(int(v) for v in d["sphere_grid"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"scan: {exc}") from None


@dataclass
class EquilibriumSet:
    actual: List[EquilibriumRecord]
    potential: List[EquilibriumRecord]
    continua: List[ContinuumDiagnosis] = field(default_factory=list)
    notes: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.actual + self.potential)

    def __len__(self):
        return len(self.actual) + len(self.potential)

    def to_dict(self) -> dict:
        return {"undesired": [r.to_dict() for r in self.actual],
                "potential_only": [r.to_dict() for r in self.potential],
                "continua": [c.to_dict() for c in self.continua],
                "notes": list(self.notes)}


# ---------------------------------------------------------------------------


def indicator(inst: ProblemInstance, x) -> float:
    """grad h^T f~ / |g^T grad h|^2_{G^{-1}} at a boundary point."""
    x = np.asarray(x, float)
    T = filter_terms(inst, x[None])
    if abs(T.h[0]) > 1e-6:
        raise ConfigError(f"indicator needs a boundary point (h = {T.h[0]:.3e})")
    if np.linalg.norm(T.Lg[0]) < DEGENERATE_TOL:
        raise DegenerateConstraintError(x)
    return float(T.grad[0] @ T.f_tilde[0] / T.denom[0])


def _alignment_dir(inst: ProblemInstance, T) -> np.ndarray:
    # for a single input the filtered direction is +-g itself; using g avoids the
    # spurious sign flips of g G^{-1} g^T grad h where g^T grad h crosses zero
    if inst.m == 1:
        return T.g[:, :, 0]
    return T.direction


def alignment_residual(inst: ProblemInstance, X) -> tuple:
    """Planar cross product of f~ with the filter direction, plus a scale for it."""
    X = np.atleast_2d(np.asarray(X, float))
    T = filter_terms(inst, X)
    d = _alignment_dir(inst, T)
    f = T.f_tilde
    rho = f[:, 0] * d[:, 1] - f[:, 1] * d[:, 0]
    scale = np.linalg.norm(f, axis=1) * np.linalg.norm(d, axis=1)
    return rho, scale


def _curve_roots(inst, curve, N):
    t = curve.grid(N)
    X = np.asarray(curve(t))
    rho, scale = alignment_residual(inst, X)
    tiny = 1e-300
    rel = rho / (scale + tiny)
    fun = lambda s: float(alignment_residual(inst, np.asarray(curve(np.array([s]))))[0][0])
    roots = []
    zero = np.abs(rel) <= 1e-12
    roots.extend(t[zero].tolist())
    idx = list(range(N - 1))
    tt = list(t)
    if curve.closed:
        idx.append(N - 1)
        tt = tt + [curve.t1]
    span = abs(curve.t1 - curve.t0)
    for i in idx:
        j = i + 1 if i + 1 < N else 0
        if zero[i] or zero[j]:
            continue
        if rel[i] * rel[j] < 0:
            a, b = tt[i], tt[i + 1]
            roots.append(brentq(fun, a, b, xtol=1e-15 * max(1.0, span), rtol=4 * np.finfo(float).eps, maxiter=200))
    # tangential (even multiplicity) zeros leave no sign change
    a_rel = np.abs(rel)
    for i in range(1, N - 1):
        if zero[i] or not (a_rel[i] <= a_rel[i - 1] and a_rel[i] <= a_rel[i + 1]) or a_rel[i] > 1e-3:
            continue
        if rel[i - 1] * rel[i] < 0 or rel[i] * rel[i + 1] < 0:
            continue
        res = minimize_scalar(lambda s: abs(fun(s)), bounds=(t[i - 1], t[i + 1]), method="bounded",
                              options={"xatol": 1e-14 * max(1.0, span)})
        x = np.asarray(curve(np.array([res.x])))
        r, sc = alignment_residual(inst, x)
        if abs(r[0]) <= 1e-9 * (sc[0] + tiny):
            roots.append(float(res.x))
    roots = np.unique(np.array(roots, dtype=float))
    spacing = float(np.median(np.linalg.norm(np.diff(X, axis=0), axis=1))) if N > 1 else 0.0
    return roots, spacing


def _make_record(inst: ProblemInstance, x: np.ndarray, provenance: str) -> Optional[EquilibriumRecord]:
    T = filter_terms(inst, x[None])
    if np.linalg.norm(T.Lg[0]) < DEGENERATE_TOL or T.denom[0] <= 0:
        return None
    delta = float(T.grad[0] @ T.f_tilde[0] / T.denom[0])
    if abs(delta) <= DELTA_TOL:
        return None
    res = float(np.max(np.abs(closed_loop_batch(inst, x[None])[0])))
    rec = EquilibriumRecord(point=x.copy(), delta=delta, residual=res, provenance=provenance)
    if delta > 0:
        rec.classification = POTENTIAL
    return rec


def _dedup(points: list, tol: float) -> list:
    out = []
    for p in points:
        if all(np.linalg.norm(p - q) >= tol for q in out):
            out.append(p)
    return out


def _continuum_end(inst, curve, s_in: float, step: float) -> float:
    """Bisect for the end of a run of exact alignment starting at s_in, moving by step."""
    def aligned(s):
        r, sc = alignment_residual(inst, np.asarray(curve(np.array([s]))))
        return abs(r[0]) <= 1e-12 * (sc[0] + 1e-300)

    lo_t, hi_t = min(curve.t0, curve.t1), max(curve.t0, curve.t1)
    a, b = s_in, min(max(s_in + step, lo_t), hi_t)
    if aligned(b):
        return b
    for _ in range(60):
        mid = 0.5 * (a + b)
        if aligned(mid):
            a = mid
        else:
            b = mid
    return a


def _scan_planar(inst: ProblemInstance, cfg: ScanConfig):
    bar = inst.barrier
    window = cfg.window
    curves = bar.boundary_curves(window)
    notes = []
    if curves is None:
        win = window or bar.default_window()
        curves = trace_level_set(bar.value, bar.grad, win, N=cfg.grid, step=cfg.trace_step)
        notes.append(f"boundary traced: {len(curves)} component(s)")
    points, continua = [], []
    for ci, curve in enumerate(curves):
        ts, spacing = _curve_roots(inst, curve, cfg.grid)
        if len(ts) == 0:
            continue
        P = np.asarray(curve(ts)).reshape(-1, 2)
        # group runs of closely spaced roots
        groups, cur = [], [0]
        for k in range(1, len(P)):
            if np.linalg.norm(P[k] - P[k - 1]) <= 2.0 * spacing * 1.0001:
                cur.append(k)
            else:
                groups.append(cur)
                cur = [k]
        groups.append(cur)
        for grp in groups:
            if len(grp) > cfg.continuum_min:
                step = abs(curve.t1 - curve.t0) / max(cfg.grid - 1, 1)
                s0 = _continuum_end(inst, curve, ts[grp[0]], -step)
                s1 = _continuum_end(inst, curve, ts[grp[-1]], step)
                ends = np.asarray(curve(np.array([s0, s1]))).reshape(2, 2)
                T = filter_terms(inst, np.vstack([ends[:1], P[grp], ends[1:]]))
                deltas = np.einsum("ki,ki->k", T.grad, T.f_tilde) / T.denom
                continua.append(ContinuumDiagnosis(ends[0].copy(), ends[1].copy(), len(grp),
                                                   (float(deltas.min()), float(deltas.max())), ci))
            else:
                points.extend(P[k].copy() for k in grp)
    return _dedup(points, cfg.dedup), continua, notes


def _scan_sphere3(inst: ProblemInstance, cfg: ScanConfig):
    bar = inst.barrier
    c, r = bar.center, bar.radius
    nt, npf = cfg.sphere_grid
    th = (np.arange(nt) + 0.5) * np.pi / nt
    ph = np.arange(npf) * 2 * np.pi / npf
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    U = np.stack([np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH), np.cos(TH)], -1).reshape(-1, 3)
    X = c + r * U
    T = filter_terms(inst, X)
    d = T.direction
    dn = d / np.linalg.norm(d, axis=1, keepdims=True)
    f = T.f_tilde
    perp = f - np.sum(f * dn, 1, keepdims=True) * dn
    val = (np.linalg.norm(perp, axis=1) / (np.linalg.norm(f, axis=1) + 1e-300)).reshape(nt, npf)
    cands = []
    for i in range(nt):
        for j in range(npf):
            v = val[i, j]
            nb = [val[ii, (j + b) % npf] for ii in (i - 1, i, i + 1) if 0 <= ii < nt for b in (-1, 0, 1)]
            if v <= min(nb) and v < 0.5:
                cands.append(X[i * npf + j])

    def F(z):
        x, dl = z[:3], z[3]
        Tz = filter_terms(inst, x[None])
        return np.concatenate([Tz.f_tilde[0] - dl * Tz.direction[0], [Tz.h[0]]])

    points = []
    for x0 in cands:
        T0 = filter_terms(inst, x0[None])
        d0 = float(T0.grad[0] @ T0.f_tilde[0] / T0.denom[0])
        sol = root(F, np.concatenate([x0, [d0]]), method="hybr", options={"xtol": 1e-14})
        if sol.success and np.max(np.abs(F(sol.x))) < cfg.newton_tol:
            points.append(sol.x[:3])
    return _dedup(points, cfg.dedup), [], [f"sphere scan: {len(cands)} local minima polished"]


def find_undesired_equilibria(inst: ProblemInstance, cfg: Optional[ScanConfig] = None,
                              with_jacobians: bool = True) -> EquilibriumSet:
    """Locate all boundary points where f~ aligns with the filter direction.

    Planar problems are scanned along explicit or traced boundary
    parametrizations: sign changes of the alignment residual are bracketed on a
    grid of ``cfg.grid`` points per component and refined with Brent's method;
    tangential zeros are caught by bounded minimization.  Three-dimensional
    spheres are scanned on an angular grid and polished with a Newton-type
    solver.  Long runs of closely spaced roots become continuum diagnoses.
    """
    cfg = cfg or ScanConfig()
    if inst.n == 2:
        points, continua, notes = _scan_planar(inst, cfg)
    elif inst.n == 3 and isinstance(inst.barrier, SphereBarrier):
        points, continua, notes = _scan_sphere3(inst, cfg)
    else:
        raise UnsupportedDimensionError(
            f"boundary scan supports n=2, or n=3 with a sphere barrier (got n={inst.n}, "
            f"barrier {inst.barrier.family})")
    actual, potential = [], []
    for p in points:
        rec = _make_record(inst, p, "boundary-scan")
        if rec is None:
            continue
        if rec.delta < 0:
            if with_jacobians:
                attach_jacobian(inst, rec)
            actual.append(rec)
        else:
            potential.append(rec)
    return EquilibriumSet(actual, potential, continua, notes)


# ---------------------------------------------------------------------------
# Jacobians


def sphere_formula_applies(inst: ProblemInstance) -> bool:
    bar = inst.barrier
    if not (inst.is_linear and isinstance(bar, SphereBarrier) and bar.sign == 1):
        return False
    B = np.asarray(inst.system.B)
    if B.shape[0] != B.shape[1] or abs(np.linalg.det(B)) < 1e-12:
        return False
    if not inst.weight.is_constant:
        return False
    G = inst.weight.matrix(None)
    BtB = B.T @ B
    return bool(np.allclose(G, BtB, rtol=1e-10, atol=1e-12 * np.abs(BtB).max()))


def jacobian_sphere_formula(Atil, xc, x, delta, alpha0) -> np.ndarray:
    """Jacobian at an undesired equilibrium for a ball obstacle with G = B^T B."""
    n = len(x)
    d = np.asarray(x, float) - np.asarray(xc, float)
    I = np.eye(n)
    return Atil - 2 * delta * I - np.outer(d, d) / (d @ d) @ (Atil - (2 * delta - alpha0) * I)


def jacobian_projected(inst: ProblemInstance, x, delta) -> np.ndarray:
    """Active-branch Jacobian for a linear plant with constant weight.

    With M = B G^{-1} B^T, n = grad h, s = n^T M n and Hessian H:
    J = (I - M n n^T / s)(A~ - delta M H) - alpha'(h) M n n^T / s.
    """
    At = inst.closed_loop_matrix
    M = inst.input_metric()
    x = np.asarray(x, float)
    nv = inst.barrier.grad(x)
    H = inst.barrier.hess(x)
    s = nv @ M @ nv
    P = np.outer(M @ nv, nv) / s
    a1 = float(inst.alpha.derivative(float(inst.barrier.value(x))))
    return (np.eye(inst.n) - P) @ (At - delta * M @ H) - a1 * P


def _active_field(inst, X):
    T = filter_terms(inst, X)
    w = T.direction
    return T.f_tilde - (T.eta / T.denom)[:, None] * w, T.eta


def jacobian_fd(inst: ProblemInstance, x, step: Optional[float] = None):
    """Central differences of the active-branch field; shrinks the stencil until
    every stencil point has eta < 0."""
    x = np.asarray(x, float)
    n = inst.n
    hstep = step or 1e-6 * (1.0 + np.linalg.norm(x))
    warn = []
    for _ in range(12):
        S = np.concatenate([x + hstep * np.eye(n), x - hstep * np.eye(n)])
        F, eta = _active_field(inst, S)
        if np.all(eta < 0):
            break
        hstep *= 0.5
    else:
        warn.append("branch ambiguity: finite-difference stencil touches eta >= 0")
        warnings.warn(warn[-1])
    J = (F[:n] - F[n:]).T / (2 * hstep)
    return J, warn


def jacobian_at(inst: ProblemInstance, record: EquilibriumRecord):
    """Returns (J, method, warnings)."""
    if not record.delta < 0:
        raise ConfigError("Jacobian requested for a record with delta >= 0")
    if sphere_formula_applies(inst):
        J = jacobian_sphere_formula(inst.closed_loop_matrix, inst.barrier.center, record.point,
                                    record.delta, inst.alpha.slope0)
        return J, "sphere-formula", []
    if inst.is_linear and inst.weight.is_constant:
        return jacobian_projected(inst, record.point, record.delta), "projected-analytic", []
    J, warn = jacobian_fd(inst, record.point)
    return J, "finite-difference", warn


def classify_eigenvalues(eigs, tol: float = HYPERBOLIC_TOL) -> str:
    re = np.real(np.asarray(eigs))
    if np.any(np.abs(re) <= tol):
        return DEGENERATE
    if np.all(re < -tol):
        return STABLE
    return SADDLE


def classify(record: EquilibriumRecord) -> str:
    if record.delta > 0:
        return POTENTIAL
    if record.eigenvalues is None:
        raise ConfigError("classification needs eigenvalues")
    return classify_eigenvalues(record.eigenvalues)


def attach_jacobian(inst: ProblemInstance, record: EquilibriumRecord) -> EquilibriumRecord:
    J, method, warn = jacobian_at(inst, record)
    record.jacobian = J
    record.jacobian_method = method
    record.eigenvalues = np.linalg.eigvals(J)
    record.classification = classify(record)
    record.notes.extend(warn)
    return record


def isolated_check(record: EquilibriumRecord) -> bool:
    if record.eigenvalues is None:
        raise ConfigError("isolation check needs eigenvalues")
    return bool(np.all(np.abs(np.real(record.eigenvalues)) > HYPERBOLIC_TOL))


# ---------------------------------------------------------------------------
# counting


class StructureInapplicable(ConfigError):
    pass


@dataclass
class StructureReport:
    topology: str
    count: int
    saddles: int
    stable: int
    passed: bool
    expected: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_count_structure(records, topology: str) -> StructureReport:
    """Parity and saddle-count check: bounded obstacle -> k odd with (k+1)/2
    saddles; compact safe set -> k even with k/2 saddles."""
    recs = [r for r in records if r.delta < 0]
    if any(r.classification == DEGENERATE or (r.eigenvalues is not None and not isolated_check(r))
           for r in recs):
        raise StructureInapplicable("structure check needs hyperbolic equilibria")
    k = len(recs)
    saddles = sum(r.classification == SADDLE for r in recs)
    stable = sum(r.classification == STABLE for r in recs)
    if topology == "bounded-obstacle":
        ok = k % 2 == 1 and saddles == (k + 1) // 2
        exp = "k odd, (k+1)/2 saddles"
    elif topology == "compact-safe-set":
        ok = k % 2 == 0 and saddles == k // 2
        exp = "k even, k/2 saddles"
    else:
        raise ConfigError(f"unknown topology {topology!r}")
    return StructureReport(topology, k, saddles, stable, bool(ok), exp)
