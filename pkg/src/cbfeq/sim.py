"""Trajectory integration, boundedness tuning, unboundedness certificates and
limit-cycle verification/detection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import cholesky, null_space, solve_continuous_lyapunov, solve_triangular

from . import kernels
from .barriers import safe_set_topology
from .boundary import trace_level_set
from .errors import ConfigError, DegenerateConstraintError, NumericalError
from .model import ProblemInstance, is_hurwitz
from .safety import DEGENERATE_TOL, filter_terms

TOL_INVARIANCE = 1e-6


@dataclass(frozen=True)
class IntegratorCfg:
    dt: float = 1e-3
    T: float = 50.0
    eps_c: float = 1e-4
    rmax: float = 1e4
    eps_r: float = 1e-3
    record_dt: float = 1e-2   # spacing of stored samples; the integrator still steps at dt

    def __post_init__(self):
        if not (self.dt > 0 and self.T > self.dt):
            raise ConfigError("integrator needs dt > 0 and T > dt")
        if not (self.eps_c > 0 and self.rmax > 0 and self.eps_r > 0 and self.record_dt > 0):
            raise ConfigError("integrator tolerances must be positive")

    @property
    def nsteps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def stride(self) -> int:
        return max(1, int(round(self.record_dt / self.dt)))

    def replace(self, **kw) -> "IntegratorCfg":
        d = dict(self.__dict__)
        d.update(kw)
        return IntegratorCfg(**d)


@dataclass
class Verdict:
    kind: str                       # converged-to | diverged | cycling | undetermined
    point: Optional[np.ndarray] = None
    index: Optional[int] = None     # index into the equilibria list, None for the origin
    radius: Optional[float] = None
    period: Optional[float] = None

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "converged-to":
            d["point"] = [float(v) for v in self.point]
            d["target"] = "origin" if self.index is None else int(self.index)
        elif self.kind == "diverged":
            d["escape_radius"] = self.radius
        elif self.kind == "cycling":
            d["period"] = self.period
        return d


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    h: np.ndarray
    eta: np.ndarray
    u_norm: np.ndarray
    verdict: Verdict
    min_h: float
    dt: float = 1e-3

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def summary(self) -> dict:
        return {"x0": self.states[0].tolist(), "final": self.final.tolist(),
                "t_end": float(self.t[-1]), "min_h": self.min_h, "verdict": self.verdict.to_dict()}


# ---------------------------------------------------------------------------
# fields


def uses_kernel(inst: ProblemInstance) -> bool:
    return (inst.is_linear and inst.alpha.kind == "linear" and inst.weight.is_constant
            and getattr(inst.barrier, "kernel_code", 0) > 0 and inst.n <= 8 and inst.m <= 8)


def _kernel_args(inst: ProblemInstance):
    Ginv = np.linalg.inv(inst.weight.matrix(None))
    return (np.ascontiguousarray(inst.closed_loop_matrix), np.ascontiguousarray(inst.system.B, float),
            np.ascontiguousarray(Ginv), inst.alpha.slope0, inst.barrier.kernel_code,
            np.ascontiguousarray(inst.barrier.kernel_params()))


def _masked_terms(inst, X):
    T = filter_terms(inst, X)
    active = T.eta < 0
    bad = active & (np.sqrt(np.sum(T.Lg * T.Lg, 1)) < DEGENERATE_TOL)
    U = np.zeros_like(T.Lg)
    ok = active & ~bad
    if np.any(ok):
        U[ok] = -(T.eta[ok] / T.denom[ok])[:, None] * T.GinvLg[ok]
    return T, U, bad


def _linear_field(inst: ProblemInstance):
    """Lean batch field for a linear plant with constant weight and any barrier/alpha."""
    At = inst.closed_loop_matrix
    B = np.asarray(inst.system.B, float)
    Ginv = np.linalg.inv(inst.weight.matrix(None))
    bar, alpha = inst.barrier, inst.alpha

    def field(X):
        h, gr = bar._value(X), bar._grad(X)
        ft = X @ At.T
        Lg = gr @ B
        w = Lg @ Ginv.T
        eta = np.einsum("ki,ki->k", gr, ft) + alpha(h)
        active = eta < 0
        if not np.any(active):
            return ft, np.zeros(len(X), dtype=bool)
        bad = active & (np.sqrt(np.einsum("kj,kj->k", Lg, Lg)) < DEGENERATE_TOL)
        ok = active & ~bad
        ft[ok] -= (eta[ok] / np.einsum("kj,kj->k", Lg[ok], w[ok]))[:, None] * (w[ok] @ B.T)
        return ft, bad

    return field


def masked_field(inst: ProblemInstance, X):
    """Filtered field on a batch plus the mask of degenerate rows (no exception)."""
    T, U, bad = _masked_terms(inst, np.atleast_2d(np.asarray(X, float)))
    return T.f_tilde + np.einsum("kij,kj->ki", T.g, U), bad


# ---------------------------------------------------------------------------
# integration


def _targets(inst, equilibria, eps_c=1e-4):
    pts = [np.zeros(inst.n)]
    if equilibria is None:
        equilibria = default_equilibria(inst, eps_c)
    for e in equilibria:
        pts.append(np.asarray(getattr(e, "point", e), float))
    return np.array(pts)


def default_equilibria(inst: ProblemInstance, eps_c: float = 1e-4) -> list:
    """Undesired equilibria found by the boundary scan (empty when unsupported).

    A continuum is represented by points along its segment spaced 5*eps_c apart,
    so runs that settle on it can be reported as converged."""
    from .equilibria import find_undesired_equilibria
    try:
        S = find_undesired_equilibria(inst, with_jacobians=False)
    except (ConfigError, NumericalError):
        return []
    pts = [r.point for r in S.actual]
    for c in S.continua:
        L = float(np.linalg.norm(c.end - c.start))
        k = max(2, int(math.ceil(L / (5 * eps_c))) + 1)
        pts.extend(c.start + np.linspace(0, 1, k)[:, None] * (c.end - c.start))
    return pts


def integrate_batch(inst: ProblemInstance, X0, cfg: IntegratorCfg = IntegratorCfg(),
                    equilibria: Optional[Sequence] = None, detect_cycles: bool = True) -> list:
    """RK4 runs from every row of X0; results in the row order of X0."""
    X0 = np.atleast_2d(np.asarray(X0, float))
    if X0.shape[1] != inst.n or not np.all(np.isfinite(X0)):
        raise ConfigError("initial conditions must be finite n-vectors")
    targets = _targets(inst, equilibria, cfg.eps_c)
    nsteps, stride = cfg.nsteps, cfg.stride
    if uses_kernel(inst):
        At, B, Ginv, slope, code, params = _kernel_args(inst)
        states, stop, status, target = kernels.rk4_linear_batch(
            At, B, Ginv, slope, code, params, X0, cfg.dt, nsteps, stride, cfg.rmax, targets, cfg.eps_c)
    else:
        fld = _linear_field(inst) if inst.is_linear and inst.weight.is_constant else \
            (lambda X: masked_field(inst, X))
        states, stop, status, target = kernels.rk4_batch(
            fld, X0, cfg.dt, nsteps, stride, cfg.rmax, targets, cfg.eps_c)
    deg = np.nonzero(status == kernels.STATUS_DEGENERATE)[0]
    if len(deg):
        i = int(deg[0])
        x = states[i, -1]
        t = float(stop[i] * cfg.dt)
        err = DegenerateConstraintError(x, f"degenerate filter constraint at t={t:.6g}, "
                                           f"x={list(map(float, x))} (trajectory {i})")
        err.t = t
        raise err
    out = []
    for i in range(X0.shape[0]):
        out.append(_assemble(inst, cfg, states[i], int(stop[i]), int(status[i]), int(target[i]),
                             targets, equilibria, detect_cycles))
    return out


def _assemble(inst, cfg, rec, stop, status, target, targets, equilibria, detect_cycles):
    stride, dt = cfg.stride, cfg.dt
    nrec = stop // stride + 1
    X = rec[:nrec]
    t = np.arange(nrec) * stride * dt
    if stop % stride and stop < cfg.nsteps:
        X = np.vstack([X, rec[min(nrec, rec.shape[0] - 1)]])
        t = np.append(t, stop * dt)
    T, U, _ = _masked_terms(inst, X)
    unorm = np.sqrt(np.einsum("kj,kj->k", U, U))
    if status == kernels.STATUS_CONVERGED:
        v = Verdict("converged-to", point=targets[target].copy(), index=None if target == 0 else target - 1)
    elif status == kernels.STATUS_ESCAPED:
        v = Verdict("diverged", radius=cfg.rmax)
    else:
        v = Verdict("undetermined")
    traj = Trajectory(t, X, T.h, T.eta, unorm, v, float(T.h.min()), dt)
    if v.kind == "undetermined" and detect_cycles:
        cyc = detect_limit_cycle(traj, targets, cfg.eps_r)
        if cyc is not None:
            traj.verdict = Verdict("cycling", period=cyc.period)
    return traj


def integrate(inst: ProblemInstance, x0, cfg: IntegratorCfg = IntegratorCfg(),
              equilibria: Optional[Sequence] = None) -> Trajectory:
    return integrate_batch(inst, np.atleast_2d(np.asarray(x0, float)), cfg, equilibria)[0]


# ---------------------------------------------------------------------------
# boundedness


@dataclass
class BoundednessTuning:
    slope: float
    compact: bool
    level: Optional[float] = None       # c of Gamma = {x^T P x <= c}
    P: Optional[np.ndarray] = None
    grow_steps: int = 0
    min_eta: Optional[float] = None     # min of eta over the dGamma samples at the returned slope

    def in_region(self, X, rel: float = 1e-6) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.compact:
            raise ConfigError("region is the safe set itself")
        return np.einsum("ki,ij,kj->k", X, self.P, X) <= self.level * (1 + rel)

    def to_dict(self) -> dict:
        d = {"slope": self.slope, "compact": self.compact, "grow_steps": self.grow_steps}
        if not self.compact:
            d.update(level=self.level, P=self.P.tolist(), min_eta=self.min_eta)
        return d


def unit_directions(n: int, M: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors."""
    if n == 2:
        th = np.linspace(0, 2 * np.pi, M, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], 1)
    if n == 3:
        i = np.arange(M) + 0.5
        z = 1 - 2 * i / M
        phi = np.pi * (1 + 5**0.5) * i
        s = np.sqrt(1 - z * z)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], 1)
    U = np.random.default_rng(0).standard_normal((M, n))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def boundary_samples(barrier, N: int = 2000) -> np.ndarray:
    """Points on {h = 0} of a bounded-boundary barrier."""
    if barrier.n == 2:
        curves = barrier.boundary_curves()
        if curves is None:
            curves = trace_level_set(barrier.value, barrier.grad, barrier.default_window())
        return np.vstack([c.sample(N) for c in curves])
    if barrier.family == "sphere":
        return barrier.center + barrier.radius * unit_directions(barrier.n, N)
    raise ConfigError(f"no boundary sampler for {barrier.family!r} in R^{barrier.n}")


def tune_alpha_for_boundedness(inst: ProblemInstance, radius: float, M: int = 4000,
                               max_grow: int = 20) -> BoundednessTuning:
    """Slope of a linear alpha making a Lyapunov sublevel set containing the ball
    of the given radius forward invariant under the filter."""
    if not inst.is_linear:
        raise ConfigError("boundedness tuning needs a linear plant and controller")
    topo = safe_set_topology(inst.barrier)
    if topo == "unbounded-boundary":
        raise ConfigError("boundedness tuning needs a bounded unsafe-set boundary")
    At = inst.closed_loop_matrix
    if not is_hurwitz(At):
        raise ConfigError("closed-loop matrix is not Hurwitz")
    if topo == "compact-safe-set":
        return BoundednessTuning(inst.alpha.slope0, True)
    P = solve_continuous_lyapunov(At.T, -np.eye(inst.n))
    P = 0.5 * (P + P.T)
    obst = boundary_samples(inst.barrier)
    c = max(np.linalg.eigvalsh(P).max() * radius**2,
            float(np.einsum("ki,ij,kj->k", obst, P, obst).max())) * 1.05
    L = cholesky(P, lower=True)
    # x = sqrt(c) L^{-T} u has x^T P x = c
    W = solve_triangular(L, unit_directions(inst.n, M).T, lower=True, trans="T").T
    for grow in range(max_grow + 1):
        X = math.sqrt(c) * W
        h = inst.barrier.value(X)
        if np.all(h > 0):
            break
        c *= 1.5
    else:
        raise ConfigError("could not find a sublevel set whose boundary avoids the unsafe set")
    T = filter_terms(inst, X)
    drift = np.einsum("ki,ki->k", T.grad, T.f_tilde)
    a = 1.05 * max(0.0, float(np.max(-drift / h)))
    a = a if a > 0 else inst.alpha.slope0
    eta = drift + a * h
    return BoundednessTuning(a, False, c, P, grow, float(eta.min()))


# ---------------------------------------------------------------------------
# unboundedness


@dataclass
class UnboundednessCertificate:
    c: np.ndarray
    zeta1: float
    zeta2: float
    normal: np.ndarray
    offset: float
    residual: float

    def in_region(self, X) -> np.ndarray:
        """a^T x >= b and zeta1 c^T x + zeta2 b > 0."""
        X = np.atleast_2d(X)
        return (X @ self.normal >= self.offset) & (self.zeta1 * (X @ self.c) + self.zeta2 * self.offset > 0)

    def describe(self) -> str:
        return (f"{{x : a.x >= {self.offset:g}, {self.zeta1:g} c.x + {self.zeta2 * self.offset:g} > 0}}, "
                f"c = {np.round(self.c, 12).tolist()}")

    def to_dict(self) -> dict:
        return {"c": self.c.tolist(), "zeta1": self.zeta1, "zeta2": self.zeta2,
                "residual": self.residual, "region": self.describe()}


def unboundedness_certificate(A, B, normal, offset, tol: float = 1e-9) -> Optional[UnboundednessCertificate]:
    """Search null(B^T) for c with A^T c = z1 c + z2 a, z1 > 0, z2 >= 0.

    Along solutions inside the half plane, d/dt c^T x >= z1 c^T x + z2 b, so
    c^T x grows without bound from the returned region whatever the input.
    """
    A = np.atleast_2d(np.asarray(A, float))
    B = np.asarray(B, float).reshape(A.shape[0], -1)
    a = np.asarray(normal, float)
    N = null_space(B.T)
    for k in range(N.shape[1]):
        for c in (N[:, k], -N[:, k]):
            S = np.stack([c, a], 1)
            if np.linalg.matrix_rank(S, tol=1e-10) < 2:
                continue
            z, *_ = np.linalg.lstsq(S, A.T @ c, rcond=None)
            res = float(np.linalg.norm(S @ z - A.T @ c))
            if res <= tol and z[0] > 1e-12 and z[1] >= -1e-12:
                return UnboundednessCertificate(c.copy(), float(z[0]), float(z[1]), a.copy(), float(offset), res)
    return None


# ---------------------------------------------------------------------------
# periodic orbits


@dataclass(frozen=True)
class CircularOrbit:
    """x(t) = center + u sin(w t) + v cos(w t)."""

    center: np.ndarray
    u: np.ndarray
    v: np.ndarray
    omega: float

    @property
    def period(self) -> float:
        return 2 * np.pi / abs(self.omega)

    def __call__(self, t):
        t = np.asarray(t, float)[..., None]
        w = self.omega
        return self.center + self.u * np.sin(w * t) + self.v * np.cos(w * t)

    def derivative(self, t):
        t = np.asarray(t, float)[..., None]
        w = self.omega
        return w * (self.u * np.cos(w * t) - self.v * np.sin(w * t))

    def scaled(self, factor: float) -> "CircularOrbit":
        return CircularOrbit(self.center, self.u * factor, self.v * factor, self.omega)


def sphere_obstacle_cycle(decay: float, damping: float, rotation: float, offset: float,
                          radius: float = 1.0) -> CircularOrbit:
    """Boundary orbit of a 3-D linear system diag(-decay, [[-damping, rotation], [-rotation, -damping]])
    around the ball of the given radius centered at (offset, 0, 0), fully actuated filter.

    Exists when the shift offset*decay/(damping-decay) stays below the radius.
    """
    shift = offset * decay / (damping - decay)
    if not (damping > decay and abs(shift) < radius):
        raise ConfigError("no boundary cycle for these parameters")
    q = math.sqrt(radius**2 - shift**2)
    return CircularOrbit(np.array([offset + shift, 0.0, 0.0]), np.array([0.0, q, 0.0]),
                         np.array([0.0, 0.0, q]), float(rotation))


def verify_periodic_orbit(inst: ProblemInstance, orbit: Callable, period: float,
                          samples: int = 1000, derivative: Optional[Callable] = None) -> float:
    """max over samples of |orbit'(t) - field(orbit(t))|_inf."""
    from .safety import closed_loop_field
    t = np.linspace(0.0, period, samples, endpoint=False)
    X = np.atleast_2d(orbit(t))
    if X.shape[0] != samples:
        X = np.broadcast_to(X, (samples, inst.n))
    d = derivative or getattr(orbit, "derivative", None)
    if d is None:
        hstep = 1e-5 * max(period, 1.0)
        D = (np.atleast_2d(orbit(t + hstep)) - np.atleast_2d(orbit(t - hstep))) / (2 * hstep)
        D = np.broadcast_to(D, (samples, inst.n))
    else:
        D = np.broadcast_to(np.atleast_2d(d(t)), (samples, inst.n))
    F = closed_loop_field(inst, X)
    return float(np.max(np.abs(D - F)))


@dataclass
class CycleDescriptor:
    period: float
    t0: float
    samples: np.ndarray
    closure: float


def detect_limit_cycle(traj: Trajectory, equilibria=(), eps_r: float = 1e-3,
                       dt: Optional[float] = None) -> Optional[CycleDescriptor]:
    """Recurrence search on the stored samples after a 25% transient."""
    t, X = traj.t, traj.states
    N = len(t)
    if N < 20:
        return None
    dt = traj.dt if dt is None else dt
    E = np.atleast_2d(np.asarray([getattr(e, "point", e) for e in equilibria], float)) if len(equilibria) else None
    if E is not None and E.size:
        dmin = np.sqrt(((X[:, None, :] - E[None]) ** 2).sum(-1)).min(1)
        far = dmin > 5 * eps_r
    else:
        far = np.ones(N, dtype=bool)
    start = int(math.ceil(0.25 * N))
    for frac in (0.25, 0.4, 0.55, 0.7):
        i0 = max(start, int(frac * N))
        if i0 >= N - 2:
            break
        # distance from the anchor to each segment between stored samples, so the
        # test does not depend on the sample spacing
        P, Q = X[i0:-1], X[i0 + 1:]
        S = Q - P
        s2 = np.einsum("ki,ki->k", S, S)
        s = np.clip(np.einsum("ki,ki->k", X[i0] - P, S) / np.where(s2 > 0, s2, 1.0), 0.0, 1.0)
        D = np.linalg.norm(P + s[:, None] * S - X[i0], axis=1)
        Tseg = t[i0:-1] + s * (t[i0 + 1:] - t[i0:-1]) - t[i0]
        left = np.maximum.accumulate(np.linalg.norm(P - X[i0], axis=1)) >= 10 * eps_r
        okfar = np.logical_and.accumulate(far[i0:-1])
        cand = (D < eps_r) & left & okfar & (Tseg > 10 * dt)
        js = np.nonzero(cand)[0]
        if len(js) == 0:
            continue
        j = js[0]
        while j + 1 < len(D) and cand[j + 1] and D[j + 1] < D[j]:
            j += 1
        return CycleDescriptor(float(Tseg[j]), float(t[i0]), X[i0:i0 + j + 2].copy(), float(D[j]))
    return None


@dataclass
class CycleFreeTuning:
    slope: float
    doublings: int
    succeeded: bool
    cycles_at_last: int
    note: str = ("heuristic: absence of cycles is only checked on a finite set of initial "
                 "conditions; it falsifies, it does not certify")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def tune_alpha_no_limit_cycle(inst: ProblemInstance, X0, cfg: IntegratorCfg = IntegratorCfg(),
                              start: Optional[float] = None, cap: float = 2.0**20,
                              equilibria=None) -> CycleFreeTuning:
    """Double the slope of a linear alpha until no run from X0 cycles."""
    a = float(start if start is not None else inst.alpha.slope0)
    if equilibria is None:
        equilibria = default_equilibria(inst)
    k = 0
    from .model import ClassKInf
    while True:
        trial = inst.with_alpha(ClassKInf.linear(a))
        eqs = default_equilibria(trial) if k else equilibria
        trajs = integrate_batch(trial, X0, cfg, eqs)
        ncyc = sum(tr.verdict.kind == "cycling" for tr in trajs)
        if ncyc == 0:
            return CycleFreeTuning(a, k, True, 0)
        if a * 2 > cap:
            return CycleFreeTuning(a, k, False, ncyc)
        a *= 2
        k += 1
