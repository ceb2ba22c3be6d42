"""Barrier function families.

Each family evaluates h, grad h and the Hessian of h on batches of states,
knows how to describe its zero level set (for the boundary scanner and the
plots), and serializes to a plain dict.  h >= 0 is the safe set.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .boundary import BoundaryCurve
from .errors import ConfigError

# codes understood by the compiled closed-loop kernel
KERNEL_SPHERE, KERNEL_QUADFORM, KERNEL_CASSINI, KERNEL_HALFPLANE = 1, 2, 3, 4
KERNEL_PIECEWISE, KERNEL_UNION_CIRCLES = 5, 6


def _batch(x, n):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != n:
        raise ConfigError(f"state has dimension {X.shape[1]}, barrier expects {n}")
    return X, single


def _out(v, single):
    return v[0] if single else v


def spd_sqrt(P: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric positive definite matrix."""
    w, V = np.linalg.eigh(P)
    if w.min() <= 0:
        raise ConfigError("matrix is not positive definite")
    return (V * np.sqrt(w)) @ V.T


class Barrier:
    family = "abstract"
    n = 2
    kernel_code = 0

    def value(self, x):
        X, s = _batch(x, self.n)
        return _out(self._value(X), s)

    def grad(self, x):
        X, s = _batch(x, self.n)
        return _out(self._grad(X), s)

    def hess(self, x):
        X, s = _batch(x, self.n)
        return _out(self._hess(X), s)

    # boundary description -------------------------------------------------
    def boundary_curves(self, window=None) -> Optional[list]:
        """Explicit parametrizations of the components of {h = 0}, or None
        when the scanner has to trace the level set."""
        return None

    def default_window(self):
        raise NotImplementedError

    def kernel_params(self) -> np.ndarray:
        raise ConfigError(f"barrier family {self.family!r} has no compiled kernel")

    def to_dict(self) -> dict:
        raise NotImplementedError


class SphereBarrier(Barrier):
    """sign * (|x - c|^2 - r^2): sign=+1 makes the ball the obstacle, sign=-1 the safe set."""

    family = "sphere"
    kernel_code = KERNEL_SPHERE

    def __init__(self, center, radius: float, sign: int = 1):
        self.center = np.asarray(center, float).copy()
        self.radius = float(radius)
        self.sign = int(sign)
        self.n = self.center.size
        if not self.radius > 0 or self.sign not in (1, -1):
            raise ConfigError("sphere needs radius > 0 and sign in {+1, -1}")

    def _value(self, X):
        d = X - self.center
        return self.sign * (np.sum(d * d, axis=1) - self.radius**2)

    def _grad(self, X):
        return 2.0 * self.sign * (X - self.center)

    def _hess(self, X):
        return np.broadcast_to(2.0 * self.sign * np.eye(self.n), (X.shape[0], self.n, self.n)).copy()

    def boundary_curves(self, window=None):
        if self.n != 2:
            return None
        c, r = self.center, self.radius

        def param(t):
            t = np.asarray(t, float)
            return np.stack([c[0] + r * np.cos(t), c[1] + r * np.sin(t)], axis=-1)

        return [BoundaryCurve(param, 0.0, 2 * np.pi, True, "circle")]

    def default_window(self):
        c, r = self.center, self.radius
        return (c[0] - r, c[0] + r, c[1] - r, c[1] + r)

    def kernel_params(self):
        return np.concatenate([[self.sign, self.radius], self.center])

    def to_dict(self):
        return {"family": "sphere", "center": self.center.tolist(), "radius": self.radius,
                "sign": self.sign}


class QuadFormBarrier(Barrier):
    """sign * ((x - c)^T P (x - c) - 1), an ellipsoid."""

    family = "quadratic-form"
    kernel_code = KERNEL_QUADFORM

    def __init__(self, P, center, sign: int = 1):
        self.P = np.atleast_2d(np.asarray(P, float)).copy()
        self.center = np.asarray(center, float).copy()
        self.sign = int(sign)
        self.n = self.center.size
        if self.P.shape != (self.n, self.n) or not np.allclose(self.P, self.P.T):
            raise ConfigError("P must be symmetric n x n")
        self.E = spd_sqrt(self.P)

    def _value(self, X):
        d = X - self.center
        return self.sign * (np.einsum("ki,ij,kj->k", d, self.P, d) - 1.0)

    def _grad(self, X):
        return 2.0 * self.sign * (X - self.center) @ self.P

    def _hess(self, X):
        return np.broadcast_to(2.0 * self.sign * self.P, (X.shape[0], self.n, self.n)).copy()

    def boundary_curves(self, window=None):
        if self.n != 2:
            return None
        Einv = np.linalg.inv(self.E)
        c = self.center

        def param(t):
            t = np.asarray(t, float)
            u = np.stack([np.cos(t), np.sin(t)], axis=-1)
            return c + u @ Einv.T

        return [BoundaryCurve(param, 0.0, 2 * np.pi, True, "ellipse")]

    def default_window(self):
        half = np.sqrt(np.diag(np.linalg.inv(self.P)))
        c = self.center
        return (c[0] - half[0], c[0] + half[0], c[1] - half[1], c[1] + half[1])

    def kernel_params(self):
        return np.concatenate([[self.sign], self.center, self.P.ravel()])

    def to_dict(self):
        return {"family": "quadratic-form", "P": self.P.tolist(), "center": self.center.tolist(),
                "sign": self.sign}


class CassiniBarrier(Barrier):
    """sign * (|x - p|^2 |x - q|^2 - b^4) with foci p = (a - c1, c2), q = (-a - c1, c2)."""

    family = "cassini"
    kernel_code = KERNEL_CASSINI

    def __init__(self, a: float, b: float, c1: float, c2: float, sign: int = 1):
        self.a, self.b, self.c1, self.c2 = map(float, (a, b, c1, c2))
        self.sign = int(sign)
        if not (self.a > 0 and self.b > 0) or self.sign not in (1, -1):
            raise ConfigError("cassini needs a, b > 0 and sign in {+1, -1}")
        self.p = np.array([self.a - self.c1, self.c2])
        self.q = np.array([-self.a - self.c1, self.c2])

    def _value(self, X):
        dp, dq = X - self.p, X - self.q
        return self.sign * (np.sum(dp * dp, 1) * np.sum(dq * dq, 1) - self.b**4)

    def _grad(self, X):
        dp, dq = X - self.p, X - self.q
        u = np.sum(dp * dp, 1)[:, None]
        v = np.sum(dq * dq, 1)[:, None]
        return self.sign * 2.0 * (dp * v + dq * u)

    def _hess(self, X):
        dp, dq = X - self.p, X - self.q
        u = np.sum(dp * dp, 1)
        v = np.sum(dq * dq, 1)
        outer = np.einsum("ki,kj->kij", dp, dq)
        H = 2.0 * (u + v)[:, None, None] * np.eye(2) + 4.0 * (outer + outer.transpose(0, 2, 1))
        return self.sign * H

    def center(self):
        return np.array([-self.c1, self.c2])

    def polar_radius(self, phi):
        """Center-polar radius of the outer branch (valid for b > a)."""
        a, b = self.a, self.b
        s2 = np.sin(2 * phi)
        return np.sqrt(a**2 * np.cos(2 * phi) + np.sqrt(b**4 - a**4 * s2 * s2))

    def default_window(self):
        R = np.sqrt(self.a**2 + self.b**2) * 1.05
        c = self.center()
        return (c[0] - R, c[0] + R, c[1] - R, c[1] + R)

    def kernel_params(self):
        return np.array([self.sign, self.a, self.b, self.c1, self.c2])

    def to_dict(self):
        return {"family": "cassini", "a": self.a, "b": self.b, "c1": self.c1, "c2": self.c2,
                "sign": self.sign}


class HalfPlaneBarrier(Barrier):
    """a^T x - b."""

    family = "halfplane"
    kernel_code = KERNEL_HALFPLANE

    def __init__(self, normal, offset: float):
        self.normal = np.asarray(normal, float).copy()
        self.offset = float(offset)
        self.n = self.normal.size
        if not np.linalg.norm(self.normal) > 0:
            raise ConfigError("half-plane normal must be nonzero")

    def _value(self, X):
        return X @ self.normal - self.offset

    def _grad(self, X):
        return np.broadcast_to(self.normal, X.shape).copy()

    def _hess(self, X):
        return np.zeros((X.shape[0], self.n, self.n))

    def boundary_curves(self, window=None):
        if self.n != 2:
            return None
        a = self.normal
        p0 = a * self.offset / (a @ a)
        d = np.array([-a[1], a[0]]) / np.linalg.norm(a)
        L = 50.0
        if window is not None:
            L = float(np.hypot(window[1] - window[0], window[3] - window[2]))

        def param(t):
            t = np.asarray(t, float)
            return p0 + t[..., None] * d

        return [BoundaryCurve(param, -L, L, False, "line")]

    def default_window(self):
        a = self.normal
        p0 = a * self.offset / (a @ a)
        return (p0[0] - 10, p0[0] + 10, p0[1] - 10, p0[1] + 10)

    def kernel_params(self):
        return np.concatenate([[self.offset], self.normal])

    def to_dict(self):
        return {"family": "halfplane", "normal": self.normal.tolist(), "offset": self.offset}


# polar radius shapes: each returns (r, r', r'') at angle theta
def _shape_ellipse(p: float, q: float):
    def fn(th):
        D = p * np.cos(th) ** 2 + q * np.sin(th) ** 2
        D1 = (q - p) * np.sin(2 * th)
        D2 = 2 * (q - p) * np.cos(2 * th)
        r = D ** -0.5
        r1 = -0.5 * D ** -1.5 * D1
        r2 = 0.75 * D ** -2.5 * D1 ** 2 - 0.5 * D ** -1.5 * D2
        return r, r1, r2

    return fn


def _shape_cassini(scale: float, e: float):
    def fn(th):
        S = np.sqrt(e**4 - np.sin(2 * th) ** 2)
        S1 = -np.sin(4 * th) / S
        S2 = -(4 * np.cos(4 * th) * S - np.sin(4 * th) * S1) / S**2
        W = np.cos(2 * th) + S
        W1 = -2 * np.sin(2 * th) + S1
        W2 = -4 * np.cos(2 * th) + S2
        sw = np.sqrt(W)
        return scale * sw, scale * W1 / (2 * sw), scale * (W2 / (2 * sw) - W1**2 / (4 * W * sw))

    return fn


def _shape_rose(r0: float, amp: float, k: float):
    def fn(th):
        return (r0 + amp * np.cos(k * th), -amp * k * np.sin(k * th),
                -amp * k * k * np.cos(k * th))

    return fn


POLAR_SHAPES = {
    "ellipse": (_shape_ellipse, ("p", "q")),
    "cassini": (_shape_cassini, ("scale", "e")),
    "rose": (_shape_rose, ("r0", "amp", "k")),
}


class PolarBarrier(Barrier):
    """Star-shaped safe set {|x| <= r(theta)}: h = 1 - |x|^2 / r(theta)^2.

    The quotient is homogeneous of degree two, so h is C^1 at the origin
    (h(0) = 1, grad h(0) = 0) although theta is not defined there.
    """

    family = "polar-radius"

    def __init__(self, shape: str, params: Optional[dict] = None, radius_fn: Callable = None):
        self.shape = shape
        self.params = dict(params or {})
        if shape == "callable":
            if radius_fn is None:
                raise ConfigError("callable polar shape needs radius_fn")
            self._r = radius_fn
        else:
            if shape not in POLAR_SHAPES:
                raise ConfigError(f"unknown polar shape {shape!r}")
            make, names = POLAR_SHAPES[shape]
            try:
                self._r = make(*(float(self.params[k]) for k in names))
            except KeyError as exc:
                raise ConfigError(f"polar shape {shape!r} needs parameter {exc}") from None
        th = np.linspace(0, 2 * np.pi, 721)
        r = self._r(th)[0]
        if not np.all(np.isfinite(r)) or r.min() <= 0:
            raise ConfigError("polar radius must be finite and positive")

    def radius(self, theta):
        return self._r(np.asarray(theta, float))

    def _value(self, X):
        th = np.arctan2(X[:, 1], X[:, 0])
        return 1.0 - np.sum(X * X, 1) / self._r(th)[0] ** 2

    def _grad(self, X):
        th = np.arctan2(X[:, 1], X[:, 0])
        r, r1, _ = self._r(th)
        w = np.stack([-X[:, 1], X[:, 0]], axis=1)   # |x|^2 grad theta
        return -2 * X / (r * r)[:, None] + (2 * r1 / r**3)[:, None] * w

    def _hess(self, X):
        x1, x2 = X[:, 0], X[:, 1]
        rho2 = x1 * x1 + x2 * x2
        safe = np.where(rho2 > 0, rho2, 1.0)
        th = np.arctan2(x2, x1)
        r, r1, r2 = self._r(th)
        f = r1 / r**3
        f1 = r2 / r**3 - 3 * r1 * r1 / r**4
        w = np.stack([-x2, x1], axis=1)
        dth = w / safe[:, None]
        J = np.array([[0.0, -1.0], [1.0, 0.0]])
        return (-2 * np.eye(2) / (r * r)[:, None, None]
                + (4 * f)[:, None, None] * np.einsum("ki,kj->kij", X, dth)
                + (2 * f1)[:, None, None] * np.einsum("ki,kj->kij", w, dth)
                + (2 * f)[:, None, None] * J)

    def boundary_curves(self, window=None):
        def param(t):
            t = np.asarray(t, float)
            r = self._r(t)[0]
            return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)

        return [BoundaryCurve(param, 0.0, 2 * np.pi, True, "polar")]

    def default_window(self):
        P = self.boundary_curves()[0].sample(720)
        return (P[:, 0].min(), P[:, 0].max(), P[:, 1].min(), P[:, 1].max())

    def to_dict(self):
        if self.shape == "callable":
            raise ConfigError("callable polar shapes are not serializable")
        return {"family": "polar-radius", "shape": self.shape, "params": dict(self.params)}


class PiecewiseBarrier(Barrier):
    """h = phi(x1) + x2 with phi = (x1-hi)^2 right of hi, 0 on [lo, hi], (x1-lo)^2 left of lo.

    The boundary contains the flat segment {(s, 0): lo <= s <= hi}.
    """

    family = "piecewise-example"
    kernel_code = KERNEL_PIECEWISE

    def __init__(self, lo: float = -2.0, hi: float = -1.0, span: float = 4.0):
        self.lo, self.hi, self.span = float(lo), float(hi), float(span)
        if not self.lo < self.hi:
            raise ConfigError("piecewise barrier needs lo < hi")

    def _phi(self, s):
        return np.where(s >= self.hi, (s - self.hi) ** 2, np.where(s <= self.lo, (s - self.lo) ** 2, 0.0))

    def _dphi(self, s):
        return np.where(s >= self.hi, 2 * (s - self.hi), np.where(s <= self.lo, 2 * (s - self.lo), 0.0))

    def _value(self, X):
        return self._phi(X[:, 0]) + X[:, 1]

    def _grad(self, X):
        return np.stack([self._dphi(X[:, 0]), np.ones(X.shape[0])], axis=1)

    def _hess(self, X):
        H = np.zeros((X.shape[0], 2, 2))
        s = X[:, 0]
        H[:, 0, 0] = np.where((s > self.hi) | (s < self.lo), 2.0, 0.0)
        return H

    def boundary_curves(self, window=None):
        a, b = self.lo - self.span, self.hi + self.span
        if window is not None:
            a, b = window[0], window[1]

        def param(t):
            t = np.asarray(t, float)
            return np.stack([t, -self._phi(t)], axis=-1)

        return [BoundaryCurve(param, a, b, False, "graph")]

    def default_window(self):
        a, b = self.lo - self.span, self.hi + self.span
        return (a, b, -self.span**2, 1.0)

    def kernel_params(self):
        return np.array([self.lo, self.hi])

    def to_dict(self):
        return {"family": "piecewise-example", "lo": self.lo, "hi": self.hi, "span": self.span}


class UnionCirclesBarrier(Barrier):
    """Obstacle = points within distance r1 of the lower half circle of radius c1
    centered at (0, c2); h = dist(x, arc)^2 - r1^2.

    The obstacle is a lower half annulus (radii c1 - r1, c1 + r1) capped by two
    half disks of radius r1 centered at (+-c1, c2).
    """

    family = "union-of-circles-example"
    kernel_code = KERNEL_UNION_CIRCLES

    def __init__(self, c1: float, c2: float, r1: float):
        self.c1, self.c2, self.r1 = map(float, (c1, c2, r1))
        if not (0 < self.r1 < self.c1):
            raise ConfigError("union-of-circles needs 0 < r1 < c1")
        self.xc = np.array([0.0, self.c2])

    def _parts(self, X):
        Y = X - self.xc
        rho = np.hypot(Y[:, 0], Y[:, 1])
        lower = Y[:, 1] <= 0
        ends = np.where(Y[:, 0:1] >= 0, np.array([[self.c1, 0.0]]), np.array([[-self.c1, 0.0]]))
        return Y, rho, lower, ends

    def _value(self, X):
        Y, rho, lower, ends = self._parts(X)
        d_low = (rho - self.c1) ** 2
        D = Y - ends
        d_up = np.sum(D * D, 1)
        return np.where(lower, d_low, d_up) - self.r1**2

    def _grad(self, X):
        Y, rho, lower, ends = self._parts(X)
        safe = np.where(rho > 0, rho, 1.0)
        g_low = (2 * (rho - self.c1) / safe)[:, None] * Y
        g_up = 2 * (Y - ends)
        return np.where(lower[:, None], g_low, g_up)

    def _hess(self, X):
        Y, rho, lower, ends = self._parts(X)
        safe = np.where(rho > 0, rho, 1.0)
        u = Y / safe[:, None]
        uu = np.einsum("ki,kj->kij", u, u)
        I = np.eye(2)
        H_low = 2 * uu + (2 * (rho - self.c1) / safe)[:, None, None] * (I - uu)
        H_up = np.broadcast_to(2 * I, H_low.shape)
        return np.where(lower[:, None, None], H_low, H_up)

    def boundary_curves(self, window=None):
        c1, c2, r1 = self.c1, self.c2, self.r1
        r_in, r_out = c1 - r1, c1 + r1

        def param(t):
            t = np.asarray(t, float)
            k = np.clip(np.floor(t), 0, 3)
            s = t - k
            # outer arc, right cap, inner arc (reversed), left cap
            ang = np.select([k == 0, k == 1, k == 2, k == 3],
                            [np.pi + np.pi * s, np.pi * s, 2 * np.pi - np.pi * s, np.pi * s])
            cx = np.select([k == 0, k == 1, k == 2, k == 3], [0.0, c1, 0.0, -c1])
            rad = np.select([k == 0, k == 1, k == 2, k == 3], [r_out, r1, r_in, r1])
            return np.stack([cx + rad * np.cos(ang), c2 + rad * np.sin(ang)], axis=-1)

        return [BoundaryCurve(param, 0.0, 4.0, True, "tube")]

    def default_window(self):
        R = self.c1 + self.r1
        return (-R, R, self.c2 - R, self.c2 + self.r1)

    def kernel_params(self):
        return np.array([self.c1, self.c2, self.r1])

    def to_dict(self):
        return {"family": "union-of-circles-example", "c1": self.c1, "c2": self.c2, "r1": self.r1}


def barrier_from_dict(d: dict) -> Barrier:
    fam = d.get("family")
    try:
        if fam == "sphere":
            return SphereBarrier(d["center"], d["radius"], d.get("sign", 1))
        if fam == "quadratic-form":
            return QuadFormBarrier(d["P"], d["center"], d.get("sign", 1))
        if fam == "cassini":
            return CassiniBarrier(d["a"], d["b"], d["c1"], d["c2"], d.get("sign", 1))
        if fam == "halfplane":
            return HalfPlaneBarrier(d["normal"], d["offset"])
        if fam == "polar-radius":
            return PolarBarrier(d["shape"], d["params"])
        if fam == "piecewise-example":
            return PiecewiseBarrier(d.get("lo", -2.0), d.get("hi", -1.0), d.get("span", 4.0))
        if fam == "union-of-circles-example":
            return UnionCirclesBarrier(d["c1"], d["c2"], d["r1"])
    except KeyError as exc:
        raise ConfigError(f"barrier: missing field {exc}") from None
    raise ConfigError(f"barrier.family: unknown value {fam!r}")


def safe_set_topology(barrier: Barrier) -> str:
    """'compact-safe-set', 'bounded-obstacle' or 'unbounded-boundary'."""
    fam = barrier.family
    if fam in ("sphere", "quadratic-form", "cassini"):
        return "compact-safe-set" if barrier.sign < 0 else "bounded-obstacle"
    if fam == "polar-radius":
        return "compact-safe-set"
    if fam == "union-of-circles-example":
        return "bounded-obstacle"
    return "unbounded-boundary"
