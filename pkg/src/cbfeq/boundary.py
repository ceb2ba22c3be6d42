"""Parametrized boundary curves and a predictor-corrector level-set tracer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import TracingError


@dataclass
class BoundaryCurve:
    """A component (or a window-clipped piece) of {h = 0} as t -> x(t), t in [t0, t1]."""

    param: Callable
    t0: float
    t1: float
    closed: bool
    label: str = ""

    def __call__(self, t):
        return self.param(t)

    def grid(self, N: int) -> np.ndarray:
        if self.closed:
            return np.linspace(self.t0, self.t1, N, endpoint=False)
        return np.linspace(self.t0, self.t1, N)

    def sample(self, N: int) -> np.ndarray:
        return np.asarray(self.param(self.grid(N)))


def project_to_level(h, grad, X, iters: int = 40, tol: float = 1e-15):
    """Newton steps along the gradient onto {h = 0}; X is (k, 2)."""
    X = np.array(X, dtype=float, copy=True)
    for _ in range(iters):
        v = h(X)
        G = grad(X)
        g2 = np.sum(G * G, axis=1)
        g2 = np.where(g2 > 0, g2, 1.0)
        dX = (v / g2)[:, None] * G
        X -= dX
        if np.max(np.abs(dX)) <= tol * (1.0 + np.max(np.abs(X))):
            break
    return X


def _polyline_curve(P: np.ndarray, closed: bool, h, grad, label: str) -> BoundaryCurve:
    L = len(P)
    Q = np.vstack([P, P[:1]]) if closed else P
    t1 = float(L if closed else L - 1)

    def param(t):
        t = np.asarray(t, float)
        flat = np.atleast_1d(t).ravel()
        i = np.clip(np.floor(flat).astype(int), 0, len(Q) - 2)
        s = (flat - i)[:, None]
        X = (1 - s) * Q[i] + s * Q[i + 1]
        X = project_to_level(h, grad, X)
        return X.reshape(t.shape + (2,))

    return BoundaryCurve(param, 0.0, t1, closed, label)


def _inside(x, win, grow=0.25):
    w, hgt = win[1] - win[0], win[3] - win[2]
    return (win[0] - grow * w <= x[0] <= win[1] + grow * w) and (win[2] - grow * hgt <= x[1] <= win[3] + grow * hgt)


def _march(h, grad, x0, step, sign, win, max_steps):
    pts = [x0]
    x = x0.copy()
    travelled = 0.0
    ds = step
    for _ in range(max_steps):
        g = grad(x[None])[0]
        t = sign * np.array([-g[1], g[0]]) / np.linalg.norm(g)
        xp = x + ds * t
        xn = project_to_level(h, grad, xp[None])[0]
        if np.linalg.norm(xn - xp) > 0.25 * ds and ds > step * 1e-3:
            ds *= 0.5
            continue
        travelled += np.linalg.norm(xn - x)
        x = xn
        pts.append(x.copy())
        if travelled > 10 * step and np.linalg.norm(x - x0) < 0.75 * ds:
            return np.array(pts[:-1]), True
        if not _inside(x, win):
            return np.array(pts), False
        ds = min(step, ds * 1.5)
    raise TracingError(f"level-set tracing did not close within {max_steps} steps")


def trace_level_set(h, grad, window, N: int = 2000, step: float = None, seed_grid: int = 160):
    """Find every component of {h = 0} meeting the window and return them as curves.

    Seeds come from sign changes of h on a coarse grid; each seed not already
    covered by a traced component starts a new trace.  Components leaving the
    (slightly enlarged) window are traced in both directions and returned open.
    """
    x0, x1, y0, y1 = window
    if step is None:
        step = 2.0 * ((x1 - x0) + (y1 - y0)) / N
    max_steps = 10 * N
    xs = np.linspace(x0, x1, seed_grid)
    ys = np.linspace(y0, y1, seed_grid)
    XX, YY = np.meshgrid(xs, ys, indexing="ij")
    H = h(np.stack([XX.ravel(), YY.ravel()], 1)).reshape(XX.shape)
    seeds = []
    for i, j in zip(*np.nonzero(np.sign(H[:-1, :]) != np.sign(H[1:, :]))):
        s = H[i, j] / (H[i, j] - H[i + 1, j])
        seeds.append(((i, j), np.array([xs[i] + s * (xs[i + 1] - xs[i]), ys[j]])))
    for i, j in zip(*np.nonzero(np.sign(H[:, :-1]) != np.sign(H[:, 1:]))):
        s = H[i, j] / (H[i, j] - H[i, j + 1])
        seeds.append(((i, j), np.array([xs[i], ys[j] + s * (ys[j + 1] - ys[j])])))
    dx, dy = xs[1] - xs[0], ys[1] - ys[0]
    covered = set()
    curves = []
    for _, guess in seeds:
        xstart = project_to_level(h, grad, guess[None])[0]
        cell = (int(np.floor((xstart[0] - x0) / dx)), int(np.floor((xstart[1] - y0) / dy)))
        if cell in covered:
            continue
        fwd, closed = _march(h, grad, xstart, step, +1.0, window, max_steps)
        if closed:
            P = fwd
        else:
            back, _ = _march(h, grad, xstart, step, -1.0, window, max_steps)
            P = np.vstack([back[::-1], fwd[1:]])
        for p in P:
            ci = int(np.floor((p[0] - x0) / dx))
            cj = int(np.floor((p[1] - y0) / dy))
            for a in (-1, 0, 1):
                for b in (-1, 0, 1):
                    covered.add((ci + a, cj + b))
        curves.append(_polyline_curve(P, closed, h, grad, "traced"))
    return curves
