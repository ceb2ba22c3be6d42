"""Phase portraits written directly as SVG.

Each figure holds one path per trajectory, one closed path per unsafe-set
boundary component and one marker per undesired equilibrium.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .boundary import trace_level_set

CLASS_COLORS = {
    "asymptotically-stable": "#d62728",
    "saddle": "#ff7f0e",
    "degenerate": "#7f7f7f",
    "potential-only": "#1f77b4",
}
TRAJ_COLOR = "#2c3e50"
OBSTACLE_FILL = "#bbbbbb"
SIZE = 600


def _fmt(v: float) -> str:
    return f"{v:.5g}"


class _Canvas:
    def __init__(self, lo, hi):
        span = np.maximum(hi - lo, 1e-9)
        self.lo = lo - 0.1 * span
        self.hi = hi + 0.1 * span
        w, h = self.hi - self.lo
        self.scale = SIZE / max(w, h)
        self.W, self.H = w * self.scale, h * self.scale
        self.items = []

    def xy(self, P):
        P = np.atleast_2d(P)
        return np.stack([(P[:, 0] - self.lo[0]) * self.scale, (self.hi[1] - P[:, 1]) * self.scale], 1)

    def path(self, P, closed=False, **attrs):
        """One <path>; P is a polyline or a list of polylines (subpaths)."""
        parts = []
        for S in (P if isinstance(P, list) else [P]):
            Q = self.xy(S)
            Q = Q[np.all(np.isfinite(Q), 1)]
            if len(Q) >= 2:
                parts.append("M" + " L".join(f"{_fmt(a)},{_fmt(b)}" for a, b in Q) + (" Z" if closed else ""))
        if parts:
            self.items.append(f'<path d="{" ".join(parts)}"{_attrs(attrs)}/>')

    def marker(self, p, radius=5, title="", **attrs):
        (x, y), = self.xy(p)
        t = f"<title>{escape(title)}</title>" if title else ""
        self.items.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{radius}"{_attrs(attrs)}>{t}</circle>')

    def render(self, title=""):
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(self.W)}" height="{_fmt(self.H)}" '
                f'viewBox="0 0 {_fmt(self.W)} {_fmt(self.H)}">\n')
        t = f"<title>{escape(title)}</title>\n" if title else ""
        return head + t + "\n".join(self.items) + "\n</svg>\n"


def _attrs(a):
    return "".join(f' {k.rstrip("_").replace("_", "-")}="{escape(str(v))}"' for k, v in a.items())


def _unsafe_polygons(barrier, window):
    """Closed polygons bounding the unsafe side of every boundary component in the window."""
    curves = barrier.boundary_curves(window)
    if curves is None:
        curves = trace_level_set(barrier.value, barrier.grad, window)
    diag = float(np.hypot(window[1] - window[0], window[3] - window[2]))
    polys = []
    for c in curves:
        P = c.sample(800)
        P = P[np.all(np.isfinite(P), 1)]
        if c.closed:
            inside = P.mean(0)
            if float(barrier.value(inside)) > 0:
                # safe set inside the curve: shade the window outside it
                x0, x1, y0, y1 = window
                frame = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
                polys.append([frame, P])
            else:
                polys.append(P)
            continue
        # open component: close it through points pushed to the unsafe side
        G = barrier.grad(P)
        G = G / np.maximum(np.linalg.norm(G, axis=1, keepdims=True), 1e-300)
        polys.append(np.vstack([P, (P - diag * G)[::-1]]))
    return polys


def _eq_markers(equilibria):
    out = []
    for e in equilibria:
        d = e if isinstance(e, dict) else e.to_dict()
        out.append((np.asarray(d["point"], float), d.get("classification") or "degenerate"))
    return out


def phase_svg(barrier, trajectories, equilibria=(), title="") -> str:
    """Planar phase portrait; trajectories is a list of (k, 2) arrays."""
    pts = [np.asarray(T)[:, :2] for T in trajectories if len(T)]
    eqs = _eq_markers(equilibria)
    allp = np.vstack(pts + [p[None] for p, _ in eqs] + [np.zeros((1, 2))])
    allp = allp[np.all(np.isfinite(allp), 1)]
    lo, hi = allp.min(0), allp.max(0)
    try:
        wlo, whi = np.array(barrier.default_window()).reshape(2, 2).T
        lo, hi = np.minimum(lo, wlo), np.maximum(hi, whi)
    except NotImplementedError:
        pass
    cv = _Canvas(lo, hi)
    window = (cv.lo[0], cv.hi[0], cv.lo[1], cv.hi[1])
    for P in _unsafe_polygons(barrier, window):
        cv.path(P, closed=True, fill=OBSTACLE_FILL, fill_opacity=0.6, fill_rule="evenodd",
                stroke="#555", stroke_width=1, class_="boundary")
    for i, P in enumerate(pts):
        cv.path(P, fill="none", stroke=TRAJ_COLOR, stroke_width=1, class_="trajectory", id=f"traj{i}")
    for p, cls in eqs:
        cv.marker(p, fill=CLASS_COLORS.get(cls, "#000"), stroke="#000", class_=f"equilibrium {cls}",
                  title=f"{cls} at ({p[0]:.4g}, {p[1]:.4g})")
    return cv.render(title)


# orthonormal axonometric projection: rows span the image plane
_PROJ = np.array([[1.0, -1.0, 0.0], [1.0, 1.0, -2.0]])
_PROJ = _PROJ / np.linalg.norm(_PROJ, axis=1, keepdims=True)
_PROJ[1] *= -1.0   # z up on the page


def project3(X) -> np.ndarray:
    return np.atleast_2d(X) @ _PROJ.T


def phase3d_svg(barrier, trajectories, equilibria=(), title="") -> str:
    """Axonometric view of a 3-D run; a spherical obstacle is drawn as its silhouette."""
    pts = [project3(T) for T in trajectories if len(T)]
    eqs = [(project3(p)[0], c) for p, c in _eq_markers(equilibria)]
    sil = []
    if barrier.family == "sphere":
        th = np.linspace(0, 2 * np.pi, 400, endpoint=False)
        c = project3(barrier.center)[0]
        sil.append(c + barrier.radius * np.stack([np.cos(th), np.sin(th)], 1))
    allp = np.vstack(pts + sil + [p[None] for p, _ in eqs] + [np.zeros((1, 2))])
    cv = _Canvas(allp.min(0), allp.max(0))
    for S in sil:
        cv.path(S, closed=True, fill=OBSTACLE_FILL, fill_opacity=0.6, stroke="#555", stroke_width=1,
                class_="boundary")
    for i, P in enumerate(pts):
        cv.path(P, fill="none", stroke=TRAJ_COLOR, stroke_width=1, class_="trajectory", id=f"traj{i}")
    for p, cls in eqs:
        cv.marker(p, fill=CLASS_COLORS.get(cls, "#000"), stroke="#000", class_=f"equilibrium {cls}",
                  title=cls)
    return cv.render(title)
