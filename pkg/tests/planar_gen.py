"""Random instance builders shared by the planar tests and the acceptance module."""
import numpy as np

from cbfeq import CassiniBarrier, ClassKInf, ControllerDef, ProblemInstance, SphereBarrier, SystemDef, WeightSpec
from cbfeq.model import is_hurwitz


def _cross(a, b):
    return a[0] * b[1] - a[1] * b[0]


def unit(phi):
    return np.array([np.cos(phi), np.sin(phi)])


def eigvec_diag(rng, row):
    """(A~, xc, r) with xc an eigenvector of a diagonalizable A~ and the requested
    alignment row: 'below', 'equal' or 'above' the threshold."""
    while True:
        li, lj = -rng.uniform(0.2, 3.0, 2)
        if abs(li - lj) < 0.05:
            continue
        L = rng.uniform(2, 5)
        r = rng.uniform(0.3, 0.9) * L
        thr = 1 - (li - lj) ** 2 * r * r / (li * li * L * L)
        if not 0.02 < thr < 0.98:
            continue
        if row == "equal":
            c2 = thr
        elif row == "below":
            c2 = rng.uniform(0, thr - 0.01)
        else:
            c2 = rng.uniform(thr + 0.01, 0.999)
        a0 = rng.uniform(0, 2 * np.pi)
        vi = unit(a0)
        vj = unit(a0 + np.arccos(np.sqrt(c2)) * rng.choice([-1, 1]))
        V = np.column_stack([vi, vj])
        Atil = V @ np.diag([li, lj]) @ np.linalg.inv(V)
        return Atil, L * vi, r


def eigvec_jordan(rng, row):
    """Non-diagonalizable A~ = lam I + mu v1 w^T with xc along v1; the row is set by mu."""
    while True:
        lam = -rng.uniform(0.2, 3.0)
        L = rng.uniform(2, 5)
        r = rng.uniform(0.3, 0.9) * L
        crit = abs(lam) * L / r   # |mu| at the equality row
        if crit < 1.05:
            continue
        if row == "equal":
            mu = crit
        elif row == "below":
            mu = rng.uniform(1.0, crit - 0.02) if crit > 1.1 else None
        else:
            mu = rng.uniform(crit + 0.02, crit + 5)
        if mu is None:
            continue
        mu *= rng.choice([-1, 1])
        a0 = rng.uniform(0, 2 * np.pi)
        v1, w = unit(a0), unit(a0 + np.pi / 2)
        Atil = lam * np.eye(2) + mu * np.outer(v1, w)
        return Atil, L * v1, r


def non_eigvec(rng):
    """Hurwitz A~ (real or complex spectrum) with xc not an eigenvector."""
    while True:
        Atil = rng.uniform(-3, 3, (2, 2))
        if not is_hurwitz(Atil, 0.05):
            continue
        L = rng.uniform(2, 5)
        xc = L * unit(rng.uniform(0, 2 * np.pi))
        r = rng.uniform(0.3, 0.9) * L
        w, V = np.linalg.eig(Atil)
        if np.all(np.abs(w.imag) < 1e-12):
            u = xc / L
            ang = min(abs(_cross(u, np.real(V[:, k]) / np.linalg.norm(V[:, k]))) for k in range(2))
            if ang < 0.05 or abs(w[0] - w[1]) < 0.05:
                continue
        return Atil, xc, r


def random_obstacle_instance(rng, topology):
    """Fully actuated planar instance with random SPD weight for the structure theorems."""
    while True:
        B = rng.uniform(-2, 2, (2, 2))
        if abs(np.linalg.det(B)) < 0.3:
            continue
        Atil = rng.uniform(-3, 3, (2, 2))
        if not is_hurwitz(Atil, 0.05):
            continue
        A = rng.uniform(-2, 2, (2, 2))
        K = np.linalg.solve(B, A - Atil)
        M = rng.standard_normal((2, 2))
        G = WeightSpec.constant(M @ M.T + 0.2 * np.eye(2))
        kind = rng.choice(["circle", "cassini"])
        if topology == "bounded-obstacle":
            if kind == "circle":
                bar = SphereBarrier(rng.uniform(2, 5) * unit(rng.uniform(0, 2 * np.pi)), rng.uniform(0.3, 1.5), 1)
            else:
                a = rng.uniform(0.5, 1.5)
                c = rng.uniform(3, 6) * unit(rng.uniform(0, 2 * np.pi))
                bar = CassiniBarrier(a, a * rng.uniform(1.02, 1.4), c[0], c[1], 1)
        else:
            if kind == "circle":
                R = rng.uniform(2, 5)
                bar = SphereBarrier(rng.uniform(0, 0.8 * R) * unit(rng.uniform(0, 2 * np.pi)), R, -1)
            else:
                a = rng.uniform(1, 3)
                c = rng.uniform(0, 0.5 * a) * unit(rng.uniform(0, 2 * np.pi))
                bar = CassiniBarrier(a, a * rng.uniform(1.02, 1.4), c[0], c[1], -1)
            if not bar.value(np.zeros(2)) > 0:
                continue
        try:
            return ProblemInstance(SystemDef.linear(A, B), ControllerDef.gain(K), bar, G,
                                   ClassKInf.linear(rng.uniform(0.5, 20)))
        except Exception:
            continue
