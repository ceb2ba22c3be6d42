# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch RK4 for linear plants with the closed-form filter."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

DEF NMAX = 8

cdef int STATUS_CONVERGED = 1
cdef int STATUS_ESCAPED = 2
cdef int STATUS_DEGENERATE = 3


cdef double barrier_eval(int kind, const double[::1] p, const double* x, int n, double* g) noexcept nogil:
    cdef int i, j
    cdef double h = 0.0, s, u, v, b4
    cdef double d[NMAX]
    cdef double dq[NMAX]
    if kind == 1:
        s = p[0]
        for i in range(n):
            d[i] = x[i] - p[2 + i]
            h += d[i] * d[i]
            g[i] = 2.0 * s * d[i]
        return s * (h - p[1] * p[1])
    if kind == 2:
        s = p[0]
        for i in range(n):
            d[i] = x[i] - p[1 + i]
        for i in range(n):
            u = 0.0
            for j in range(n):
                u += p[1 + n + i * n + j] * d[j]
            g[i] = 2.0 * s * u
            h += d[i] * u
        return s * (h - 1.0)
    if kind == 3:
        s = p[0]
        d[0] = x[0] - (p[1] - p[3])
        d[1] = x[1] - p[4]
        dq[0] = x[0] - (-p[1] - p[3])
        dq[1] = x[1] - p[4]
        u = d[0] * d[0] + d[1] * d[1]
        v = dq[0] * dq[0] + dq[1] * dq[1]
        b4 = p[2] * p[2] * p[2] * p[2]
        g[0] = 2.0 * s * (d[0] * v + dq[0] * u)
        g[1] = 2.0 * s * (d[1] * v + dq[1] * u)
        return s * (u * v - b4)
    if kind == 5:
        u = 0.0
        if x[0] >= p[1]:
            u = x[0] - p[1]
        elif x[0] <= p[0]:
            u = x[0] - p[0]
        g[0] = 2.0 * u
        g[1] = 1.0
        return u * u + x[1]
    if kind == 6:
        d[0] = x[0]
        d[1] = x[1] - p[1]
        u = sqrt(d[0] * d[0] + d[1] * d[1])
        if d[1] <= 0:
            v = 2.0 * (u - p[0]) / u if u > 0 else 0.0
            g[0] = v * d[0]
            g[1] = v * d[1]
            return (u - p[0]) * (u - p[0]) - p[2] * p[2]
        dq[0] = d[0] - p[0] if d[0] >= 0 else d[0] + p[0]
        dq[1] = d[1]
        g[0] = 2.0 * dq[0]
        g[1] = 2.0 * dq[1]
        return dq[0] * dq[0] + dq[1] * dq[1] - p[2] * p[2]
    # kind == 4, half plane
    for i in range(n):
        g[i] = p[1 + i]
        h += p[1 + i] * x[i]
    return h - p[0]


cdef int field(const double[:, ::1] At, const double[:, ::1] B, const double[:, ::1] Ginv,
               double slope, int kind, const double[::1] p, const double* x, double* out,
               int n, int m) noexcept nogil:
    """Writes the filtered field into out; returns 1 when the filter is degenerate."""
    cdef int i, j
    cdef double g[NMAX]
    cdef double Lg[NMAX]
    cdef double w[NMAX]
    cdef double h, eta = 0.0, denom = 0.0, nl = 0.0, coef, acc
    h = barrier_eval(kind, p, x, n, g)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += At[i, j] * x[j]
        out[i] = acc
        eta += g[i] * acc
    eta += slope * h
    if eta >= 0:
        return 0
    for j in range(m):
        acc = 0.0
        for i in range(n):
            acc += B[i, j] * g[i]
        Lg[j] = acc
        nl += acc * acc
    if sqrt(nl) < 1e-12:
        return 1
    for i in range(m):
        acc = 0.0
        for j in range(m):
            acc += Ginv[i, j] * Lg[j]
        w[i] = acc
        denom += Lg[i] * acc
    coef = eta / denom
    for i in range(n):
        acc = 0.0
        for j in range(m):
            acc += B[i, j] * w[j]
        out[i] -= coef * acc
    return 0


def field_linear_batch(At, B, Ginv, double slope, int kind, params, X):
    cdef const double[:, ::1] At_ = np.ascontiguousarray(At, dtype=np.float64)
    cdef const double[:, ::1] B_ = np.ascontiguousarray(B, dtype=np.float64)
    cdef const double[:, ::1] G_ = np.ascontiguousarray(Ginv, dtype=np.float64)
    cdef const double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    cdef const double[:, ::1] X_ = np.ascontiguousarray(X, dtype=np.float64)
    cdef int k = X_.shape[0], n = X_.shape[1], m = B_.shape[1], i
    if n > NMAX or m > NMAX:
        raise ValueError("compiled kernel supports n, m <= 8")
    F = np.empty((k, n))
    bad = np.zeros(k, dtype=bool)
    cdef double[:, ::1] F_ = F
    cdef cnp.npy_bool[::1] bad_ = bad
    with nogil:
        for i in range(k):
            bad_[i] = field(At_, B_, G_, slope, kind, p, &X_[i, 0], &F_[i, 0], n, m)
    return F, bad


def rk4_linear_batch(At, B, Ginv, double slope, int kind, params, X0, double dt,
                     long nsteps, long stride, double rmax, targets, double eps_c):
    cdef const double[:, ::1] At_ = np.ascontiguousarray(At, dtype=np.float64)
    cdef const double[:, ::1] B_ = np.ascontiguousarray(B, dtype=np.float64)
    cdef const double[:, ::1] G_ = np.ascontiguousarray(Ginv, dtype=np.float64)
    cdef const double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    X = np.array(X0, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] X_ = X
    cdef int k = X_.shape[0], n = X_.shape[1], m = B_.shape[1]
    if n > NMAX or m > NMAX:
        raise ValueError("compiled kernel supports n, m <= 8")
    T = np.ascontiguousarray(np.asarray(targets, dtype=np.float64).reshape(-1, n))
    cdef const double[:, ::1] T_ = T
    cdef int nt = T_.shape[0]
    cdef long nrec = nsteps // stride + 1
    states = np.empty((k, nrec, n))
    cdef double[:, :, ::1] S_ = states
    stop = np.full(k, nsteps, dtype=np.int64)
    status = np.zeros(k, dtype=np.int64)
    target = np.full(k, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] stop_ = stop
    cdef cnp.int64_t[::1] status_ = status
    cdef cnp.int64_t[::1] target_ = target
    cdef double k1[NMAX]
    cdef double k2[NMAX]
    cdef double k3[NMAX]
    cdef double k4[NMAX]
    cdef double y[NMAX]
    cdef double x[NMAX]
    cdef int i, j, e, bad
    cdef long step, rec
    cdef double sp, dist, nx, half = 0.5 * dt, sixth = dt / 6.0
    with nogil:
        for i in range(k):
            for j in range(n):
                x[j] = X_[i, j]
                S_[i, 0, j] = x[j]
            rec = 1
            for step in range(nsteps):
                bad = field(At_, B_, G_, slope, kind, p, x, k1, n, m)
                sp = 0.0
                nx = 0.0
                for j in range(n):
                    sp += k1[j] * k1[j]
                    nx += x[j] * x[j]
                sp = sqrt(sp)
                if sp < eps_c:
                    for e in range(nt):
                        dist = 0.0
                        for j in range(n):
                            dist += (x[j] - T_[e, j]) * (x[j] - T_[e, j])
                        if sqrt(dist) < 10 * eps_c:
                            status_[i] = STATUS_CONVERGED
                            target_[i] = e
                            break
                    if status_[i] == STATUS_CONVERGED:
                        stop_[i] = step
                        break
                if sqrt(nx) > rmax:
                    status_[i] = STATUS_ESCAPED
                    stop_[i] = step
                    break
                for j in range(n):
                    y[j] = x[j] + half * k1[j]
                bad |= field(At_, B_, G_, slope, kind, p, y, k2, n, m)
                for j in range(n):
                    y[j] = x[j] + half * k2[j]
                bad |= field(At_, B_, G_, slope, kind, p, y, k3, n, m)
                for j in range(n):
                    y[j] = x[j] + dt * k3[j]
                bad |= field(At_, B_, G_, slope, kind, p, y, k4, n, m)
                if bad:
                    status_[i] = STATUS_DEGENERATE
                    stop_[i] = step
                    break
                for j in range(n):
                    x[j] = x[j] + sixth * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                if (step + 1) % stride == 0:
                    for j in range(n):
                        S_[i, rec, j] = x[j]
                    rec += 1
            while rec < nrec:
                for j in range(n):
                    S_[i, rec, j] = x[j]
                rec += 1
            for j in range(n):
                X_[i, j] = x[j]
    return states, stop, status, target
