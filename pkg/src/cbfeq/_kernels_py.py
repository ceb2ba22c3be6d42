"""Pure numpy implementation of the batch RK4 kernels (fallback for the compiled module)."""
import numpy as np

STATUS_RUNNING, STATUS_CONVERGED, STATUS_ESCAPED, STATUS_DEGENERATE = 0, 1, 2, 3


def barrier_eval(kind, p, X):
    """h and grad h on a batch for the kernel barrier codes."""
    n = X.shape[1]
    if kind == 1:
        sign, r, c = p[0], p[1], p[2:2 + n]
        d = X - c
        return sign * (np.sum(d * d, 1) - r * r), 2.0 * sign * d
    if kind == 2:
        sign, c = p[0], p[1:1 + n]
        P = p[1 + n:1 + n + n * n].reshape(n, n)
        d = X - c
        Pd = d @ P.T
        return sign * (np.sum(d * Pd, 1) - 1.0), 2.0 * sign * Pd
    if kind == 3:
        sign, a, b, c1, c2 = p[:5]
        dp = X - np.array([a - c1, c2])
        dq = X - np.array([-a - c1, c2])
        u = np.sum(dp * dp, 1)
        v = np.sum(dq * dq, 1)
        return sign * (u * v - b**4), 2.0 * sign * (dp * v[:, None] + dq * u[:, None])
    if kind == 4:
        off, a = p[0], p[1:1 + n]
        return X @ a - off, np.broadcast_to(a, X.shape)
    if kind == 5:
        lo, hi = p[0], p[1]
        s = X[:, 0]
        e = np.where(s >= hi, s - hi, np.where(s <= lo, s - lo, 0.0))
        return e * e + X[:, 1], np.stack([2 * e, np.ones_like(s)], 1)
    if kind == 6:
        c1, c2, r1 = p[0], p[1], p[2]
        Y = X - np.array([0.0, c2])
        rho = np.hypot(Y[:, 0], Y[:, 1])
        lower = Y[:, 1] <= 0
        D = Y - np.where(Y[:, :1] >= 0, np.array([[c1, 0.0]]), np.array([[-c1, 0.0]]))
        h = np.where(lower, (rho - c1) ** 2, np.sum(D * D, 1)) - r1 * r1
        safe = np.where(rho > 0, rho, 1.0)
        g = np.where(lower[:, None], (2 * (rho - c1) / safe)[:, None] * Y, 2 * D)
        return h, g
    raise ValueError(f"unknown barrier kernel code {kind}")


def field_linear_batch(At, B, Ginv, slope, kind, params, X):
    """Filtered closed loop for a linear plant, linear alpha and constant weight.

    Returns (F, degenerate_mask)."""
    h, gr = barrier_eval(kind, params, X)
    ft = X @ At.T
    Lg = gr @ B
    w = Lg @ Ginv.T
    denom = np.sum(Lg * w, 1)
    eta = np.sum(gr * ft, 1) + slope * h
    active = eta < 0
    bad = active & (np.sqrt(np.sum(Lg * Lg, 1)) < 1e-12)
    F = ft.copy()
    ok = active & ~bad
    if np.any(ok):
        F[ok] -= (eta[ok] / denom[ok])[:, None] * (w[ok] @ B.T)
    return F, bad


def rk4_batch(field, X0, dt, nsteps, stride, rmax, targets, eps_c):
    """Fixed-step RK4 on a batch with per-trajectory stopping.

    field(X) -> (F, bad).  Returns (states, stop, status, target) where
    states[:, j] is the state after j*stride steps (frozen after a stop).
    """
    X = np.array(X0, dtype=float, copy=True)
    k, n = X.shape
    nrec = nsteps // stride + 1
    states = np.empty((k, nrec, n))
    states[:, 0] = X
    stop = np.full(k, nsteps, dtype=np.int64)
    status = np.zeros(k, dtype=np.int64)
    target = np.full(k, -1, dtype=np.int64)
    alive = np.ones(k, dtype=bool)
    T = np.asarray(targets, float).reshape(-1, n)
    for step in range(nsteps):
        idx = np.nonzero(alive)[0]
        if len(idx) == 0:
            break
        x = X[idx]
        k1, b1 = field(x)
        # stopping tests on the current state
        done = np.zeros(len(idx), dtype=bool)
        slow = np.nonzero(np.sqrt(np.sum(k1 * k1, 1)) < eps_c)[0]
        if len(T) and len(slow):
            dist = np.sqrt(((x[slow, None, :] - T[None]) ** 2).sum(-1))
            near = dist < 10 * eps_c
            hit = near.any(1)
            if np.any(hit):
                rows = slow[hit]
                status[idx[rows]] = STATUS_CONVERGED
                target[idx[rows]] = np.argmax(near[hit], axis=1)
                stop[idx[rows]] = step
                done[rows] = True
        esc = np.sqrt(np.sum(x * x, 1)) > rmax
        esc &= ~done
        if np.any(esc):
            status[idx[esc]] = STATUS_ESCAPED
            stop[idx[esc]] = step
            done |= esc
        k2, b2 = field(x + 0.5 * dt * k1)
        k3, b3 = field(x + 0.5 * dt * k2)
        k4, b4 = field(x + dt * k3)
        bad = (b1 | b2 | b3 | b4) & ~done
        if np.any(bad):
            status[idx[bad]] = STATUS_DEGENERATE
            stop[idx[bad]] = step
            done |= bad
        move = ~done
        X[idx[move]] = x[move] + (dt / 6.0) * (k1[move] + 2 * k2[move] + 2 * k3[move] + k4[move])
        alive[idx[done]] = False
        if (step + 1) % stride == 0:
            states[:, (step + 1) // stride] = X
    # freeze records after each stop
    for i in range(k):
        j = stop[i] // stride + 1
        if stop[i] < nsteps and j < nrec:
            states[i, j:] = X[i]
    return states, stop, status, target


def rk4_linear_batch(At, B, Ginv, slope, kind, params, X0, dt, nsteps, stride, rmax, targets, eps_c):
    At = np.ascontiguousarray(At, float)
    B = np.ascontiguousarray(B, float)
    Ginv = np.ascontiguousarray(Ginv, float)
    params = np.ascontiguousarray(params, float)

    def field(X):
        return field_linear_batch(At, B, Ginv, slope, kind, params, X)

    return rk4_batch(field, X0, dt, int(nsteps), int(stride), rmax, targets, eps_c)
