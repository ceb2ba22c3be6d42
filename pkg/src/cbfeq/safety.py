"""Closed-form safety filter and the filtered closed-loop vector field."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateConstraintError
from .model import ProblemInstance, _as_batch, eval_f_tilde

TOL_SAFE = 1e-9
DEGENERATE_TOL = 1e-12


@dataclass
class FilterTerms:
    """Batch quantities shared by the filter, the scanner and the reports."""

    h: np.ndarray        # (k,)
    grad: np.ndarray     # (k, n)
    f_tilde: np.ndarray  # (k, n)
    eta: np.ndarray      # (k,)
    Lg: np.ndarray       # (k, m)   g^T grad h
    GinvLg: np.ndarray   # (k, m)   G^{-1} g^T grad h
    denom: np.ndarray    # (k,)     |g^T grad h|^2 in the G^{-1} metric
    g: np.ndarray        # (k, n, m)

    @property
    def direction(self) -> np.ndarray:
        """g G^{-1} g^T grad h, the direction the filter pushes along."""
        return np.einsum("kij,kj->ki", self.g, self.GinvLg)


def filter_terms(inst: ProblemInstance, X: np.ndarray) -> FilterTerms:
    X = np.atleast_2d(np.asarray(X, float))
    h = inst.barrier.value(X)
    gr = inst.barrier.grad(X)
    ft = eval_f_tilde(inst, X)
    eta = np.einsum("ki,ki->k", gr, ft) + inst.alpha(h)
    g = inst.system.g(X)
    Lg = np.einsum("kij,ki->kj", g, gr)
    GinvLg = inst.weight.solve(X, Lg)
    denom = np.einsum("kj,kj->k", Lg, GinvLg)
    return FilterTerms(h, gr, ft, eta, Lg, GinvLg, denom, g)


def _filter_from_terms(T: FilterTerms, X, strict: bool = True) -> np.ndarray:
    active = T.eta < 0
    U = np.zeros_like(T.Lg)
    if np.any(active):
        small = active & (np.sqrt(np.abs(np.sum(T.Lg * T.Lg, axis=1))) < DEGENERATE_TOL)
        if np.any(small):
            raise DegenerateConstraintError(X[np.argmax(small)])
        U[active] = -(T.eta[active] / T.denom[active])[:, None] * T.GinvLg[active]
    return U


def filter_input_batch(inst: ProblemInstance, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, float))
    return _filter_from_terms(filter_terms(inst, X), X)


def filter_input(inst: ProblemInstance, x) -> np.ndarray:
    """Minimal G(x)-norm correction v(x) enforcing grad h^T (f~ + g v) + alpha(h) >= 0.

    Zero when eta(x) >= 0 (including the tie eta = 0); otherwise
    -eta G^{-1} g^T grad h / |g^T grad h|^2_{G^{-1}}.
    """
    X, single = _as_batch(x, inst.n)
    if not np.all(np.isfinite(X)):
        raise ConfigError("state must be finite")
    T = filter_terms(inst, X)
    if np.any(T.h < -TOL_SAFE):
        raise ConfigError(f"state outside the safe set (h = {T.h.min():.3e})")
    U = _filter_from_terms(T, X)
    return U[0] if single else U


def closed_loop_batch(inst: ProblemInstance, X) -> np.ndarray:
    """f~ + g v on a batch, without the safe-set membership check (used by integrators)."""
    X = np.atleast_2d(np.asarray(X, float))
    T = filter_terms(inst, X)
    U = _filter_from_terms(T, X)
    return T.f_tilde + np.einsum("kij,kj->ki", T.g, U)


def closed_loop_field(inst: ProblemInstance, x) -> np.ndarray:
    X, single = _as_batch(x, inst.n)
    U = filter_input(inst, X)
    out = eval_f_tilde(inst, X) + np.einsum("kij,kj->ki", inst.system.g(X), U)
    return out[0] if single else out


def _spd_power(G: np.ndarray, p: float) -> np.ndarray:
    w, V = np.linalg.eigh(G)
    return (V * w**p) @ V.T


def projection_oracle(inst: ProblemInstance, x) -> np.ndarray:
    """Solve the one-constraint weighted least-norm problem by change of variables.

    With w = G^{1/2} theta the cost is |w|^2 and the constraint becomes
    c~^T w >= -eta, c~ = G^{-1/2} g^T grad h; the minimizer is the Euclidean
    projection of 0 onto that half space, mapped back through G^{-1/2}.
    """
    x = np.asarray(x, float)
    h = float(inst.barrier.value(x))
    gr = inst.barrier.grad(x)
    ft = eval_f_tilde(inst, x)
    c = inst.system.g(x).T @ gr
    b = float(gr @ ft + inst.alpha(h))
    if b >= 0:
        return np.zeros(inst.m)
    if np.linalg.norm(c) < DEGENERATE_TOL:
        raise DegenerateConstraintError(x)
    G = inst.weight.matrix(x)
    Gmh = _spd_power(G, -0.5)
    ct = Gmh @ c
    w = (-b / (ct @ ct)) * ct
    return Gmh @ w


def qp_oracle_check(inst: ProblemInstance, x) -> float:
    """|oracle - filter_input|_inf at x."""
    return float(np.max(np.abs(projection_oracle(inst, x) - filter_input(inst, x)), initial=0.0))
