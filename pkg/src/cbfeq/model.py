"""Problem data: control-affine systems, nominal controllers, class-K-infinity
functions, input weights, and the shared evaluators for the nominal closed loop.

Every evaluator accepts either a single state of shape (n,) or a batch of
shape (k, n) and answers with the matching shape.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError

RANK_TOL = 1e-10
HURWITZ_TOL = 1e-10
SPD_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _as_batch(x, n: Optional[int] = None):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if n is not None and X.shape[1] != n:
        raise ConfigError(f"state has dimension {X.shape[1]}, expected {n}")
    return X, single


def is_hurwitz(M: np.ndarray, tol: float = HURWITZ_TOL) -> bool:
    return bool(np.all(np.linalg.eigvals(M).real < -tol))


# ---------------------------------------------------------------------------
# class-K-infinity functions


@dataclass(frozen=True)
class ClassKInf:
    """Extended class-K-infinity function.

    ``linear``: alpha(s) = a*s.  ``cubic-odd``: alpha(s) = c1*s + c3*s**3 with
    c1 > 0, c3 >= 0.
    """

    kind: str
    coefficients: tuple

    def __post_init__(self):
        if self.kind == "linear":
            if len(self.coefficients) != 1 or not self.coefficients[0] > 0:
                raise ConfigError("linear alpha needs one positive slope")
        elif self.kind == "cubic-odd":
            if len(self.coefficients) != 2:
                raise ConfigError("cubic-odd alpha needs (c1, c3)")
            c1, c3 = self.coefficients
            if not (c1 > 0 and c3 >= 0):
                raise ConfigError("cubic-odd alpha needs c1 > 0 and c3 >= 0")
        else:
            raise ConfigError(f"unknown alpha kind {self.kind!r}")
        grid = np.linspace(-10.0, 10.0, 100)
        vals = self(grid)
        if self(0.0) != 0.0 or np.any(np.diff(vals) <= 0):
            raise ConfigError("alpha must vanish at 0 and be strictly increasing")

    @classmethod
    def linear(cls, slope: float) -> "ClassKInf":
        return cls("linear", (float(slope),))

    @classmethod
    def cubic_odd(cls, c1: float, c3: float) -> "ClassKInf":
        return cls("cubic-odd", (float(c1), float(c3)))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return self.coefficients[0] * s
        c1, c3 = self.coefficients
        return c1 * s + c3 * s**3

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return np.full_like(s, self.coefficients[0])
        c1, c3 = self.coefficients
        return c1 + 3.0 * c3 * s**2

    @property
    def slope0(self) -> float:
        """alpha'(0)."""
        return float(self.coefficients[0])

    def scaled(self, factor: float) -> "ClassKInf":
        return ClassKInf(self.kind, tuple(factor * c for c in self.coefficients))

    def to_dict(self) -> dict:
        if self.kind == "linear":
            return {"kind": "linear", "slope": self.coefficients[0]}
        return {"kind": "cubic-odd", "coefficients": list(self.coefficients)}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassKInf":
        kind = d.get("kind")
        if kind == "linear":
            return cls.linear(d["slope"])
        if kind == "cubic-odd":
            return cls("cubic-odd", tuple(float(c) for c in d["coefficients"]))
        raise ConfigError(f"alpha.kind: unknown value {kind!r}")


# ---------------------------------------------------------------------------
# input weight


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Weight G(x) of the filter's input norm: identity, constant, or state dependent."""

    kind: str
    m: int
    G: Optional[np.ndarray] = None
    evaluator: Optional[Callable] = None
    _chol: tuple = field(default=None, repr=False)

    @classmethod
    def identity(cls, m: int) -> "WeightSpec":
        return cls("identity", int(m))

    @classmethod
    def constant(cls, G) -> "WeightSpec":
        G = _frozen(np.atleast_2d(G))
        if G.shape[0] != G.shape[1]:
            raise ConfigError("weight matrix must be square")
        if not np.allclose(G, G.T, rtol=0, atol=1e-12 * (1 + np.abs(G).max())):
            raise ConfigError("weight matrix must be symmetric")
        if np.linalg.eigvalsh(G).min() <= SPD_TOL:
            raise ConfigError("weight matrix must be positive definite")
        return cls("constant", G.shape[0], G, None, cho_factor(np.array(G)))

    @classmethod
    def state_dependent(cls, fn: Callable, m: int) -> "WeightSpec":
        return cls("state", int(m), None, fn)

    @property
    def is_constant(self) -> bool:
        return self.kind in ("identity", "constant")

    def matrix(self, x) -> np.ndarray:
        if self.kind == "identity":
            return np.eye(self.m)
        if self.kind == "constant":
            return np.array(self.G)
        G = np.atleast_2d(np.asarray(self.evaluator(np.asarray(x, float)), float))
        if not np.allclose(G, G.T, atol=1e-12 * (1 + np.abs(G).max())):
            raise ConfigError("state-dependent weight is not symmetric")
        if np.linalg.eigvalsh(G).min() <= SPD_TOL:
            raise ConfigError("state-dependent weight is not positive definite")
        return G

    def solve(self, X: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Rows of G(x_i)^{-1} v_i for batches X (k, n) and V (k, m)."""
        if self.kind == "identity":
            return np.array(V, dtype=float)
        if self.kind == "constant":
            return cho_solve(self._chol, V.T).T
        out = np.empty_like(V, dtype=float)
        for i in range(V.shape[0]):
            out[i] = cho_solve(cho_factor(self.matrix(X[i])), V[i])
        return out

    def to_dict(self) -> dict:
        if self.kind == "identity":
            return {"kind": "identity"}
        if self.kind == "constant":
            return {"kind": "constant", "G": self.G.tolist()}
        raise ConfigError("state-dependent weights are not serializable")


# ---------------------------------------------------------------------------
# systems


def _cubic_damped_f(params):
    A = np.asarray(params["A"], float)
    c = float(params.get("c", 1.0))

    def f(X):
        return X @ A.T - c * np.sum(X * X, axis=1, keepdims=True) * X

    return f


BUILTIN_DRIFTS = {
    # x' = A x - c |x|^2 x + B u
    "cubic-damped": _cubic_damped_f,
}


@dataclass(frozen=True, eq=False)
class SystemDef:
    """Control-affine system x' = f(x) + g(x) u."""

    n: int
    m: int
    kind: str
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    family: Optional[str] = None
    params: dict = field(default_factory=dict)
    _f: Callable = field(default=None, repr=False)

    @classmethod
    def linear(cls, A, B) -> "SystemDef":
        A = _frozen(np.atleast_2d(A))
        B = np.asarray(B, float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        B = _frozen(B)
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n:
            raise ConfigError(f"inconsistent shapes A{A.shape} B{B.shape}")
        if np.linalg.matrix_rank(B, tol=RANK_TOL) < B.shape[1]:
            raise ConfigError("B must have full column rank")
        return cls(n, B.shape[1], "linear", A, B)

    @classmethod
    def builtin(cls, family: str, params: dict) -> "SystemDef":
        if family not in BUILTIN_DRIFTS:
            raise ConfigError(f"unknown system family {family!r}")
        A = _frozen(np.atleast_2d(params["A"]))
        B = np.asarray(params["B"], float)
        B = _frozen(B.reshape(-1, 1) if B.ndim == 1 else B)
        if np.linalg.matrix_rank(B, tol=RANK_TOL) < B.shape[1]:
            raise ConfigError("B must have full column rank")
        return cls(A.shape[0], B.shape[1], "builtin", A, B, family, dict(params),
                   BUILTIN_DRIFTS[family](params))

    @property
    def is_linear(self) -> bool:
        return self.kind == "linear"

    def f(self, x):
        X, single = _as_batch(x, self.n)
        out = X @ self.A.T if self.is_linear else self._f(X)
        return out[0] if single else out

    def g(self, x):
        X, single = _as_batch(x, self.n)
        out = np.broadcast_to(self.B, (X.shape[0], self.n, self.m))
        return np.array(out[0]) if single else out

    def to_dict(self) -> dict:
        if self.is_linear:
            return {"kind": "linear", "A": self.A.tolist(), "B": self.B.tolist()}
        p = {k: (np.asarray(v).tolist() if isinstance(v, (list, np.ndarray)) else v)
             for k, v in self.params.items()}
        return {"kind": "builtin", "family": self.family, "params": p}


# ---------------------------------------------------------------------------
# controllers


@dataclass(frozen=True, eq=False)
class ControllerDef:
    """Nominal controller.

    ``linear-gain`` means u = -K x, ``linear-feedback`` means u = +K x.
    ``saturated-gain`` is u = -umax * tanh(K x / umax).
    """

    kind: str
    K: np.ndarray
    params: dict = field(default_factory=dict)

    @classmethod
    def gain(cls, K) -> "ControllerDef":
        return cls("linear-gain", _frozen(np.atleast_2d(K)))

    @classmethod
    def feedback(cls, K) -> "ControllerDef":
        return cls("linear-feedback", _frozen(np.atleast_2d(K)))

    @classmethod
    def zero(cls, m: int, n: int) -> "ControllerDef":
        return cls.gain(np.zeros((m, n)))

    @classmethod
    def saturated(cls, K, umax: float) -> "ControllerDef":
        if not umax > 0:
            raise ConfigError("umax must be positive")
        return cls("builtin-nonlinear", _frozen(np.atleast_2d(K)),
                   {"family": "saturated-gain", "umax": float(umax)})

    @property
    def is_linear(self) -> bool:
        return self.kind in ("linear-gain", "linear-feedback")

    @property
    def gain_matrix(self) -> np.ndarray:
        """Matrix F with k(x) = F x for linear kinds."""
        return -np.array(self.K) if self.kind == "linear-gain" else np.array(self.K)

    def k(self, x):
        X, single = _as_batch(x)
        if self.is_linear:
            out = X @ self.gain_matrix.T
        else:
            umax = self.params["umax"]
            out = -umax * np.tanh(X @ np.asarray(self.K).T / umax)
        return out[0] if single else out

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "K": self.K.tolist()}
        if not self.is_linear:
            d.update(self.params)
        return d


# ---------------------------------------------------------------------------
# problem instance


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    system: SystemDef
    controller: ControllerDef
    barrier: "object"
    weight: WeightSpec
    alpha: ClassKInf
    origin_interior: bool = True
    name: str = ""

    def __post_init__(self):
        n, m = self.system.n, self.system.m
        if self.controller.K.shape != (m, n):
            raise ConfigError(f"controller gain has shape {self.controller.K.shape}, expected {(m, n)}")
        if self.weight.m != m:
            raise ConfigError(f"weight has size {self.weight.m}, expected {m}")
        if self.barrier.n != n:
            raise ConfigError(f"barrier lives in R^{self.barrier.n}, system in R^{n}")
        if self.origin_interior and not float(self.barrier.value(np.zeros(n))) > 0:
            raise ConfigError("origin is not in the interior of the safe set (h(0) <= 0)")

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def m(self) -> int:
        return self.system.m

    @property
    def is_linear(self) -> bool:
        return self.system.is_linear and self.controller.is_linear

    @property
    def closed_loop_matrix(self) -> np.ndarray:
        """A + B F for linear plant and linear controller k(x) = F x."""
        if not self.is_linear:
            raise ConfigError("closed-loop matrix needs a linear plant and controller")
        return np.array(self.system.A) + np.array(self.system.B) @ self.controller.gain_matrix

    @property
    def hurwitz(self) -> bool:
        return is_hurwitz(self.closed_loop_matrix)

    def input_metric(self) -> np.ndarray:
        """M = B G^{-1} B^T for constant B and G."""
        if not self.weight.is_constant:
            raise ConfigError("input metric needs a constant weight")
        B = np.array(self.system.B)
        # rows of B G^{-1}
        BGinv = self.weight.solve(np.zeros((self.n, self.n)), B)
        M = BGinv @ B.T
        return 0.5 * (M + M.T)

    def with_alpha(self, alpha: ClassKInf) -> "ProblemInstance":
        return ProblemInstance(self.system, self.controller, self.barrier, self.weight,
                               alpha, self.origin_interior, self.name)

    def with_weight(self, weight: WeightSpec) -> "ProblemInstance":
        return ProblemInstance(self.system, self.controller, self.barrier, weight,
                               self.alpha, self.origin_interior, self.name)

    def with_controller(self, controller: ControllerDef) -> "ProblemInstance":
        return ProblemInstance(self.system, controller, self.barrier, self.weight,
                               self.alpha, self.origin_interior, self.name)

    def to_dict(self) -> dict:
        return {
            "system": self.system.to_dict(),
            "controller": self.controller.to_dict(),
            "barrier": self.barrier.to_dict(),
            "alpha": self.alpha.to_dict(),
            "weight": self.weight.to_dict(),
            "origin_interior": self.origin_interior,
        }


def eval_f_tilde(inst: ProblemInstance, x):
    """Nominal closed loop f(x) + g(x) k(x)."""
    X, single = _as_batch(x, inst.n)
    if not np.all(np.isfinite(X)):
        raise ConfigError("state must be finite")
    if inst.is_linear:
        out = X @ inst.closed_loop_matrix.T
    else:
        G = inst.system.g(X)
        out = inst.system.f(X) + np.einsum("kij,kj->ki", G, inst.controller.k(X))
    return out[0] if single else out


def eval_eta(inst: ProblemInstance, x):
    """grad h(x)^T f~(x) + alpha(h(x))."""
    X, single = _as_batch(x, inst.n)
    ft = eval_f_tilde(inst, X)
    out = np.einsum("ki,ki->k", inst.barrier.grad(X), ft) + inst.alpha(inst.barrier.value(X))
    return out[0] if single else out
