"""Scenario documents: JSON parsing with field-path diagnostics, lossless
serialization, and construction of problem instances and initial conditions."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .barriers import barrier_from_dict
from .errors import ConfigError
from .model import ClassKInf, ControllerDef, ProblemInstance, SystemDef, WeightSpec
from .safety import TOL_SAFE
from .sim import IntegratorCfg

ANALYSES = ("simulate", "equilibria", "case-analysis", "bounded-tune", "unbounded-cert",
            "limit-cycle", "structure-check")
TOP_FIELDS = {"name", "description", "instance", "initial_conditions", "integrator", "analyses",
              "options", "expected", "controller_sampler"}


class ScenarioError(ConfigError):
    """Schema problem; ``where`` is a field path or a line/column."""

    def __init__(self, where: str, msg: str):
        self.where = where
        super().__init__(f"{where}: {msg}")


@dataclass
class Scenario:
    name: str
    instance: dict
    analyses: list
    initial_conditions: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    expected: Optional[dict] = None
    controller_sampler: Optional[dict] = None
    description: str = ""

    def to_dict(self) -> dict:
        d = {"name": self.name, "description": self.description, "instance": self.instance,
             "initial_conditions": self.initial_conditions, "integrator": self.integrator,
             "analyses": list(self.analyses), "options": self.options}
        if self.controller_sampler is not None:
            d["controller_sampler"] = self.controller_sampler
        if self.expected is not None:
            d["expected"] = self.expected
        return copy.deepcopy(d)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        validate(d)
        return cls(name=d["name"], instance=copy.deepcopy(d["instance"]),
                   analyses=list(d.get("analyses", [])),
                   initial_conditions=copy.deepcopy(d.get("initial_conditions", {})),
                   integrator=copy.deepcopy(d.get("integrator", {})),
                   options=copy.deepcopy(d.get("options", {})),
                   expected=copy.deepcopy(d.get("expected")),
                   controller_sampler=copy.deepcopy(d.get("controller_sampler")),
                   description=d.get("description", ""))

    # derived objects ------------------------------------------------------
    def build_instance(self) -> ProblemInstance:
        return build_instance(self.instance, name=self.name)

    def integrator_cfg(self, dt: Optional[float] = None, horizon: Optional[float] = None) -> IntegratorCfg:
        d = dict(self.integrator)
        if dt is not None:
            d["dt"] = dt
        if horizon is not None:
            d["T"] = horizon
        try:
            return IntegratorCfg(**{k: float(v) for k, v in d.items()})
        except TypeError as exc:
            raise ScenarioError("integrator", str(exc)) from None


# ---------------------------------------------------------------------------
# serialization


def _fmt_number(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        raise ConfigError("non-finite numbers cannot be serialized")
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "inf" not in s:
        s += ".0"
    return s


def _dump(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, int, float, np.integer, np.floating)):
        return _fmt_number(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_fmt_number(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _dump(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [pad + json.dumps(str(k)) + ": " + _dump(v, indent, level + 1) for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    raise ConfigError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _dump(obj, indent, 0) + "\n"


def dump_scenario(sc: Scenario) -> str:
    return dumps(sc.to_dict())


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}:{exc.lineno}:{exc.colno}", exc.msg) from None
    return Scenario.from_dict(d)


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {p}: {exc.strerror}") from None
    return parse_scenario(text, str(p))


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(dump_scenario(sc), encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# validation


def _need(d, key, path, kinds=None):
    if not isinstance(d, dict):
        raise ScenarioError(path, "expected an object")
    if key not in d:
        raise ScenarioError(f"{path}.{key}" if path else key, "missing required field")
    v = d[key]
    if kinds is not None and not isinstance(v, kinds):
        raise ScenarioError(f"{path}.{key}" if path else key, f"expected {_kind_name(kinds)}")
    return v


def _kind_name(kinds):
    names = {dict: "an object", list: "an array", str: "a string", bool: "a boolean"}
    if isinstance(kinds, tuple):
        return " or ".join(names.get(k, k.__name__) for k in kinds)
    return names.get(kinds, kinds.__name__)


def _matrix(v, path, rows=None, cols=None) -> np.ndarray:
    if not isinstance(v, list) or not v:
        raise ScenarioError(path, "expected a non-empty array")
    if all(isinstance(r, list) for r in v):
        width = len(v[0])
        for i, r in enumerate(v):
            if len(r) != width:
                raise ScenarioError(f"{path}[{i}]", f"row has {len(r)} entries, expected {width}")
            for j, x in enumerate(r):
                _number(x, f"{path}[{i}][{j}]")
    else:
        for i, x in enumerate(v):
            _number(x, f"{path}[{i}]")
    M = np.asarray(v, float)
    if rows is not None and M.shape[0] != rows:
        raise ScenarioError(path, f"expected {rows} rows, got {M.shape[0]}")
    if cols is not None and (M.ndim < 2 or M.shape[1] != cols):
        raise ScenarioError(path, f"expected {cols} columns")
    return M


def _number(x, path) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ScenarioError(path, "expected a number")
    if not math.isfinite(x):
        raise ScenarioError(path, "expected a finite number")
    return float(x)


def validate(d) -> None:
    if not isinstance(d, dict):
        raise ScenarioError("<root>", "scenario must be an object")
    unknown = set(d) - TOP_FIELDS
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown field")
    _need(d, "name", "", str)
    inst = _need(d, "instance", "", dict)
    an = d.get("analyses", [])
    if not isinstance(an, list):
        raise ScenarioError("analyses", "expected an array")
    for i, a in enumerate(an):
        if a not in ANALYSES:
            raise ScenarioError(f"analyses[{i}]", f"unknown analysis {a!r}; expected one of {list(ANALYSES)}")
    for key in ("initial_conditions", "integrator", "options"):
        if key in d and not isinstance(d[key], dict):
            raise ScenarioError(key, "expected an object")
    for k, v in d.get("integrator", {}).items():
        if k not in IntegratorCfg.__dataclass_fields__:
            raise ScenarioError(f"integrator.{k}", "unknown field")
        _number(v, f"integrator.{k}")
    if "expected" in d and d["expected"] is not None and not isinstance(d["expected"], dict):
        raise ScenarioError("expected", "expected an object")
    # building the instance runs the remaining checks with field paths
    build_instance(inst, _path="instance")
    if "controller_sampler" in d:
        cs = _need(d, "controller_sampler", "", dict)
        if cs.get("kind") != "random-stabilizing":
            raise ScenarioError("controller_sampler.kind", "expected 'random-stabilizing'")
        _number(_need(cs, "count", "controller_sampler"), "controller_sampler.count")
        _number(_need(cs, "seed", "controller_sampler"), "controller_sampler.seed")
    ic = d.get("initial_conditions", {})
    if ic:
        _validate_ics(ic, "initial_conditions")


def _validate_ics(ic, path):
    kinds = {"explicit", "box", "disk", "orbit", "certified-region"}
    k = _need(ic, "kind", path, str)
    if k not in kinds:
        raise ScenarioError(f"{path}.kind", f"unknown sampler {k!r}; expected one of {sorted(kinds)}")
    if k == "explicit":
        _matrix(_need(ic, "points", path), f"{path}.points")
    elif k == "box":
        _matrix(_need(ic, "lo", path), f"{path}.lo")
        _matrix(_need(ic, "hi", path), f"{path}.hi")
    elif k == "disk":
        _matrix(_need(ic, "center", path), f"{path}.center")
        _number(_need(ic, "radius", path), f"{path}.radius")
    if k != "explicit":
        _number(_need(ic, "count", path), f"{path}.count")


# ---------------------------------------------------------------------------
# construction


def build_instance(d: dict, name: str = "", _path: str = "instance") -> ProblemInstance:
    """ProblemInstance from its dictionary description (field paths in errors)."""
    p = _path
    sysd = _need(d, "system", p, dict)
    kind = _need(sysd, "kind", f"{p}.system", str)
    try:
        if kind == "linear":
            A = _matrix(_need(sysd, "A", f"{p}.system"), f"{p}.system.A")
            B = _matrix(_need(sysd, "B", f"{p}.system"), f"{p}.system.B")
            system = SystemDef.linear(A, B)
        elif kind == "builtin":
            system = SystemDef.builtin(_need(sysd, "family", f"{p}.system", str),
                                       _need(sysd, "params", f"{p}.system", dict))
        else:
            raise ScenarioError(f"{p}.system.kind", f"unknown value {kind!r}")
    except ScenarioError:
        raise
    except (ConfigError, KeyError, ValueError) as exc:
        raise ScenarioError(f"{p}.system", str(exc)) from None
    n, m = system.n, system.m

    cd = _need(d, "controller", p, dict)
    ck = _need(cd, "kind", f"{p}.controller", str)
    K = _matrix(_need(cd, "K", f"{p}.controller"), f"{p}.controller.K")
    K = K.reshape(m, n) if K.size == m * n else K
    if K.shape != (m, n):
        raise ScenarioError(f"{p}.controller.K", f"expected shape {(m, n)}, got {K.shape}")
    if ck == "linear-gain":
        ctrl = ControllerDef.gain(K)
    elif ck == "linear-feedback":
        ctrl = ControllerDef.feedback(K)
    elif ck == "builtin-nonlinear":
        ctrl = ControllerDef.saturated(K, _number(_need(cd, "umax", f"{p}.controller"), f"{p}.controller.umax"))
    else:
        raise ScenarioError(f"{p}.controller.kind", f"unknown value {ck!r}")

    try:
        barrier = barrier_from_dict(_need(d, "barrier", p, dict))
    except ConfigError as exc:
        raise ScenarioError(f"{p}.barrier", str(exc)) from None
    try:
        alpha = ClassKInf.from_dict(_need(d, "alpha", p, dict))
    except (ConfigError, KeyError) as exc:
        raise ScenarioError(f"{p}.alpha", str(exc)) from None

    wd = d.get("weight", {"kind": "identity"})
    wk = _need(wd, "kind", f"{p}.weight", str)
    try:
        if wk == "identity":
            weight = WeightSpec.identity(m)
        elif wk == "constant":
            weight = WeightSpec.constant(_matrix(_need(wd, "G", f"{p}.weight"), f"{p}.weight.G"))
        else:
            raise ScenarioError(f"{p}.weight.kind", f"unknown value {wk!r}")
    except ScenarioError:
        raise
    except ConfigError as exc:
        raise ScenarioError(f"{p}.weight", str(exc)) from None
    try:
        return ProblemInstance(system, ctrl, barrier, weight, alpha,
                               bool(d.get("origin_interior", True)), name)
    except ConfigError as exc:
        raise ScenarioError(p, str(exc)) from None


def sample_gains(sc: Scenario, inst: ProblemInstance, seed: Optional[int] = None) -> list:
    """Controllers drawn by the scenario's sampler (empty without one)."""
    from .planar import random_stabilizing_gain
    cs = sc.controller_sampler
    if not cs:
        return []
    rng = np.random.default_rng(int(cs["seed"] if seed is None else seed))
    return [random_stabilizing_gain(inst.system.A, inst.system.B, rng, float(cs.get("scale", 3.0)),
                                    float(cs.get("margin", 0.05))) for _ in range(int(cs["count"]))]


def initial_conditions(sc: Scenario, inst: ProblemInstance, seed: Optional[int] = None) -> np.ndarray:
    """Initial states; random samplers keep only points strictly inside the safe set."""
    ic = sc.initial_conditions
    if not ic:
        return np.zeros((0, inst.n))
    kind = ic["kind"]
    if kind == "explicit":
        X = np.atleast_2d(np.asarray(ic["points"], float))
        if X.shape[1] != inst.n:
            raise ScenarioError("initial_conditions.points", f"expected {inst.n}-vectors")
        h = inst.barrier.value(X)
        if np.any(h < -TOL_SAFE):
            i = int(np.argmin(h))
            raise ScenarioError(f"initial_conditions.points[{i}]",
                                f"point {X[i].tolist()} is outside the safe set (h = {h[i]:.6g})")
        return X
    count = int(ic["count"])
    rng = np.random.default_rng(int(ic.get("seed", 0) if seed is None else seed))
    if kind == "orbit":
        from .sim import sphere_obstacle_cycle
        orb = sphere_obstacle_cycle(**ic["orbit"])
        return np.atleast_2d(orb(np.linspace(0, orb.period, count, endpoint=False)))

    def draw(k):
        if kind == "box":
            lo, hi = np.asarray(ic["lo"], float), np.asarray(ic["hi"], float)
            return rng.uniform(lo, hi, (k, inst.n))
        if kind == "disk":
            c = np.asarray(ic["center"], float)
            r = float(ic["radius"]) * np.sqrt(rng.uniform(0, 1, k))
            if inst.n == 2:
                th = rng.uniform(0, 2 * np.pi, k)
                return c + r[:, None] * np.stack([np.cos(th), np.sin(th)], 1)
            U = rng.standard_normal((k, inst.n))
            return c + (r ** (2.0 / inst.n))[:, None] * U / np.linalg.norm(U, axis=1, keepdims=True)
        if kind == "certified-region":
            from .sim import unboundedness_certificate
            b = inst.barrier
            cert = unboundedness_certificate(inst.system.A, inst.system.B, b.normal, b.offset)
            if cert is None:
                raise ScenarioError("initial_conditions", "instance has no unboundedness certificate")
            lo, hi = np.asarray(ic["lo"], float), np.asarray(ic["hi"], float)
            Y = rng.uniform(lo, hi, (k, inst.n))
            return Y[cert.in_region(Y)]
        raise ScenarioError("initial_conditions.kind", f"unknown sampler {kind!r}")

    out = []
    for _ in range(1000):
        Y = draw(max(count, 16))
        if len(Y):
            out.extend(Y[inst.barrier.value(Y) > 0])
        if len(out) >= count:
            return np.array(out[:count])
    raise ScenarioError("initial_conditions", "sampler produced too few safe states")
