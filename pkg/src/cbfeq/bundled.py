"""Bundled scenarios reproducing the reference examples."""
from __future__ import annotations

import math

from .scenarios import Scenario


def _lin(A, B):
    return {"kind": "linear", "A": A, "B": B}


def _gain(K):
    return {"kind": "linear-gain", "K": K}


def _slope(a):
    return {"kind": "linear", "slope": a}


_SQ = math.sqrt(0.84)

_RAW = [
    {
        "name": "convex-bounded",
        "description": "Single integrator, disk safe set; a stable trap and a saddle on the boundary.",
        "instance": {
            "system": _lin([[0, 0], [0, 0]], [[1, 0], [0, 1]]),
            "controller": _gain([[5, -8], [2, -3]]),
            "barrier": {"family": "sphere", "center": [0, 2], "radius": math.sqrt(10), "sign": -1},
            "alpha": _slope(50),
        },
        "initial_conditions": {"kind": "explicit",
                               "points": [[2.9, 3.2], [1.0, 4.0], [-2.0, 3.0], [2.0, 0.5], [0.5, 1.0],
                                          [-1.0, 0.0], [2.3, 3.9], [-0.5, 4.5]]},
        "analyses": ["simulate", "equilibria", "structure-check"],
        "expected": {
            "equilibria": [
                {"point": [3, 3], "classification": "asymptotically-stable", "tol": 1e-6},
                {"point": [3.161, 2.123], "classification": "saddle", "tol": 2e-2},
            ],
            "count": 2,
            "structure": True,
            "trajectories": [{"index": 0, "verdict": "converged-to", "point": [3, 3], "tol": 1e-3}],
        },
    },
    {
        "name": "cassini-underactuated",
        "description": "Single-input plant inside a Cassini oval safe set.",
        "instance": {
            "system": _lin([[1.878, -6.247], [-3.189, 6.731]], [[4.166], [-8.172]]),
            "controller": _gain([[1.495, -1.515]]),
            "barrier": {"family": "cassini", "a": 6.587, "b": 6.591, "c1": -5, "c2": 0, "sign": -1},
            "alpha": _slope(50),
        },
        "initial_conditions": {"kind": "disk", "center": [5, 0], "radius": 3, "count": 20, "seed": 1},
        "analyses": ["simulate", "equilibria", "structure-check"],
        "expected": {
            "equilibria": [
                {"point": [5.431, 0.487], "classification": "asymptotically-stable", "tol": 2e-2},
                {"point": [4.651, 0.417], "classification": "saddle", "tol": 2e-2},
            ],
            "structure": True,
        },
    },
    {
        "name": "cassini-obstacle-integrator",
        "description": "Single integrator around a nonconvex Cassini obstacle.",
        "instance": {
            "system": _lin([[0, 0], [0, 0]], [[1, 0], [0, 1]]),
            "controller": {"kind": "linear-feedback", "K": [[-1, 0], [0, -1]]},
            "barrier": {"family": "cassini", "a": 3, "b": 3.15, "c1": 0, "c2": 4, "sign": 1},
            "alpha": _slope(10),
        },
        "initial_conditions": {"kind": "disk", "center": [0, 4], "radius": 7, "count": 30, "seed": 2},
        "analyses": ["simulate", "equilibria", "structure-check", "bounded-tune"],
        "options": {"bounded_tune": {"radius": 10}},
        "expected": {
            "equilibria": [
                {"point": [0, math.sqrt(3.15**2 - 9) + 4], "classification": "asymptotically-stable",
                 "tol": 1e-6},
            ],
            "count": 3,
            "structure": True,
        },
    },
    {
        "name": "cassini-obstacle-underactuated",
        "description": "Single-input plant around a nonconvex Cassini obstacle.",
        "instance": {
            "system": _lin([[0.268, 2.866], [0.151, 1.526]], [[0.35], [-0.151]]),
            "controller": _gain([[-41.72, -174.8]]),
            "barrier": {"family": "cassini", "a": 3.684, "b": 3.785, "c1": 6.891, "c2": 1.565, "sign": 1},
            "alpha": _slope(10),
        },
        "initial_conditions": {"kind": "disk", "center": [-6.9, 1.6], "radius": 8, "count": 30, "seed": 3},
        # high-gain loop with near-zero input authority at parts of the boundary
        "integrator": {"dt": 1e-4},
        "analyses": ["simulate", "equilibria", "structure-check"],
        "expected": {
            "equilibria": [
                {"point": [-7.062, 0.682], "classification": "saddle", "tol": 2e-2},
                {"point": [-2.197, 0.212], "classification": "saddle", "tol": 2e-2},
                {"point": [-6.519, 0.629], "classification": "asymptotically-stable", "tol": 2e-2},
            ],
            "count": 3,
            "structure": True,
        },
    },
    {
        "name": "union-circles",
        "description": "Tube obstacle around a half circle; the trap persists for every stabilizing gain. "
                       "With slope 1 the filter drives states started in the box outward, so runs escape.",
        "instance": {
            "system": _lin([[-0.169, -3], [-1.989, -1.4]], [[-2.355], [-1.707]]),
            "controller": _gain([[-3.323, 4.453]]),
            "barrier": {"family": "union-of-circles-example", "c1": 6.1, "c2": 10.027, "r1": 2.129},
            "alpha": _slope(1),
        },
        "controller_sampler": {"kind": "random-stabilizing", "count": 20, "seed": 7, "scale": 3.0,
                               "margin": 0.05},
        "initial_conditions": {"kind": "box", "lo": [-10, 0], "hi": [10, 20], "count": 30, "seed": 4},
        "analyses": ["simulate", "equilibria", "case-analysis", "structure-check"],
        "options": {"case": {"kind": "union-circles"}},
        "expected": {
            "equilibria": [
                {"point": [3.157, 7.619], "classification": "asymptotically-stable", "tol": 2e-2},
            ],
            "all_sampled_controllers": True,
            "preflight": True,
            "structure": True,
        },
    },
    {
        "name": "continuum",
        "description": "Flat boundary piece made entirely of undesired equilibria.",
        "instance": {
            "system": _lin([[0, -1], [1, -2]], [[0], [1]]),
            "controller": _gain([[0, 0]]),
            "barrier": {"family": "piecewise-example", "lo": -2, "hi": -1, "span": 4},
            "alpha": _slope(10),
        },
        "initial_conditions": {"kind": "box", "lo": [-4, 0], "hi": [2, 4], "count": 20, "seed": 5},
        "analyses": ["simulate", "equilibria"],
        "expected": {"continuum": {"start": [-2, 0], "end": [-1, 0], "tol": 1e-3}},
    },
    {
        "name": "limit-cycle-3d",
        "description": "Fully actuated 3-D linear system with a ball obstacle and a boundary periodic orbit.",
        "instance": {
            "system": _lin([[-1, 0, 0], [0, -6, 1], [0, -1, -6]], [[1, 0, 0], [0, 1, 0], [0, 0, 1]]),
            "controller": _gain([[0, 0, 0], [0, 0, 0], [0, 0, 0]]),
            "barrier": {"family": "sphere", "center": [2, 0, 0], "radius": 1, "sign": 1},
            "alpha": _slope(1),
        },
        "initial_conditions": {"kind": "explicit", "points": [[2.4, 0, _SQ], [2.4, _SQ, 0], [2.9, 0.2, 0.6]]},
        "analyses": ["simulate", "equilibria", "limit-cycle"],
        "options": {"limit_cycle": {"orbit": {"decay": 1, "damping": 6, "rotation": 1, "offset": 2, "radius": 1},
                                    "trajectory": 0}},
        "expected": {"limit_cycle": {"period": 2 * math.pi, "rel_tol": 1e-2, "residual_max": 1e-9}},
    },
]

_POLAR = [
    ("ellipse", {"p": 3, "q": 1}, [[-1.215, 1.985], [-1.027, -0.973]], [[-1.707], [-0.969]], [[-0.574, 2.556]]),
    ("cassini", {"scale": 3, "e": 1.03}, [[-0.954, -0.806], [1.257, -1.632]], [[0.4], [0.914]], [[-0.976, 2.321]]),
    ("rose", {"r0": 3, "amp": 2, "k": 3}, [[-0.103, 1.527], [-0.103, -1.012]], [[-0.832], [-0.312]],
     [[-1.969, -4.879]]),
]
for shape, params, A, B, K in _POLAR:
    _RAW.append({
        "name": f"polar-{shape}",
        "description": f"Single-input plant in a star-shaped safe set ({shape} radius profile).",
        "instance": {"system": _lin(A, B), "controller": _gain(K),
                     "barrier": {"family": "polar-radius", "shape": shape, "params": params},
                     "alpha": _slope(1)},
        "initial_conditions": {"kind": "disk", "center": [0, 0], "radius": 1.5, "count": 20, "seed": 6},
        "analyses": ["simulate", "equilibria", "case-analysis"],
        "options": {"case": {"kind": "polar", "random_instances": 20, "seed": 11}},
        "expected": {"count": 0, "polar": "no-undesired-equilibria"},
    })

_RAW += [
    {
        "name": "circle-underactuated-analytic",
        "description": "Single-input plant with a disk obstacle; closed-form equilibrium versus scan. "
                       "Slope 1 is below the boundedness threshold, so part of the runs escape.",
        "instance": {
            "system": _lin([[-0.078, -0.181], [0.668, 1.435]], [[-0.651], [1.175]]),
            "controller": _gain([[15.956, 14.4]]),
            "barrier": {"family": "sphere", "center": [-3.046, 2.243], "radius": 1.185, "sign": 1},
            "alpha": _slope(1),
        },
        "initial_conditions": {"kind": "disk", "center": [0, 0], "radius": 6, "count": 20, "seed": 8},
        "analyses": ["simulate", "equilibria", "case-analysis", "structure-check"],
        "options": {"case": {"kind": "underactuated-circle", "random_instances": 20, "seed": 12}},
        "expected": {
            "count": 1,
            "equilibria": [{"point": [-2.50206094, 1.19021545], "classification": "saddle", "tol": 1e-6}],
            "analytic_agreement": 1e-6,
            "structure": True,
        },
    },
    {
        "name": "halfplane-unbounded",
        "description": "Half-plane safe set with a certificate of unbounded solutions.",
        "instance": {
            "system": _lin([[1, 1], [0, 1]], [[0], [1]]),
            "controller": _gain([[4, 3]]),
            "barrier": {"family": "halfplane", "normal": [0, 1], "offset": -1},
            "alpha": _slope(1),
        },
        "initial_conditions": {"kind": "certified-region", "lo": [1, -1], "hi": [5, 3], "count": 20, "seed": 9},
        "analyses": ["simulate", "unbounded-cert"],
        "expected": {"unbounded": True},
    },
]


def bundled_scenarios() -> dict:
    return {d["name"]: Scenario.from_dict(d) for d in _RAW}


def bundled_names() -> list:
    return [d["name"] for d in _RAW]


def get_bundled(name: str) -> Scenario:
    for d in _RAW:
        if d["name"] == name:
            return Scenario.from_dict(d)
    from .errors import ConfigError
    raise ConfigError(f"no bundled scenario named {name!r}; available: {bundled_names()}")
