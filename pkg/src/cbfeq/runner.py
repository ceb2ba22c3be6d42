"""Scenario execution, report files and expectation checks."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .barriers import safe_set_topology
from .equilibria import ScanConfig, StructureInapplicable, check_count_structure, find_undesired_equilibria
from .errors import ConfigError, NumericalError
from .model import ControllerDef
from .scenarios import Scenario, dumps, initial_conditions, sample_gains
from . import sim

log = logging.getLogger("cbfeq")

CSV_HEADER_BASE = ["t"]


@dataclass
class Report:
    scenario: str
    analyses: dict = field(default_factory=dict)
    trajectories: list = field(default_factory=list)
    equilibria: Optional[dict] = None
    manifest: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "analyses": self.analyses, "trajectories": self.trajectories,
                "equilibria": self.equilibria, "manifest": self.manifest, "timings": self.timings}


# ---------------------------------------------------------------------------
# analyses


def _scan_cfg(sc: Scenario) -> ScanConfig:
    return ScanConfig.from_dict(sc.options.get("scan"))


def _equilibria(sc, inst, ctx):
    S = find_undesired_equilibria(inst, _scan_cfg(sc))
    ctx["eqset"] = S
    out = S.to_dict()
    gains = sample_gains(sc, inst, ctx.get("seed"))
    if gains:
        per = []
        for K in gains:
            Si = find_undesired_equilibria(inst.with_controller(ControllerDef.gain(K)), _scan_cfg(sc))
            per.append({"K": K.tolist(), "undesired": [r.to_dict() for r in Si.actual]})
        out["sampled_controllers"] = per
    return out


def _simulate(sc, inst, ctx):
    X0 = initial_conditions(sc, inst, ctx.get("seed"))
    cfg = ctx["cfg"]
    eqs = None
    if "eqset" in ctx:
        S = ctx["eqset"]
        eqs = sim.default_equilibria(inst, cfg.eps_c) if S.continua else [r.point for r in S.actual]
    trajs = sim.integrate_batch(inst, X0, cfg, eqs) if len(X0) else []
    ctx["trajs"] = trajs
    return {"count": len(trajs), "backend": sim.kernels.BACKEND if sim.uses_kernel(inst) else "numpy-generic",
            "dt": cfg.dt, "horizon": cfg.T,
            "verdicts": {k: sum(t.verdict.kind == k for t in trajs)
                         for k in ("converged-to", "diverged", "cycling", "undetermined")},
            "min_h": min((t.min_h for t in trajs), default=None)}


def _case(sc, inst, ctx):
    from . import planar
    opt = sc.options.get("case", {})
    kind = opt.get("kind")
    if kind == "union-circles":
        b = inst.barrier
        gains = [np.asarray(inst.controller.K)] + sample_gains(sc, inst, ctx.get("seed"))
        cond = planar.union_circles_conditions(inst.system.A, inst.system.B, b.c1, b.c2, b.r1,
                                               inst.alpha.slope0)
        ok = all(cond["feasibility"].values()) and cond["active_filter"] and cond["stable"]
        return {"kind": kind, "conditions": _jsonable(cond), "preflight": bool(ok), "gains_checked": len(gains)}
    if kind == "polar":
        res = [planar.polar_safe_set_check(inst, _scan_cfg(sc)).to_dict()]
        n = int(opt.get("random_instances", 0))
        rng = np.random.default_rng(int(opt.get("seed", 0)))
        b = inst.barrier
        for _ in range(n):
            ri = planar.random_polar_instance(b.shape, b.params, rng, inst.alpha.slope0)
            res.append(planar.polar_safe_set_check(ri).to_dict())
        return {"kind": kind, "checks": res,
                "all_empty": all(r["verdict"] == "no-undesired-equilibria" for r in res)}
    if kind == "underactuated-circle":
        rows = []
        insts = [planar.PlanarLinearInstance(inst.system.A, inst.system.B, inst.controller.K,
                                             inst.barrier.center, inst.barrier.radius, inst.alpha.slope0)]
        rng = np.random.default_rng(int(opt.get("seed", 0)))
        insts += [planar.random_underactuated_circle(rng, inst.alpha.slope0)
                  for _ in range(int(opt.get("random_instances", 0)))]
        for pli in insts:
            rec = planar.underactuated_circle_equilibrium(pli)
            S = find_undesired_equilibria(pli.to_problem())
            err = min((float(np.linalg.norm(r.point - rec.point)) for r in S.actual), default=np.inf)
            rows.append({"formula": rec.to_dict(), "scan_count": len(S.actual), "max_error": err,
                         "scan_classes": [r.classification for r in S.actual]})
        return {"kind": kind, "instances": rows, "max_error": max(r["max_error"] for r in rows)}
    if kind == "disk":
        Atil = inst.closed_loop_matrix
        return {"kind": kind, "report": planar.disk_case_analysis(
            Atil, inst.barrier.center, inst.barrier.radius, inst.alpha.slope0).to_dict()}
    raise ConfigError(f"options.case.kind: unknown value {kind!r}")


def _bounded(sc, inst, ctx):
    opt = sc.options.get("bounded_tune", {})
    tun = sim.tune_alpha_for_boundedness(inst, float(opt.get("radius", 10.0)))
    out = tun.to_dict()
    if not tun.compact:
        from .model import ClassKInf
        tuned = inst.with_alpha(ClassKInf.linear(tun.slope))
        rng = np.random.default_rng(int(opt.get("seed", 0)))
        R = float(opt.get("radius", 10.0))
        pts = []
        while len(pts) < int(opt.get("count", 20)):
            th = rng.uniform(0, 2 * np.pi) if inst.n == 2 else None
            x = R * np.sqrt(rng.uniform()) * np.array([np.cos(th), np.sin(th)]) if th is not None else \
                R * rng.uniform(-1, 1, inst.n) / np.sqrt(inst.n)
            if inst.barrier.value(x) > 0:
                pts.append(x)
        cfg = ctx["cfg"]
        trajs = sim.integrate_batch(tuned, np.array(pts), cfg, detect_cycles=False)
        inside = [bool(np.all(tun.in_region(t.states))) for t in trajs]
        out["stay_inside"] = all(inside)
        out["trajectories_checked"] = len(inside)
    return out


def _unbounded(sc, inst, ctx):
    b = inst.barrier
    if b.family != "halfplane":
        raise ConfigError("unbounded-cert needs a half-plane barrier")
    cert = sim.unboundedness_certificate(inst.system.A, inst.system.B, b.normal, b.offset)
    if cert is None:
        return {"certificate": None}
    out = {"certificate": cert.to_dict()}
    trajs = ctx.get("trajs")
    if trajs:
        grow = [bool(np.all(np.diff(t.states @ cert.c) > 0)) for t in trajs]
        out["monotone_growth"] = all(grow)
        out["all_escaped"] = all(t.verdict.kind == "diverged" for t in trajs)
    return out


def _limit_cycle(sc, inst, ctx):
    opt = sc.options.get("limit_cycle", {})
    orb = sim.sphere_obstacle_cycle(**opt["orbit"])
    out = {"residual": sim.verify_periodic_orbit(inst, orb, orb.period), "analytic_period": orb.period,
           "center": orb.center.tolist(), "radius": float(np.linalg.norm(orb.u))}
    trajs = ctx.get("trajs")
    if trajs is None:
        trajs = sim.integrate_batch(inst, orb(0.0)[None], ctx["cfg"])
    tr = trajs[int(opt.get("trajectory", 0))]
    eqs = [r.point for r in ctx["eqset"].actual] if "eqset" in ctx else []
    cyc = sim.detect_limit_cycle(tr, [np.zeros(inst.n)] + eqs, ctx["cfg"].eps_r)
    out["detected_period"] = None if cyc is None else cyc.period
    return out


def _structure(sc, inst, ctx):
    S = ctx.get("eqset") or find_undesired_equilibria(inst, _scan_cfg(sc))
    topo = safe_set_topology(inst.barrier)
    if topo == "unbounded-boundary":
        raise StructureInapplicable("structure check needs a bounded obstacle or a compact safe set")
    if any(r.classification == "degenerate" for r in S.actual) or S.continua:
        raise StructureInapplicable("non-hyperbolic or non-isolated equilibria present")
    out = check_count_structure(S.actual, topo).to_dict()
    gains = sample_gains(sc, inst, ctx.get("seed"))
    if gains:
        outs = [check_count_structure(find_undesired_equilibria(
            inst.with_controller(ControllerDef.gain(K)), _scan_cfg(sc)).actual, topo).passed for K in gains]
        out["sampled_controllers_passed"] = all(outs)
    return out


_ORDER = ["equilibria", "simulate", "case-analysis", "bounded-tune", "unbounded-cert", "limit-cycle",
          "structure-check"]
_FUNCS = {"equilibria": _equilibria, "simulate": _simulate, "case-analysis": _case,
          "bounded-tune": _bounded, "unbounded-cert": _unbounded, "limit-cycle": _limit_cycle,
          "structure-check": _structure}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


def analyze(sc: Scenario, dt=None, horizon=None, seed=None) -> tuple:
    """Run the requested analyses; returns (report, context)."""
    inst = sc.build_instance()
    ctx = {"cfg": sc.integrator_cfg(dt, horizon), "seed": seed}
    rep = Report(sc.name)
    for name in _ORDER:
        if name not in sc.analyses:
            continue
        t0 = time.perf_counter()
        try:
            rep.analyses[name] = _jsonable(_FUNCS[name](sc, inst, ctx))
        except (ConfigError, NumericalError) as exc:
            log.warning("%s: %s failed: %s", sc.name, name, exc)
            rep.analyses[name] = {"error": str(exc), "type": type(exc).__name__,
                                  "numerical": isinstance(exc, NumericalError)}
        rep.timings[name] = time.perf_counter() - t0
    if "eqset" in ctx:
        rep.equilibria = rep.analyses.get("equilibria")
    if "trajs" in ctx:
        rep.trajectories = [_jsonable(t.summary()) for t in ctx["trajs"]]
    ctx["inst"] = inst
    return rep, ctx


# ---------------------------------------------------------------------------
# files


def write_csv(path: Path, trajs, n: int) -> list:
    """Concatenated runs; the time column restarts at 0 for each run.
    Returns the [start, stop) data-row range of every run."""
    cols = ["t"] + [f"x{i + 1}" for i in range(n)] + ["h", "eta", "u_norm"]
    ranges, row = [], 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for tr in trajs:
            block = np.column_stack([tr.t, tr.states, tr.h, tr.eta, tr.u_norm])
            for r in block:
                fh.write(",".join(format(float(v), ".17g") for v in r) + "\n")
            ranges.append([row, row + len(block)])
            row += len(block)
    return ranges


def run_scenario(sc: Scenario, out_dir, dt=None, horizon=None, seed=None) -> Report:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep, ctx = analyze(sc, dt, horizon, seed)
    inst = ctx["inst"]
    if "trajs" in ctx:
        ranges = write_csv(out / "trajectories.csv", ctx["trajs"], inst.n)
        for s, r in zip(rep.trajectories, ranges):
            s["csv_rows"] = r
        rep.manifest.append("trajectories.csv")
    if rep.equilibria is not None:
        (out / "equilibria.json").write_text(dumps(rep.equilibria), encoding="utf-8", newline="\n")
        rep.manifest.append("equilibria.json")
    if "trajs" in ctx or "eqset" in ctx:
        from .svgplot import phase3d_svg, phase_svg
        paths = [t.states for t in ctx.get("trajs", [])]
        eqs = [r.to_dict() for r in ctx["eqset"].actual] if "eqset" in ctx else []
        try:
            if inst.n == 2:
                (out / "phase.svg").write_text(phase_svg(inst.barrier, paths, eqs, sc.name), encoding="utf-8")
                rep.manifest.append("phase.svg")
            elif inst.n == 3:
                (out / "phase3d.svg").write_text(phase3d_svg(inst.barrier, paths, eqs, sc.name),
                                                 encoding="utf-8")
                rep.manifest.append("phase3d.svg")
        except (ConfigError, NumericalError) as exc:
            rep.analyses["plot"] = {"error": str(exc), "type": type(exc).__name__}
    rep.manifest.append("report.json")
    (out / "report.json").write_text(dumps(rep.to_dict()), encoding="utf-8", newline="\n")
    return rep


# ---------------------------------------------------------------------------
# expectations


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


def _match_equilibria(expected, undesired, label) -> list:
    checks = []
    for e in expected:
        p = np.asarray(e["point"], float)
        tol = float(e.get("tol", 1e-6))
        best, cls = None, None
        for r in undesired:
            d = float(np.linalg.norm(np.asarray(r["point"]) - p))
            if best is None or d < best:
                best, cls = d, r["classification"]
        ok = best is not None and best <= tol and cls == e["classification"]
        detail = ("no undesired equilibria found" if best is None else
                  f"nearest at distance {best:.3e} (tol {tol:g}), classification {cls!r} "
                  f"vs expected {e['classification']!r}")
        checks.append(Check(f"{label}equilibrium {p.tolist()}", ok, detail))
    return checks


def verify(sc: Scenario, dt=None, horizon=None, seed=None) -> list:
    if not sc.expected:
        raise ConfigError("missing-expectations: scenario has no expected-results block")
    exp = sc.expected
    rep, ctx = analyze(sc, dt, horizon, seed)
    checks = []
    for name, res in rep.analyses.items():
        if isinstance(res, dict) and "error" in res:
            checks.append(Check(f"analysis {name}", False, res["error"]))
    eq = rep.analyses.get("equilibria", {})
    und = eq.get("undesired", []) if isinstance(eq, dict) else []
    if "equilibria" in exp:
        checks += _match_equilibria(exp["equilibria"], und, "")
        if exp.get("all_sampled_controllers"):
            for i, row in enumerate(eq.get("sampled_controllers", [])):
                checks += _match_equilibria(exp["equilibria"], row["undesired"], f"K#{i} ")
    if "count" in exp:
        checks.append(Check("undesired count", len(und) == exp["count"], f"found {len(und)}, expected {exp['count']}"))
    if "structure" in exp:
        st = rep.analyses.get("structure-check", {})
        ok = st.get("passed") == exp["structure"] and st.get("sampled_controllers_passed", True)
        checks.append(Check("count structure", bool(ok), str(st)))
    if "continuum" in exp:
        c = exp["continuum"]
        tol = float(c.get("tol", 1e-3))
        found = [k for k in eq.get("continua", []) if
                 np.linalg.norm(np.asarray(k["start"]) - c["start"]) <= tol and
                 np.linalg.norm(np.asarray(k["end"]) - c["end"]) <= tol]
        checks.append(Check("continuum diagnosis", bool(found), str(eq.get("continua"))))
    if "trajectories" in exp:
        for e in exp["trajectories"]:
            s = rep.trajectories[e["index"]] if e["index"] < len(rep.trajectories) else None
            ok = s is not None and s["verdict"]["kind"] == e["verdict"]
            if ok and "point" in e:
                ok = np.linalg.norm(np.asarray(s["verdict"]["point"]) - e["point"]) <= e.get("tol", 1e-3)
            checks.append(Check(f"trajectory {e['index']}", bool(ok), str(s and s["verdict"])))
    if "limit_cycle" in exp:
        lc, e = rep.analyses.get("limit-cycle", {}), exp["limit_cycle"]
        per = lc.get("detected_period")
        checks.append(Check("orbit residual", lc.get("residual", np.inf) <= e["residual_max"], str(lc.get("residual"))))
        checks.append(Check("detected period", per is not None and abs(per - e["period"]) <= e["rel_tol"] * e["period"],
                            f"detected {per}, expected {e['period']}"))
    if "preflight" in exp:
        ca = rep.analyses.get("case-analysis", {})
        checks.append(Check("preflight conditions", ca.get("preflight") == exp["preflight"], str(ca.get("conditions"))))
    if "polar" in exp:
        ca = rep.analyses.get("case-analysis", {})
        checks.append(Check("polar verdicts", bool(ca.get("all_empty")), str([c.get("verdict") for c in ca.get("checks", [])])))
    if "analytic_agreement" in exp:
        ca = rep.analyses.get("case-analysis", {})
        me = ca.get("max_error")
        ok = me is not None and me <= exp["analytic_agreement"] and all(
            r["scan_count"] == 1 and r["scan_classes"] == ["saddle"] for r in ca.get("instances", []))
        checks.append(Check("formula vs scan", bool(ok), f"max error {me}"))
    if "unbounded" in exp:
        ub = rep.analyses.get("unbounded-cert", {})
        ok = ub.get("certificate") is not None and ub.get("monotone_growth") and ub.get("all_escaped")
        checks.append(Check("unbounded runs", bool(ok) == exp["unbounded"], str(ub)))
    return checks
