"""Compare the compiled and pure-Python RK4 kernels on bundled workloads.

    python3 benchmarks/bench_kernels.py [--reps 3] [--horizon 20]
"""
import argparse
import time

import numpy as np

from cbfeq import kernels, sim
from cbfeq.bundled import get_bundled
from cbfeq.scenarios import initial_conditions

WORKLOADS = ["convex-bounded", "cassini-obstacle-integrator", "union-circles", "continuum"]


def _args(name, horizon):
    sc = get_bundled(name)
    inst = sc.build_instance()
    X0 = initial_conditions(sc, inst)
    cfg = sim.IntegratorCfg(T=horizon)
    At, B, Ginv, slope, code, params = sim._kernel_args(inst)
    targets = np.zeros((1, inst.n))
    return (At, B, Ginv, slope, code, params, X0, cfg.dt, cfg.nsteps, cfg.stride, cfg.rmax, targets,
            cfg.eps_c), len(X0), cfg.nsteps


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--horizon", type=float, default=20.0)
    a = ap.parse_args(argv)
    impls = kernels.implementations()
    print(f"backends: {', '.join(impls)}")
    print(f"{'workload':32s} {'runs':>5s} {'steps':>7s} " + " ".join(f"{k:>12s}" for k in impls) + "  speedup")
    for name in WORKLOADS:
        args, k, nsteps = _args(name, a.horizon)
        best = {}
        finals = {}
        for key, mod in impls.items():
            times = []
            for _ in range(a.reps):
                t0 = time.perf_counter()
                out = mod.rk4_linear_batch(*args)
                times.append(time.perf_counter() - t0)
            best[key] = min(times)
            finals[key] = out[0][:, -1]
        cols = " ".join(f"{best[key]:11.3f}s" for key in impls)
        extra = ""
        if len(impls) == 2:
            diff = np.nanmax(np.abs(finals["compiled"] - finals["python"]))
            extra = f"  {best['python'] / best['compiled']:6.1f}x  (max final-state diff {diff:.1e})"
        print(f"{name:32s} {k:5d} {nsteps:7d} {cols}{extra}")


if __name__ == "__main__":
    main()
