"""Command-line driver.

Exit codes: 0 ok, 1 expectation failure, 2 configuration error, 3 numerical failure.
Set CBFEQ_LOG (DEBUG, INFO, WARNING, ...) to change log verbosity.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError, NumericalError

EXIT_OK, EXIT_EXPECTATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _load(ref: str):
    from .bundled import bundled_names, get_bundled
    from .scenarios import load_scenario
    p = Path(ref)
    if p.exists():
        return load_scenario(p)
    if ref in bundled_names():
        return get_bundled(ref)
    raise ConfigError(f"{ref}: no such file or bundled scenario")


def _cmd_run(args):
    from .runner import run_scenario
    rep = run_scenario(_load(args.scenario), args.out, args.dt, args.horizon, args.seed)
    failed = {k: v for k, v in rep.analyses.items() if isinstance(v, dict) and "error" in v}
    for name in rep.analyses:
        status = "error: " + failed[name]["error"] if name in failed else "ok"
        print(f"{name}: {status}")
    print("wrote " + ", ".join(rep.manifest) + f" to {args.out}")
    if any(v.get("numerical") for v in failed.values()):
        return EXIT_NUMERICAL
    return EXIT_CONFIG if failed else EXIT_OK


def _cmd_equilibria(args):
    from .equilibria import ScanConfig, find_undesired_equilibria
    from .scenarios import dumps
    sc = _load(args.scenario)
    S = find_undesired_equilibria(sc.build_instance(), ScanConfig.from_dict(sc.options.get("scan")))
    sys.stdout.write(dumps(S.to_dict()))
    return EXIT_OK


def _cmd_verify(args):
    from .runner import verify
    checks = verify(_load(args.scenario), args.dt, args.horizon, args.seed)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}" + ("" if c.passed else f": {c.detail}"))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_EXPECTATION


def _cmd_list(args):
    from .bundled import bundled_scenarios
    for name, sc in bundled_scenarios().items():
        print(f"{name}\t{sc.description}")
    return EXIT_OK


def _cmd_export(args):
    from .bundled import get_bundled
    from .scenarios import save_scenario
    save_scenario(get_bundled(args.name), args.path)
    print(f"wrote {args.path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cbfeq", description="Undesired equilibria of safety-filtered closed loops.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario file or bundled scenario name")
        p.add_argument("--dt", type=float, default=None, help="integrator step [s]")
        p.add_argument("--horizon", type=float, default=None, help="integration horizon [s]")
        p.add_argument("--seed", type=int, default=None, help="override sampler seeds")

    p = sub.add_parser("run", help="run the requested analyses and write report files")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=_cmd_run)
    p = sub.add_parser("equilibria", help="print undesired equilibria as JSON")
    p.add_argument("scenario")
    p.set_defaults(fn=_cmd_equilibria)
    p = sub.add_parser("verify", help="check the scenario's expected results")
    common(p)
    p.set_defaults(fn=_cmd_verify)
    p = sub.add_parser("list-bundled", help="list bundled scenarios")
    p.set_defaults(fn=_cmd_list)
    p = sub.add_parser("export-bundled", help="write a bundled scenario to a file")
    p.add_argument("name")
    p.add_argument("path")
    p.set_defaults(fn=_cmd_export)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CBFEQ_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
