"""``icpd`` command line: run, demo-fig1, gradcheck, version.

Exit status: 0 success, 1 configuration error, 2 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__, kernels
from .harness.config import ConfigError, load_config
from .harness.train import NumericError
from .tensor import TensorError

log = logging.getLogger("icpd")


def _cmd_run(args) -> int:
    from .harness.train import run

    cfg = load_config(args.config)
    report = run(cfg, args.out)
    print(json.dumps({"final": report.final, "total_seconds": round(report.total_seconds, 3),
                      "out": str(args.out)}))
    return 0


def _cmd_demo(args) -> int:
    from .harness.demo import demo_fig1

    cfg = load_config(args.config)
    res = demo_fig1(cfg, args.out)
    print(json.dumps(res.summary(), sort_keys=True))
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    results = run_gradcheck(points=args.points, h=args.h, tol=args.tol, seed=args.seed)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:<22} max rel err {r.max_rel_err:.3e}"
              f"  ({r.points} points, tol {r.tol:g})")
    return 0 if all(r.ok for r in results) else 2


def _cmd_version(args) -> int:
    print(f"icpd {__version__} (kernels: {kernels.BACKEND})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icpd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train baseline + ICP self-distillation from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=".", help="directory for epochs.csv and report.json")
    r.set_defaults(func=_cmd_run)

    d = sub.add_parser("demo-fig1", help="i-FGSM vs ICP decision-boundary demo")
    d.add_argument("--config", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=_cmd_demo)

    g = sub.add_parser("gradcheck", help="finite-difference check of every primitive and loss")
    g.add_argument("--points", type=int, default=100)
    g.add_argument("--h", type=float, default=1e-5)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_cmd_gradcheck)

    v = sub.add_parser("version", help="print the package version")
    v.set_defaults(func=_cmd_version)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, TensorError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
