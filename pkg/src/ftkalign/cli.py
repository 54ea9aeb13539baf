"""Command-line interface: ``ftkalign {gen,plan,align,bench,accuracy,svd-report}``.

Exit codes: 0 on success, 2 for configuration errors and 3 for numerical
failures (failed self-checks, ill-conditioning or a violated error bound).
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import harness
from .engines import ResolutionError
from .interpolation import ConditioningError
from .kernel import PlanError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ftkalign", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=64, help="pixels per side")
    common.add_argument("--W", type=float, default=2.0, help="maximum shift in wavelengths")
    common.add_argument("--eps", type=float, default=1e-2, help="SVD truncation tolerance")
    common.add_argument("--engine", choices=harness.ENGINES, default="ftk")
    common.add_argument("--spacing", default="half",
                        help="shift lattice pitch: half, quarter or a number")
    common.add_argument("--ngamma", type=int, default=None, help="rotations (default 2Q)")
    common.add_argument("--nim", type=int, default=10, help="images and templates")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="dataset / output directory")
    common.add_argument("--threads", type=int, default=None,
                        help="BLAS/FFT thread limit (1 for clean timings)")
    common.add_argument("--plan-cache", default=None, help="plan file (default <out>/plan.ftk)")

    g = sub.add_parser("gen", parents=[common], help="write a synthetic dataset")
    g.add_argument("--offgrid", action="store_true",
                   help="draw ground truth off the alignment grids")
    sub.add_parser("plan", parents=[common], help="build or load the FTK plan")
    a = sub.add_parser("align", parents=[common], help="align every image against every template")
    a.add_argument("--verify", action="store_true",
                   help="check FTK against BFT and the certified bound")
    a.add_argument("--no-grids", action="store_true", help="skip writing landscape files")
    a.add_argument("--self-test", action="store_true",
                   help="check that M = n radial rings resolve X before aligning")
    b = sub.add_parser("bench", parents=[common], help="timing sweep over the shift radius")
    b.add_argument("--fractions", default="0.4,0.55,0.75,1.0",
                   help="shift-disk radii as fractions of D")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--engines", default="ftk,bft,bfr")
    sub.add_parser("accuracy", parents=[common], help="error-vs-H and error-vs-shift tables")
    sub.add_parser("svd-report", parents=[common], help="dump (l, eta, Sigma) as CSV")
    return p


def _config(args) -> harness.RunConfig:
    return harness.RunConfig(n=args.n, W=args.W, eps=args.eps, spacing=args.spacing,
                             ngamma=args.ngamma, engine=args.engine, nim=args.nim,
                             seed=args.seed, out=args.out, threads=args.threads,
                             plan_cache=args.plan_cache,
                             offgrid=getattr(args, "offgrid", False))


def run(args) -> int:
    cfg = _config(args)
    if args.command == "gen":
        rows = harness.cmd_gen(cfg)
        print(f"wrote {len(rows)} images to {cfg.out}")
    elif args.command == "plan":
        harness.cmd_plan(cfg)
    elif args.command == "align":
        rows = harness.cmd_align(cfg, verify=args.verify, write_grids=not args.no_grids,
                                 self_test=args.self_test)
        if not all(r["match"] for r in rows):
            print("warning: some images did not match their ground truth", file=sys.stderr)
    elif args.command == "bench":
        try:
            fr = [float(x) for x in args.fractions.split(",")]
        except ValueError:
            raise harness.ConfigError("--fractions must be comma-separated numbers") from None
        engines = tuple(e for e in args.engines.split(",") if e)
        if not engines or any(e not in harness.ENGINES for e in engines):
            raise harness.ConfigError(f"--engines must be drawn from {harness.ENGINES}")
        recs = harness.cmd_bench(cfg, fr, engines, args.repeats)
        for r in recs:
            print(f"{r.engine:4s} N={r.N:6d} pair={r.pair_s:.4g}s rms={r.rms_error:.2e}")
    elif args.command == "accuracy":
        res = harness.cmd_accuracy(cfg)
        for r in res["ratio"]:
            print(f"W={r['W']}: FTK {r['ftk_terms']} terms, linear {r['linear_nodes']} nodes, "
                  f"ratio {r['ratio']:.1f}")
    elif args.command == "svd-report":
        print(harness.cmd_svd_report(cfg))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    limit = threadpool_limits(args.threads) if args.threads else contextlib.nullcontext()
    try:
        with limit, np.errstate(over="raise", invalid="raise"):
            return run(args)
    except harness.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (PlanError, ConditioningError, ResolutionError, harness.BoundViolation,
            FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
