"""Command line entry points.

``branchopt run`` executes the optimization loop and writes all artifacts;
``branchopt validate`` checks the decomposition and load balance of a
config without running anything; ``branchopt report`` re-renders the PNG
figures from a finished run directory.  Exit codes: 0 success/converged,
2 when the iteration cap was reached without convergence, 1 on any error.
"""

from __future__ import annotations

import argparse
import sys

from .assembly import check_load_compatibility
from .config import load_run_config
from .errors import BranchoptError

__all__ = ["build_parser", "main"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="branchopt",
        description="Compliance shape optimization on branching-periodic "
                    "subdomain patterns.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the descent and write artifacts")
    run.add_argument("--config", required=True, help="run config JSON")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--max-iters", type=int, default=None,
                     help="override the outer iteration cap")
    run.add_argument("--tol", type=float, default=None,
                     help="override the L2 stopping threshold")
    run.add_argument("--warm-start", action="store_true",
                     help="keep the previous phase field between iterations")

    val = sub.add_parser(
        "validate", help="check decomposition and load compatibility")
    val.add_argument("--config", required=True, help="run config JSON")

    rep = sub.add_parser(
        "report", help="re-render figures from a finished run directory")
    rep.add_argument("--dir", required=True, help="run output directory")
    return parser


def _cmd_validate(args) -> int:
    cfg = load_run_config(args.config)
    check_load_compatibility(cfg.decomposition, cfg.loads)
    dec = cfg.decomposition
    refs = sorted({s.reference for s in dec.subdomains})
    sides = ", ".join(bl.side for bl in cfg.loads.loads) or "none"
    print(f"ok: {len(dec.subdomains)} subdomains, {len(refs)} references, "
          f"loaded sides: {sides}")
    return 0


def _cmd_run(args) -> int:
    from .driver import alternate_descent
    from .fieldsio import write_outputs

    cfg = load_run_config(args.config)
    if args.max_iters is not None:
        cfg.max_iters = args.max_iters
    if args.tol is not None:
        cfg.stop_tol = args.tol
    if args.warm_start:
        cfg.warm_start = True

    report = alternate_descent(cfg)
    write_outputs(report, args.out)
    last = report.records[-1]
    state = "converged" if report.converged else "iteration cap reached"
    print(f"{state} after {last.iteration} iterations: "
          f"J={last.total:.10g} (E={last.elastic:.6g}, V={last.volume:.6g}, "
          f"L={last.perimeter:.6g}), dv={last.dv_l2:.3e}")
    print(f"artifacts written to {args.out}")
    return 0 if report.converged else 2


def _cmd_report(args) -> int:
    from .fieldsio import render_report

    paths = render_report(args.dir)
    for name in sorted(paths):
        print(f"rendered {paths[name]}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "report":
            return _cmd_report(args)
        return _cmd_run(args)
    except (BranchoptError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
