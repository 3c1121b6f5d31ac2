"""Command-line entry point: ``conedet <command> --config FILE [--out DIR]``."""
import argparse
import json
import logging
import sys

from . import harness
from .errors import ConeDetError

COMMANDS = {
    "spectrum": harness.run_spectrum,
    "det": harness.run_det,
    "mesh-info": harness.mesh_info,
    "verify-constancy": harness.run_constancy,
    "verify-binfty": harness.run_binfty,
    "verify-sumrule": harness.run_sumrule,
    "verify-perturbation": harness.run_perturbation,
}
PARALLEL = {"verify-constancy", "verify-binfty", "verify-sumrule", "verify-perturbation"}


def build_parser():
    ap = argparse.ArgumentParser(prog="conedet", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file (defaults are used when omitted)")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--mesh-cache", help="mesh file to reuse or create")
        p.add_argument("--workers", type=int, default=1, help="process-pool size")
        p.add_argument("--seed", type=int, help="seed for the Lanczos start vector")
        p.add_argument("--no-plot", action="store_true", help="skip SVG output")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = harness.load_config(args.config) if args.config else harness.load_config(text="")
        if args.seed is not None:
            cfg = cfg.with_values("experiment", seed=args.seed)
        fn = COMMANDS[args.command]
        if args.command in PARALLEL:
            res = fn(cfg, workers=args.workers, mesh_cache=args.mesh_cache)
        else:
            res = fn(cfg, mesh_cache=args.mesh_cache)
    except ConeDetError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    res.write(args.out, plot=not args.no_plot)
    print(json.dumps(harness._jsonable(res.summary), indent=2, sort_keys=True))
    if "passed" in res.summary:
        return 0 if res.summary["passed"] else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
