"""Command-line entry point.

Exit codes: 0 when every check passes, 1 when an audit or study check fails,
2 for infrastructure errors (bad configuration, unreadable files, crashes).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .errors import ConfigError, CritnsError
from .harness import Overrides, default_suite_path, load_suite, resolve_threads, run_specs

logger = logging.getLogger("critns")

SUBCOMMANDS = ("simulate", "audit", "scaling-check", "profiles", "contraction-demo", "pressure", "compactness")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="critns", description="Critical-norm Navier-Stokes experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="suite INI file (default: the bundled suite)")
    common.add_argument("--output", type=str, default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="base seed for random data")
    common.add_argument("--grid", type=int, default=None, help="override the mode count of every scenario")
    common.add_argument("--horizon", type=float, default=None, help="override every scenario horizon")
    common.add_argument("--threads", type=int, default=None, help="worker processes (else CRITNS_THREADS)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "solve every scenario and write trajectories and norm tables",
        "audit": "solve every scenario and run its audits",
        "scaling-check": "critical-norm invariance of each scenario datum under rescaling",
        "profiles": "orthogonality sweeps for two-bubble superpositions",
        "contraction-demo": "scalar fixed-point suite against the closed form",
        "pressure": "pressure of each initial datum",
        "compactness": "similarity frame and renormalized distances per scenario",
    }
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "compactness":
            sp.add_argument("--samples", type=int, default=5)
            sp.add_argument("--no-normalize", action="store_true", help="keep raw amplitudes")
    return parser


def _run(args: argparse.Namespace) -> int:
    from . import tasks

    ov = Overrides(args.output, args.seed, args.grid, args.horizon, args.threads)
    cfg = load_suite(args.config or default_suite_path(), ov)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    if args.command in ("simulate", "audit"):
        summary = run_specs(cfg.scenarios, out, resolve_threads(args.threads, cfg.threads),
                            run_audits=args.command == "audit")
        for m in summary.manifests:
            print(f"{m.scenario}: {m.status}" + (f" ({m.error})" if m.error else ""))
            for a in m.audits:
                print(f"  {a.name}: {'pass' if a.passed else 'FAIL'} value={a.value:.3e} bound={a.bound:.3e}")
        return summary.exit_code
    if args.command == "contraction-demo":
        ok = tasks.contraction_demo(out)
    elif args.command == "scaling-check":
        ok = tasks.scaling_check(cfg.scenarios, out)
    elif args.command == "profiles":
        opts = cfg.extra.get("profiles", {})
        try:
            grid_n = args.grid or int(opts.get("grid", 128))
            rw = float(opts.get("ratio_width", 1.0))
            sw = float(opts.get("separation_width", 0.3))
        except ValueError as exc:
            raise ConfigError(f"[profiles] {exc}") from None
        ok = tasks.profile_study(out, grid_n, rw, sw)
    elif args.command == "pressure":
        ok = tasks.pressure_report(cfg.scenarios, out)
    else:
        ok = tasks.compactness_report(cfg.scenarios, out, args.samples, not args.no_normalize)
    print(f"{args.command}: {'pass' if ok else 'FAIL'} -> {out}")
    return 0 if ok else 1


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (CritnsError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
