"""``pbgd`` command line: ``run``, ``rate-sweep`` and ``validate``."""

from __future__ import annotations

import argparse
import sys

from .. import __version__
from .commands import cmd_rate_sweep, cmd_run, cmd_validate


def _positive_int(text):
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if val < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return val


def _u64(text):
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an unsigned 64-bit integer, got {text!r}") from None
    if not 0 <= val < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed out of range: {text!r}")
    return val


def _add_global(p, suppress):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--output-dir", default=default, help="directory for result files "
                   "(overrides the config's output_dir)")
    p.add_argument("--jobs", type=_positive_int, default=argparse.SUPPRESS if suppress else 1,
                   help="worker processes for independent runs (default 1)")
    p.add_argument("--record-every", type=_positive_int, default=default,
                   help="record every n-th iterate (default: config value, else K/10000)")


def build_parser():
    parser = argparse.ArgumentParser(prog="pbgd", description="Bilevel experiments with "
                                     "perturbed gradient descent and baselines.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_global(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _add_global(common, suppress=True)
    p_run = sub.add_parser("run", parents=[common], help="run every (method, K) in a config")
    p_run.add_argument("config")
    p_sweep = sub.add_parser("rate-sweep", parents=[common], help="fit log-log rates over K_list")
    p_sweep.add_argument("config")
    p_val = sub.add_parser("validate", parents=[common], help="oracle and QP checks for a problem")
    p_val.add_argument("problem")
    p_val.add_argument("--seed", type=_u64, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args.problem, args.seed)
    cmd = cmd_run if args.command == "run" else cmd_rate_sweep
    return cmd(args.config, output_dir=args.output_dir, jobs=args.jobs,
               record_every=args.record_every)


if __name__ == "__main__":
    sys.exit(main())
