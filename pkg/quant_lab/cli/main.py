"""
Command-line entry point: ``qlab <command> [flags]``.

Exit codes: 0 pass, 1 bound violation, 2 usage error, 3 numerical error.
"""

import argparse
import json
import sys

from quant_lab.cli.experiment import COMMANDS, ExperimentSpec, run
from quant_lab.quantizers.registry import quantizers
from quant_lab.utils.errors import QuantLabError
from quant_lab.utils.logger import logger

EXIT_PASS = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def lambda_value(text):
    if text == "auto":
        return text
    try:
        value = float(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected a real or 'auto', got '{text}'") from e
    if value < 0:
        raise argparse.ArgumentTypeError("lambda must be nonnegative")
    return value


def bits_value(text):
    if text == "inf":
        return None
    try:
        value = int(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected an integer or 'inf', got '{text}'") from e
    if value < 1:
        raise argparse.ArgumentTypeError("bits must be at least 1")
    return value


def seed_value(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def probability_value(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("eps must lie strictly between 0 and 1")
    return value


def size_list(text):
    return [int(part) for part in text.split(",") if part.strip()]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--x", help="calibration matrix X (m x N)")
    common.add_argument("--w", help="weights (N x N')")
    common.add_argument("--x-tilde", dest="x_tilde", help="drifted input matrix for qronos")
    common.add_argument("--unseen", help="held-out rows Z for the generalization split")
    common.add_argument("--format", dest="fmt", choices=["csv", "raw"])
    common.add_argument("--method", choices=sorted(quantizers), default="optq")
    common.add_argument("--lambda", dest="lam", type=lambda_value, default="auto")
    common.add_argument("--delta", type=float, default=1.0)
    common.add_argument("--bits", type=bits_value, default=None)
    common.add_argument("--order", choices=["none", "desc"], default="none")
    common.add_argument("--form", choices=["chol", "ls"], default="chol")
    common.add_argument("--round", dest="rounding", choices=["det", "stoc"], default="det")
    common.add_argument("--seed", type=seed_value, default=0)
    common.add_argument("--p", type=float, default=2.0)
    common.add_argument("--pprime", dest="p_prime", type=float, default=2.0)
    common.add_argument(
        "--eps", type=probability_value, default=None, help="target failure probability; sets p"
    )
    common.add_argument("--trials", type=int, default=1000)
    common.add_argument("--rank", type=int, default=None)
    common.add_argument("--ls-init", dest="ls_init", action="store_true")
    common.add_argument("--sizes", type=size_list, default=None)
    common.add_argument("--out", help="report path (.json, or .csv for the adversarial table)")
    common.add_argument("--q-out", dest="q_out", help="where to save the quantized weights")
    common.add_argument("--threads", type=int, default=None, help="defaults to QLAB_THREADS")

    parser = argparse.ArgumentParser(prog="qlab", description="Post-training quantization lab")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common])
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_PASS if e.code == 0 else EXIT_USAGE

    try:
        spec = ExperimentSpec(**vars(args))
        report, passed = run(spec)
    except QuantLabError as e:
        logger.error(f"{args.command}: {e}")
        return e.exit_code
    except (ValueError, OSError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_USAGE

    if not spec.out:
        json.dump(report, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return EXIT_PASS if passed else EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
