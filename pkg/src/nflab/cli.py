"""Command-line entry point: ``nflab <subcommand> --config <path> [--out <dir>] [--seed <u64>]``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import DEFAULTS, load_config, parse_config
from .errors import (ConfigError, DegenerateSpectrum, GridMismatch, HypothesisViolation,
                     NonConvergence, SnapshotError, StepCollapse)
from .experiments import EXPERIMENTS, run_experiment

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_STEP_COLLAPSE = 4
EXIT_NUMERIC = 5
EXIT_IO = 6

_SUBCOMMAND_HELP = {
    "simulate": "standard run with energy trace and dissipation checks",
    "decay": "sign-flipped run and fitted decay rate",
    "steady1d": "1D D=0 dynamics against the closed-form steady amplitude",
    "pattern": "D=0 stationary pattern, stationarity and linear stability",
    "spectrum": "leading eigenvalue, threshold, growth-rate scan, nonlinear run at 2x threshold",
    "limits": "vanishing-diffusion, large-diffusion and mollifier sweeps",
    "mollified": "single mollified run with modified-energy trace",
}

_EPILOG = ("configuration keys and defaults (key = value, '#' comments):\n"
           + "\n".join(f"  {k} = {v}" for k, v in DEFAULTS.items())
           + "\n\nexit status: 0 ok, 1 checks failed, 2 configuration or input error,\n"
             "3 solver non-convergence, 4 step collapse, 5 other numerical failure, 6 I/O error")


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nflab", description="Network-formation model laboratory.",
        epilog=_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=_SUBCOMMAND_HELP[name], description=_SUBCOMMAND_HELP[name],
                           epilog=_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", type=Path,
                       help="key = value configuration file (defaults when omitted)")
        p.add_argument("--out", type=Path, help="output directory (overrides 'out')")
        p.add_argument("--seed", type=_seed, help="run seed (overrides 'seed')")
        p.add_argument("--no-figures", action="store_true", help="write CSV output only")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else parse_config("")
        if args.seed is not None:
            cfg = cfg.with_(seed=args.seed)
        out = args.out if args.out is not None else Path(cfg.out)
        outcome = run_experiment(args.command, cfg, out, figures=not args.no_figures)
    except (ConfigError, GridMismatch) as exc:
        print(f"nflab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SnapshotError as exc:
        print(f"nflab: snapshot error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NonConvergence as exc:
        print(f"nflab: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except StepCollapse as exc:
        print(f"nflab: step collapse: {exc}", file=sys.stderr)
        return EXIT_STEP_COLLAPSE
    except (DegenerateSpectrum, HypothesisViolation, FloatingPointError, ArithmeticError) as exc:
        print(f"nflab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"nflab: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"nflab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for c in outcome.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {c.name} value={c.value!r} threshold={c.threshold!r}")
    print(f"{outcome.experiment}: {len(outcome.files)} files written to {out}")
    return EXIT_OK if outcome.ok else EXIT_CHECKS_FAILED


if __name__ == "__main__":
    sys.exit(main())
