"""Command line: ``beamtrack run|crlb|mse|ser|validate``."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .config import ConfigError, parse_config
from .runner import format_csv, run_and_write, run_experiment

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
_SHORTHAND = {"crlb": "crlb_sweep", "mse": "mse_sweep", "ser": "ser_sweep"}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beamtrack", description="Beam tracking and PPM detection experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", *_SHORTHAND):
        s = sub.add_parser(name, help="run an experiment" if name == "run" else f"run with kind={_SHORTHAND[name]}")
        s.add_argument("config")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--out", help="CSV path (default: config 'output', else stdout)")
        s.add_argument("--threads", type=int, help="worker threads (default: $BEAMTRACK_THREADS or 1)")
    v = sub.add_parser("validate", help="parse and check a config without running it")
    v.add_argument("config")
    return p


def _threads(arg) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("BEAMTRACK_THREADS", "").strip()
    return int(env) if env else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        if args.command in _SHORTHAND:
            text += f"\nkind = {_SHORTHAND[args.command]}\n"
        cfg = parse_config(text)
        if getattr(args, "seed", None) is not None:
            cfg = replace(cfg, seed=args.seed)
        threads = _threads(getattr(args, "threads", None)) if args.command != "validate" else 1
        if threads < 1:
            raise ConfigError([(0, "threads must be >= 1")])
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: invalid config {args.config}:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: BEAMTRACK_THREADS: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.command == "validate":
        print(f"{args.config}: ok ({cfg.kind})")
        return EXIT_OK

    out = args.out or cfg.output
    try:
        if out and out != "-":
            result = run_and_write(cfg, text, out, threads)
        else:
            result = run_experiment(cfg, threads)
            sys.stdout.write(format_csv(result))
    except Exception as exc:  # report and exit non-zero rather than dump a traceback
        print(f"error: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    failed = sum(r.metric == "error" for r in result.rows)
    if failed:
        print(f"warning: {failed} row(s) failed; see 'error' rows", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
