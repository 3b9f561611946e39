"""Run every shipped config through the CLI and collect the CSVs.

    python scripts/reproduce_figures.py --out results/ [--threads 4] [--only fig4a fig6]

Each config writes <out>/<name>.csv plus its .manifest. Fig. 1 (GA-based
NLS/MLE over 10^4 frames per point) is by far the slowest; Fig. 6 takes about
a minute on one core.
"""
import argparse
import sys
import time
from pathlib import Path

from beamtrack.cli import main as cli_main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", nargs="*", help="config stems to run (default: all)")
    args = ap.parse_args(argv)

    args.out.mkdir(parents=True, exist_ok=True)
    paths = sorted(CONFIGS.glob("*.cfg"))
    if args.only:
        paths = [p for p in paths if p.stem in set(args.only)]
    status = 0
    for p in paths:
        t0 = time.perf_counter()
        rc = cli_main(["run", str(p), "--out", str(args.out / f"{p.stem}.csv"), "--threads", str(args.threads)])
        print(f"{p.stem:16s} exit {rc}  {time.perf_counter() - t0:8.1f} s", flush=True)
        status = max(status, rc)
    return status


if __name__ == "__main__":
    sys.exit(main())
