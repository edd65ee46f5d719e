"""Command-line driver: acoustica <mode> --config <file> [--out DIR] [--stride N].

Exit codes: 0 success, 1 runtime failure, 2 configuration error. Several
config files may be given; they run in separate worker processes capped by
the ACOUSTICA_MAX_WORKERS environment variable (default 1).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .errors import AcousticaError, ConfigError
from .experiments import MODES, load_config, run_experiment


def _run_one(args: tuple) -> str:
    path, mode, out_dir, stride = args
    config = load_config(path, mode=mode, out_dir=out_dir, stride=stride)
    return run_experiment(config)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="acoustica",
        description="2D acoustic inverse-design experiments",
    )
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, nargs="+",
                        help="experiment configuration file(s)")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--stride", type=int, default=None,
                        help="snapshot stride override (0 disables snapshots)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    jobs = []
    for path in args.config:
        out_dir = args.out
        if out_dir is not None and len(args.config) > 1:
            out_dir = os.path.join(args.out, os.path.splitext(os.path.basename(path))[0])
        jobs.append((path, args.mode, out_dir, args.stride))

    try:
        if len(jobs) == 1:
            manifest = _run_one(jobs[0])
            print(manifest)
        else:
            workers = max(1, int(os.environ.get("ACOUSTICA_MAX_WORKERS", "1")))
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for manifest in pool.map(_run_one, jobs):
                    print(manifest)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except AcousticaError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
