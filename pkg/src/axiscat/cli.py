"""
Command-line interface for axiscat.

Subcommands generate data (forward, synth), recover the symmetry axis
(find-axis), reconstruct the generating curve (invert), scan the objective
over spheres (scan), draw figures (plot) and time the forward solver
(bench). All of them read the YAML configuration given with --config.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .config import Config
from .harness import (
    run_bench,
    run_find_axis,
    run_forward,
    run_invert,
    run_plot,
    run_scan,
    run_synth,
)

COMMANDS = ("forward", "synth", "find-axis", "invert", "scan", "plot", "bench")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="axiscat",
        description="Acoustic scattering by axis-symmetric sound-soft obstacles: "
                    "forward solves, axis recovery and shape reconstruction.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Noisy measurements of the configured scene
  axiscat synth --config config/example3.yaml --out run3 --seed 7

  # Reconstruct from them and draw the cross-sections
  axiscat invert --config config/example3.yaml --out run3 --threads 4
  axiscat plot --config config/example3.yaml --out run3

  # Axis of an oblique ellipsoid
  axiscat synth --config config/example1.yaml --out run1
  axiscat find-axis --config config/example1.yaml --out run1
        """,
    )
    parser.add_argument("command", choices=COMMANDS, help="Pipeline step to run")
    parser.add_argument("--config", type=str, help="Path to YAML configuration file")
    parser.add_argument("--out", type=str, help="Output directory (default: output.directory)")
    parser.add_argument("--seed", type=int, help="Seed for synthetic noise (default: scene.seed)")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads (default: forward.threads)")
    parser.add_argument("--measurements", type=str, help="Measurement file (default: the one in --out)")
    parser.add_argument("--inversion", type=str, help="key=value inversion settings file")
    parser.add_argument("--axis", type=str, help="axis.txt giving the frame for invert")
    parser.add_argument("--no-farfield", action="store_true", help="forward: skip far-field files")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    parser.add_argument("--version", action="version", version=f"axiscat {__version__}")
    return parser


def run(args: argparse.Namespace) -> None:
    if args.config and not Path(args.config).is_file():
        raise FileNotFoundError(f"Config file not found: {args.config}")
    config = Config(args.config) if args.config else Config()
    out_dir = Path(args.out or config.get("output", "directory"))
    out_dir.mkdir(parents=True, exist_ok=True)
    threads = args.threads or config.get("forward", "threads")
    if args.threads:
        config.set("forward", "threads", args.threads)

    if args.command == "forward":
        run_forward(config, out_dir, threads, write_farfields=not args.no_farfield)
    elif args.command == "synth":
        run_synth(config, out_dir, args.seed, threads)
    elif args.command == "find-axis":
        report = run_find_axis(config, out_dir, args.measurements, threads)
        s = report.summary
        print(
            f"axis azimuth={s['azimuth']:.4f} polar={s['polar']:.4f} "
            f"center=({s['center'][0]:.4f}, {s['center'][1]:.4f}) score={s['orientation_score']:.3e}"
        )
    elif args.command == "invert":
        report = run_invert(config, out_dir, args.measurements, args.inversion, args.axis, threads)
        for row in report.rows:
            if row.get("status") == "ok":
                extra = f" error={row['profile_error']:.4f}" if "profile_error" in row else ""
                print(f"k={row['k']:g} N_p={row['band_limit']} residual={row['residual']:.4e}{extra}")
    elif args.command == "scan":
        report = run_scan(config, out_dir, args.measurements)
        for row in report.rows:
            print(f"k={row['k']:g} [a, b] = [{row['a']:.2f}, {row['b']:.2f}]")
    elif args.command == "plot":
        for path in run_plot(config, out_dir):
            print(path)
    elif args.command == "bench":
        report = run_bench(config, out_dir, threads)
        for row in report.rows:
            print(f"k={row['k']:g} nodes={row['nodes']} modes={row['modes']}")
        print(f"fitted exponent {report.timings['exponent']:.2f} (factorization {report.timings['exponent_factor']:.2f})")


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        run(args)
    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
