"""Command-line interface.

Subcommands: run <spec>, export-network ieee33 <path>, validate-spec <spec>,
train <spec>. Exit code 0 on success; on failure the failing stage name goes
to standard error and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import sys

from bgcosim import __version__, netfile
from bgcosim.network import build_ieee33
from bgcosim.taskspec import TaskSpecError, load_task_spec, run, run_training_only


def _formats(value: str) -> tuple[str, ...]:
    if value == "both":
        return ("csv", "svg")
    if value in ("csv", "svg"):
        return (value,)
    raise argparse.ArgumentTypeError("format must be csv, svg, or both")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bgcosim",
        description="building-grid co-simulation runs, grid analyses, exports",
    )
    parser.add_argument("--version", action="version", version=f"bgcosim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a task spec end to end")
    p_run.add_argument("spec", help="path to the task spec file")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--out", default=None, help="override the output directory")
    p_run.add_argument("--format", type=_formats, default=None, dest="formats",
                       help="csv, svg, or both")

    p_export = sub.add_parser("export-network", help="write an embedded network file")
    p_export.add_argument("name", choices=["ieee33"], help="embedded network name")
    p_export.add_argument("path", help="destination file")

    p_val = sub.add_parser("validate-spec", help="parse and validate a task spec")
    p_val.add_argument("spec", help="path to the task spec file")

    p_train = sub.add_parser("train", help="run only the training stages of a spec")
    p_train.add_argument("spec", help="path to the task spec file")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", default=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    try:
        if args.command == "export-network":
            net = build_ieee33(include_tie_lines=True)
            netfile.save_network(net, args.path)
            print(f"wrote {args.path}")
            return 0

        if args.command == "validate-spec":
            spec = load_task_spec(args.spec)
            print(
                f"ok: {len(spec.network.buses)} buses, {len(spec.fleet)} buildings, "
                f"{len(spec.controls)} control(s), horizon {spec.config.horizon_steps}"
            )
            return 0

        if args.command == "train":
            spec = load_task_spec(args.spec)
            manifest = run_training_only(spec, out_dir=args.out, seed=args.seed)
        else:  # run
            spec = load_task_spec(args.spec)
            manifest = run(spec, out_dir=args.out, seed=args.seed, formats=args.formats)
    except ValueError as exc:
        # TaskSpecError and the file-format errors it wraps all derive from
        # ValueError; anything else is a genuine bug and should traceback
        print(f"spec error: {exc}", file=sys.stderr)
        return 2

    if not manifest.ok:
        print(f"stage failed: {manifest.failed_stage}: {manifest.error}", file=sys.stderr)
        return 1
    print(
        f"completed {len(manifest.completed_stages)} stage(s), "
        f"{len(manifest.files)} file(s)"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
