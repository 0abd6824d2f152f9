"""Command line entry point: ``porevox {groups,flow,run,inspect}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .dimensionless import group_lines
from .geometry import GeometryError, MaterialMap, describe, load_geometry, pad_inlet_outlet
from .pipeline import PipelineError, prepare, run_pipeline

log = logging.getLogger("porevox")


def _load_config(args):
    cfg = parse_config(args.config)
    overrides = {}
    if getattr(args, "output_dir", None):
        overrides["output_dir"] = Path(args.output_dir)
    if getattr(args, "save_every", None) is not None:
        overrides["save_every"] = args.save_every
    if getattr(args, "dump_system", False):
        overrides["dump_system"] = True
    if getattr(args, "threads", None) is not None:
        overrides["threads"] = args.threads
    if getattr(args, "deterministic", False):
        overrides["deterministic"] = True
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def cmd_groups(args) -> int:
    setup = prepare(_load_config(args))
    for line in group_lines(setup.groups):
        print(line)
    return 0


def cmd_flow(args) -> int:
    result = run_pipeline(_load_config(args), flow_only=True)
    f = result.flow
    print(f"flow converged in {f.steps} steps, residual {f.residual:.3e}")
    print(f"manifest: {result.manifest}")
    return 0


def cmd_run(args) -> int:
    result = run_pipeline(_load_config(args))
    print(f"flow: {result.flow.steps} steps; transport: {result.run.final.step} steps, "
          f"{len(result.run.snapshots)} snapshots")
    print(f"manifest: {result.manifest}")
    return 0


def cmd_inspect(args) -> int:
    if args.config:
        grid = prepare(_load_config(args)).grid
    elif args.geometry:
        grid = load_geometry(args.geometry, MaterialMap(), voxel_size=args.voxel_size, flow_axis=args.flow_axis)
        grid = pad_inlet_outlet(grid, args.padding)
    else:
        raise ConfigError("inspect needs a geometry file or --config")
    for key, value in describe(grid).items():
        print(f"{key}={value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="porevox", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, required=True):
        p.add_argument("--config", required=required, help="simulation config file")
        p.add_argument("--output-dir", help="override the configured output directory")
        p.add_argument("--threads", type=int, help="recorded in the manifest; solves run single-threaded")
        p.add_argument("--deterministic", action="store_true", help="sequential, byte-reproducible outputs")

    p = sub.add_parser("groups", help="print the dimensionless groups")
    common(p)
    p.set_defaults(func=cmd_groups)

    p = sub.add_parser("flow", help="solve the steady flow only")
    common(p)
    p.add_argument("--dump-system", action="store_true", help="write assembled systems in Matrix Market form")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("run", help="flow, transport and exports")
    common(p)
    p.add_argument("--save-every", type=int, help="snapshot interval in steps")
    p.add_argument("--dump-system", action="store_true", help="write assembled systems in Matrix Market form")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("inspect", help="geometry statistics")
    p.add_argument("geometry", nargs="?", help="POREVOX geometry file")
    common(p, required=False)
    p.add_argument("--voxel-size", type=float, default=1.0)
    p.add_argument("--flow-axis", default="z")
    p.add_argument("--padding", type=int, default=0)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, GeometryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
