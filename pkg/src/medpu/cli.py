"""``medpu`` command-line entry point.

Exit codes: 0 success, 2 I/O or format error, 3 empty or degenerate input,
4 invalid argument.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .errors import FormatError, InvalidArgument, MedPUError
from .io import load_cloud, load_mesh, save_cloud, save_mesh
from .metrics import MetricReport, evaluate_pair, format_value, write_report_csv
from .pipeline import PipelineConfig, cap_points, load_config, mesh_summary, reconstruct_with, run_pipeline
from .sampling import extract_patch_pairs, write_patch_dataset
from .spatial import worker_count
from .upsample import upsample
from .voxel import load_mask, mask_to_surface_points

logger = logging.getLogger("medpu")

EXIT_OK = 0
EXIT_IO = 2
EXIT_EMPTY = 3
EXIT_ARGUMENT = 4

MODES = {"none": "none", "mls": "mls", "chamfer-oracle": "chamfer_oracle", "chamfer_oracle": "chamfer_oracle"}
MESH_SUFFIXES = (".obj", ".ply")


class UsageError(InvalidArgument):
    pass


class _Parser(argparse.ArgumentParser):
    # usage mistakes are invalid arguments, not I/O errors
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file; flags take precedence")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--voxel-size", type=float, dest="voxel_size")
    parser.add_argument("--ratio", type=int)
    parser.add_argument("--mode", dest="refine_mode", help="refinement: none, mls or chamfer-oracle")
    parser.add_argument("--tau", type=float)
    parser.add_argument("--edge-angle", type=float, dest="edge_angle")
    parser.add_argument("--sample-count", type=int, dest="sample_count")
    parser.add_argument("--expected-cc", type=int, dest="expected_cc")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="medpu", description="Mask to mesh reconstruction through point cloud upsampling.")
    parser.add_argument("--version", action="version", version=f"medpu {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="surface points of a VMSK1 mask")
    p.add_argument("mask")
    p.add_argument("out_cloud")
    _common(p)

    p = sub.add_parser("upsample", help="densify a point cloud by the configured ratio")
    p.add_argument("in_cloud")
    p.add_argument("out_cloud")
    p.add_argument("--reference", help="target cloud for chamfer-oracle refinement")
    _common(p)

    p = sub.add_parser("reconstruct", help="voxelize a cloud and run marching cubes")
    p.add_argument("in_cloud")
    p.add_argument("out_mesh")
    _common(p)

    p = sub.add_parser("evaluate", help="metric report of a mesh against a reference mesh")
    p.add_argument("pred_mesh")
    p.add_argument("gt_mesh")
    p.add_argument("report", nargs="?", help="CSV path (default: --out or report.csv)")
    p.add_argument("--out")
    _common(p)

    p = sub.add_parser("pipeline", help="extract, upsample, reconstruct and evaluate one case")
    p.add_argument("mask")
    p.add_argument("gt_mesh")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--baseline", action="store_true", default=None,
                   help="also mesh the raw extracted cloud and report it as case 'raw'")
    _common(p)

    p = sub.add_parser("make-dataset", help="sparse/dense patch pairs from a directory of meshes")
    p.add_argument("mesh_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--pairs-per-mesh", type=int, default=16)
    p.add_argument("--sparse-n", type=int, default=256)
    _common(p)
    return parser


def _config(args) -> PipelineConfig:
    overrides = {}
    for key in ("seed", "voxel_size", "ratio", "tau", "edge_angle", "sample_count", "expected_cc", "baseline"):
        overrides[key] = getattr(args, key, None)
    if args.refine_mode is not None:
        if args.refine_mode not in MODES:
            raise InvalidArgument(f"unknown mode {args.refine_mode!r}; expected none, mls or chamfer-oracle")
        overrides["refine_mode"] = MODES[args.refine_mode]
    return load_config(args.config, overrides)


def print_table(reports: dict, stream=None) -> None:
    stream = stream or sys.stdout
    cases = sorted(reports)
    names = sorted({n for r in reports.values() for n in r.values})
    width = max(len(c) for c in cases + ["metric"]) + 2
    print("metric".ljust(10) + "".join(c.rjust(max(width, 24)) for c in cases), file=stream)
    for name in names:
        cells = "".join(format_value(reports[c].values.get(name, float("nan"))).rjust(max(width, 24)) for c in cases)
        print(name.ljust(10) + cells, file=stream)


def cmd_extract(args) -> int:
    _config(args)
    cloud = mask_to_surface_points(load_mask(args.mask))
    save_cloud(cloud, args.out_cloud)
    print(f"points {len(cloud)}")
    return EXIT_OK


def cmd_upsample(args) -> int:
    config = _config(args)
    cloud = load_cloud(args.in_cloud)
    reference = load_cloud(args.reference) if args.reference else None
    capped = cap_points(cloud, config.input_points, config.seed)
    result = upsample(capped, config.upsample_config(), reference)
    save_cloud(result.dense, args.out_cloud)
    print(f"input {len(cloud)} used {len(capped)} ratio {config.ratio} output {len(result.dense)}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    config = _config(args)
    mesh = reconstruct_with(load_cloud(args.in_cloud), config)
    save_mesh(mesh, args.out_mesh)
    summary = mesh_summary(mesh)
    print(" ".join(f"{k} {v}" for k, v in summary.items()) + f" voxel_size {config.voxel_size!r}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _config(args)
    pred = load_mesh(args.pred_mesh)
    gt = load_mesh(args.gt_mesh)
    report: MetricReport = evaluate_pair(pred, gt, config.sample_count, config.seed, config.tau,
                                         config.edge_angle, config.expected_cc or None)
    path = args.report or args.out or "report.csv"
    write_report_csv(path, {"pred": report})
    print_table({"pred": report})
    return EXIT_OK


def cmd_pipeline(args) -> int:
    config = _config(args)
    reports = run_pipeline(args.mask, args.gt_mesh, args.out, config)
    print_table(reports)
    return EXIT_OK


def cmd_make_dataset(args) -> int:
    config = _config(args)
    if args.pairs_per_mesh < 1:
        raise InvalidArgument("pairs-per-mesh must be positive")
    mesh_dir = Path(args.mesh_dir)
    if not mesh_dir.is_dir():
        raise FileNotFoundError(f"no such directory: {mesh_dir}")
    paths = sorted(p for p in mesh_dir.iterdir() if p.suffix.lower() in MESH_SUFFIXES)
    if not paths:
        raise FormatError(f"no .obj or .ply meshes in {mesh_dir}")

    def one(path: Path):
        pairs = extract_patch_pairs(load_mesh(path), args.pairs_per_mesh, args.sparse_n, config.ratio,
                                    config.seed, source_id=path.stem)
        return path.stem, config.seed, config.ratio, args.sparse_n, pairs

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        entries = list(pool.map(one, paths))
    write_patch_dataset(args.out, entries)
    total = sum(len(e[4]) for e in entries)
    print(f"meshes {len(entries)} pairs {total} files {2 * total}")
    return EXIT_OK


COMMANDS = {
    "extract": cmd_extract,
    "upsample": cmd_upsample,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
    "make-dataset": cmd_make_dataset,
}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, MedPUError):
        return exc.exit_code
    if isinstance(exc, (OSError, UnicodeDecodeError)):
        return EXIT_IO
    if isinstance(exc, ValueError):
        return EXIT_ARGUMENT
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return COMMANDS[args.command](args)
    except (MedPUError, OSError, ValueError) as exc:
        print(f"medpu: error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
