"""Command-line front end: ``distort-bench <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__, imaging
from ._backend import BACKEND
from .charts import line_chart
from .coco_io import CocoDataset, load_dataset, load_detections, write_dataset
from .dataset_builder import (
    DEFAULT_FRACTION,
    GridSpec,
    build_eval_grid,
    build_plan,
    materialize,
    parse_subset_manifest,
    ratio_table_csv,
    subset_from_manifest,
)
from .distortions import (
    ALL_KINDS,
    MAX_LEVEL,
    DistortionKind,
    DistortionSpec,
    apply,
    derive_seed,
    jpeg_quality,
)
from .errors import DistortBenchError, NoTargetError, ParameterError
from .evaluator import RobustnessReport, aggregate_stats, coco_map, robustness_report

log = logging.getLogger("distort_bench")

THREADS_ENV = "DISTORT_BENCH_THREADS"
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
PALETTE = ("#1f77b4", "#d62728")


class UsageError(Exception):
    pass


# --------------------------------------------------------------- arg types


def _kind(text: str) -> DistortionKind:
    try:
        return DistortionKind.parse(text)
    except ParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _kinds(text: str) -> tuple[DistortionKind, ...]:
    return tuple(_kind(t) for t in text.split(",") if t.strip())


def _level(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"level must be an integer, got {text!r}") from None
    if not 0 <= value <= MAX_LEVEL:
        raise argparse.ArgumentTypeError(f"level must be in 0..{MAX_LEVEL}, got {value}")
    return value


def _levels(text: str) -> tuple[int, ...]:
    """Comma list with optional ranges, e.g. ``1,3,5-7``."""
    out: list[int] = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(_level(lo), _level(hi) + 1))
        else:
            out.append(_level(part))
    if any(lv == 0 for lv in out):
        raise argparse.ArgumentTypeError("grid levels start at 1; level 0 is the clean set")
    return tuple(out)


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _fraction(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"fraction must be a number, got {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("fraction must be in [0, 1]")
    return value


def _threads(args: argparse.Namespace) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _existing(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"--{what} path does not exist: {p}")
    return p


# ------------------------------------------------------------ audit record


def _write_audit(out: Path, args: argparse.Namespace, extra: dict | None = None) -> None:
    resolved = {}
    for key, value in sorted(vars(args).items()):
        if key == "func":
            continue
        if isinstance(value, tuple):
            value = [v.slug if isinstance(v, DistortionKind) else v for v in value]
        elif isinstance(value, DistortionKind):
            value = value.slug
        resolved[key] = value
    record = {
        "config": resolved,
        "tool_version": __version__,
        "kernel_backend": BACKEND,
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        record.update(extra)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands


def cmd_distort(args: argparse.Namespace) -> int:
    src = _existing(args.images, "images")
    if args.kind is None or args.level is None:
        raise UsageError("distort needs --kind and --level")
    out = Path(args.out)
    dataset = load_dataset(_existing(args.annotations, "annotations")) if args.annotations else None
    by_name = {}
    if dataset is not None:
        for info in dataset.images:
            by_name[Path(info.file_name).name] = info
    files = sorted(p for p in src.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES) if src.is_dir() else [src]

    entries = []
    skips = 0
    out.mkdir(parents=True, exist_ok=True)
    for index, path in enumerate(files):
        info = by_name.get(path.name)
        image_id = info.id if info is not None else index
        anns = dataset.annotations_for(info.id) if info is not None else ()
        seed = derive_seed(args.seed, image_id, args.kind, args.level)
        pixels = imaging.read_image(path)
        jpeg = args.kind is DistortionKind.COMPRESSION and args.level > 0
        target = out / (path.stem + (".jpg" if jpeg else ".png"))
        skipped = False
        if jpeg:
            target.write_bytes(imaging.encode_jpeg(pixels, jpeg_quality(args.level)))
        else:
            try:
                result = apply(pixels, DistortionSpec(args.kind, args.level, seed), anns)
            except NoTargetError as exc:
                log.warning("%s: skipped (%s); written clean", path.name, exc)
                result, skipped = pixels, True
                skips += 1
            imaging.write_png(target, result)
        entries.append(
            {
                "image_id": image_id,
                "source": path.name,
                "kind": args.kind.slug,
                "level": args.level,
                "seed": seed,
                "path": target.name,
                "skipped": skipped,
            }
        )
    (out / "manifest.json").write_text(
        json.dumps({"global_seed": args.seed, "entries": entries}, indent=2, sort_keys=True) + "\n"
    )
    _write_audit(out, args, {"skipped": skips})
    print(f"distorted {len(entries) - skips} image(s), skipped {skips}")
    return 0


def cmd_build(args: argparse.Namespace) -> int:
    dataset = load_dataset(_existing(args.annotations, "annotations"))
    src = _existing(args.images, "images")
    kinds = args.kinds or ALL_KINDS
    fraction = DEFAULT_FRACTION if args.fraction is None else args.fraction
    plan = build_plan(dataset, {k: fraction for k in kinds}, args.seed)
    manifest = materialize(plan, dataset, src, args.out, threads=_threads(args))
    _write_audit(Path(args.out), args)
    assigned = sum(1 for a in plan.assignment.values() if a is not None)
    print(f"planned {assigned} distorted / {len(plan.assignment)} images -> {manifest}")
    return 0


def cmd_grid(args: argparse.Namespace) -> int:
    dataset = load_dataset(_existing(args.annotations, "annotations"))
    src = _existing(args.images, "images")
    grid = GridSpec(
        kinds=args.kinds or ALL_KINDS,
        levels=args.levels if args.levels is not None else tuple(range(1, MAX_LEVEL + 1)),
        seed=args.seed,
    )
    manifests = build_eval_grid(dataset, grid, src, args.out, threads=_threads(args))
    _write_audit(Path(args.out), args)
    print(f"wrote {len(manifests)} grid cell(s) under {args.out}")
    return 0


def cmd_subset(args: argparse.Namespace) -> int:
    dataset = load_dataset(_existing(args.annotations, "annotations"))
    manifest = parse_subset_manifest(_existing(args.manifest, "manifest").read_text())
    subset, ratios = subset_from_manifest(dataset, manifest)
    table = ratio_table_csv(ratios)
    sys.stdout.write(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "annotations.json").write_text(write_dataset(subset))
        (out / "ratios.csv").write_text(table)
        _write_audit(out, args)
    return 0


def _discover_cells(root: Path) -> list[tuple[DistortionKind, int]]:
    cells = []
    for kind in ALL_KINDS:
        kdir = root / kind.slug
        if not kdir.is_dir():
            continue
        for f in kdir.glob("*.json"):
            if f.stem.isdigit() and 1 <= int(f.stem) <= MAX_LEVEL:
                cells.append((kind, int(f.stem)))
    return sorted(cells, key=lambda c: (c[0].index, c[1]))


def cmd_evaluate(args: argparse.Namespace) -> int:
    dataset = load_dataset(_existing(args.annotations, "annotations"))
    root = _existing(args.detections, "detections")
    clean_file = root / "clean.json"
    if not clean_file.exists():
        raise FileNotFoundError(f"clean detections not found: {clean_file}")
    clean = coco_map(load_detections(clean_file), dataset)

    if args.kinds or args.levels:
        kinds = args.kinds or ALL_KINDS
        levels = args.levels or tuple(range(1, MAX_LEVEL + 1))
        wanted = [(k, lv) for k in kinds for lv in levels]
    else:
        wanted = _discover_cells(root)
    results = {}
    for kind, level in wanted:
        f = root / kind.slug / f"{level}.json"
        results[(kind.slug, level)] = coco_map(load_detections(f), dataset) if f.exists() else None
    report = robustness_report(clean, results)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    (out / "report.csv").write_text(report.to_csv())
    _write_audit(out, args)
    for w in report.warnings:
        log.warning(w)
    print(f"evaluated {len(results)} cell(s); clean mAP {clean.map:.4f}; {len(report.warnings)} warning(s)")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    src = _existing(args.report, "report")
    if src.is_dir():
        src = src / "report.json"
    try:
        report = RobustnessReport.from_dict(json.loads(src.read_text()))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DistortBenchError(f"malformed report {src}: {exc}") from None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    by_kind: dict[str, list] = {}
    for cell in report.cells:
        by_kind.setdefault(cell.kind, []).append(cell)
    order = {k.slug: k.index for k in ALL_KINDS}
    per_kind_stats = {}
    for slug in sorted(by_kind, key=lambda s: (order.get(s, 99), s)):
        cells = [c for c in by_kind[slug] if c.map is not None]
        try:
            title = DistortionKind.parse(slug).display
        except ParameterError:
            title = slug
        svg = line_chart(
            f"{title}: AP vs level",
            [
                ("mAP", [(c.level, c.map) for c in cells], PALETTE[0]),
                ("AP50", [(c.level, c.ap50) for c in cells if c.ap50 is not None], PALETTE[1]),
            ],
            reference=report.clean.map,
        )
        (out / f"ap_{slug}.svg").write_text(svg)
        rates = [c.rate for c in cells if c.rate is not None]
        if rates:
            per_kind_stats[slug] = aggregate_stats(rates).to_dict()
    rates = [c.rate for c in report.cells if c.rate is not None]
    summary = {
        "overall": aggregate_stats(rates).to_dict() if rates else None,
        "per_kind": per_kind_stats,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (out / "report.csv").write_text(report.to_csv())
    print(f"wrote {len(by_kind)} chart(s) and summary to {out}")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distort-bench",
        description="Severity-graded distortions over COCO datasets and detection robustness scoring.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *, out_required: bool = True) -> None:
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--seed", type=_seed, default=0, help="global seed (default 0)")
        p.add_argument("--threads", type=int, default=None, help=f"worker threads (env {THREADS_ENV})")

    p = sub.add_parser("distort", help="distort one image or a directory of images")
    p.add_argument("--images", required=True)
    p.add_argument("--annotations", help="COCO annotations (needed for local kinds)")
    p.add_argument("--kind", type=_kind, required=True)
    p.add_argument("--level", type=_level, required=True)
    common(p)
    p.set_defaults(func=cmd_distort)

    p = sub.add_parser("build", help="materialize an augmented training set")
    p.add_argument("--annotations", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--kinds", type=_kinds, default=None)
    p.add_argument("--fraction", type=_fraction, default=None, help="fraction of images per kind (default 0.05)")
    common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("grid", help="build the (kind x level) evaluation grid")
    p.add_argument("--annotations", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--kinds", type=_kinds, default=None)
    p.add_argument("--levels", type=_levels, default=None)
    common(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("subset", help="filter a curated natural-distortion subset and print ratios")
    p.add_argument("--annotations", required=True)
    p.add_argument("--manifest", required=True)
    common(p, out_required=False)
    p.set_defaults(func=cmd_subset)

    p = sub.add_parser("evaluate", help="score clean and per-cell detections")
    p.add_argument("--annotations", required=True)
    p.add_argument("--detections", required=True, help="dir with clean.json and <kind>/<level>.json")
    p.add_argument("--kinds", type=_kinds, default=None)
    p.add_argument("--levels", type=_levels, default=None)
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="charts and violin summary from a robustness report")
    p.add_argument("--report", required=True, help="report.json or the directory holding it")
    common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (DistortBenchError, OSError, ValueError) as exc:
        print(f"{parser.prog}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
