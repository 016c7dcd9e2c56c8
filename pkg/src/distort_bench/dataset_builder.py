"""Augmented training sets, distortion evaluation grids and curated subsets."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import imaging
from .coco_io import CocoDataset, ImageInfo, write_dataset
from .distortions import (
    ALL_KINDS,
    DEFAULT_POLICY,
    MAX_LEVEL,
    DistortionKind,
    DistortionSpec,
    SplitMix64,
    TargetPolicy,
    apply,
    derive_seed,
    jpeg_quality,
)
from .errors import IntegrityError, NoTargetError, ParameterError, PlanError

log = logging.getLogger(__name__)

DEFAULT_FRACTION = 0.05
CLEAN = "clean"
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class Assignment:
    kind: DistortionKind
    level: int
    seed: int


@dataclass
class MixingPlan:
    global_seed: int
    fractions: dict[DistortionKind, float]
    # image_id -> Assignment, or None for clean images
    assignment: dict[int, Assignment | None]

    def count(self, kind: DistortionKind) -> int:
        return sum(1 for a in self.assignment.values() if a is not None and a.kind is kind)

    @property
    def clean_ids(self) -> list[int]:
        return sorted(i for i, a in self.assignment.items() if a is None)


@dataclass(frozen=True)
class GridSpec:
    kinds: tuple[DistortionKind, ...] = ALL_KINDS
    levels: tuple[int, ...] = tuple(range(1, MAX_LEVEL + 1))
    seed: int = 0

    def cells(self) -> list[tuple[DistortionKind, int]]:
        return [(k, lv) for k in self.kinds for lv in self.levels]


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def _level_for(global_seed: int, image_id: int, kind: DistortionKind) -> int:
    u = (derive_seed(global_seed, image_id, kind, 0) >> 11) * (1.0 / (1 << 53))
    return 1 + int(u * MAX_LEVEL)


def build_plan(
    dataset: CocoDataset | Iterable[int],
    fractions: Mapping[DistortionKind, float] | None = None,
    seed: int = 0,
) -> MixingPlan:
    """Assign at most one (kind, level) to each image.

    Sorted ids are shuffled by a seeded permutation and sliced per kind in
    canonical kind order; slice sizes are ``round(fraction * N)``.
    """
    if isinstance(dataset, CocoDataset):
        ids = sorted(img.id for img in dataset.images)
    else:
        ids = sorted(int(i) for i in dataset)
    if fractions is None:
        fractions = {k: DEFAULT_FRACTION for k in ALL_KINDS}
    fractions = {DistortionKind.parse(k) if isinstance(k, str) else k: float(v) for k, v in fractions.items()}
    if any(v < 0 for v in fractions.values()):
        raise PlanError("fractions must be non-negative")
    if sum(fractions.values()) > 1.0 + 1e-9:
        raise PlanError(f"fractions sum to {sum(fractions.values()):.6f} > 1")

    n = len(ids)
    counts = {k: round_half_up(fractions.get(k, 0.0) * n) for k in ALL_KINDS}
    if sum(counts.values()) > n:
        raise PlanError(f"rounded per-kind counts {sum(counts.values())} exceed {n} images")

    keys = SplitMix64(seed).next_u64(n)
    shuffled = np.asarray(ids, dtype=np.int64)[np.argsort(keys, kind="stable")]
    assignment: dict[int, Assignment | None] = dict.fromkeys(ids)
    pos = 0
    for kind in ALL_KINDS:
        for image_id in shuffled[pos : pos + counts[kind]].tolist():
            level = _level_for(seed, image_id, kind)
            assignment[image_id] = Assignment(kind, level, derive_seed(seed, image_id, kind, level))
        pos += counts[kind]
    return MixingPlan(global_seed=seed, fractions=dict(fractions), assignment=assignment)


# ----------------------------------------------------------- materialization


@dataclass(frozen=True)
class _Job:
    image: ImageInfo
    kind: DistortionKind
    level: int
    seed: int
    rel_path: str


def _output_name(file_name: str, kind: DistortionKind) -> str:
    ext = ".jpg" if kind is DistortionKind.COMPRESSION else ".png"
    return Path(file_name).with_suffix(ext).as_posix()


def _render(job: _Job, dataset: CocoDataset, src_dir: Path, dst_dir: Path, policy: TargetPolicy) -> dict:
    src = src_dir / job.image.file_name
    try:
        pixels = imaging.read_image(src)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read source image {src}: {exc}") from exc
    anns = dataset.annotations_for(job.image.id)
    out_path = dst_dir / job.rel_path
    out_path.parent.mkdir(parents=True, exist_ok=True)
    skipped = False
    if job.kind is DistortionKind.COMPRESSION:
        # the JPEG file itself is the artifact; decoding it reproduces apply()
        out_path.write_bytes(imaging.encode_jpeg(pixels, jpeg_quality(job.level)))
    else:
        spec = DistortionSpec(job.kind, job.level, job.seed, policy)
        try:
            out = apply(pixels, spec, anns)
        except NoTargetError as exc:
            log.warning("image %d emitted clean: %s", job.image.id, exc)
            out, skipped = pixels, True
        imaging.write_png(out_path, out)
    return {
        "image_id": job.image.id,
        "kind": job.kind.slug,
        "level": job.level,
        "seed": job.seed,
        "path": job.rel_path,
        "skipped": skipped,
    }


def _run_jobs(
    jobs: Sequence[_Job],
    dataset: CocoDataset,
    src_dir: Path,
    dst_dir: Path,
    threads: int,
    policy: TargetPolicy,
) -> list[dict]:
    def work(job: _Job) -> dict:
        return _render(job, dataset, src_dir, dst_dir, policy)

    if threads <= 1 or len(jobs) <= 1:
        return [work(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, jobs))


def _write_json(path: Path, doc: object) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def materialize(
    plan: MixingPlan,
    dataset: CocoDataset,
    src_dir: str | Path,
    dst_dir: str | Path,
    *,
    threads: int = 1,
    policy: TargetPolicy = DEFAULT_POLICY,
) -> Path:
    """Write distorted copies of the planned images and return the manifest path.

    Clean images are listed in the manifest but not copied. Annotations are
    written unchanged to ``annotations.json`` next to the manifest.
    """
    src_dir, dst_dir = Path(src_dir), Path(dst_dir)
    dst_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for image_id in sorted(plan.assignment):
        a = plan.assignment[image_id]
        if a is None:
            continue
        info = dataset.image(image_id)
        rel = f"{a.kind.slug}/{_output_name(info.file_name, a.kind)}"
        jobs.append(_Job(info, a.kind, a.level, a.seed, rel))
    rendered = {e["image_id"]: e for e in _run_jobs(jobs, dataset, src_dir, dst_dir, threads, policy)}

    entries = []
    for image_id in sorted(plan.assignment):
        if image_id in rendered:
            entries.append(rendered[image_id])
        else:
            entries.append(
                {"image_id": image_id, "kind": CLEAN, "level": 0, "seed": None, "path": None, "skipped": False}
            )
    skips = sum(e["skipped"] for e in entries)
    if skips:
        log.warning("%d planned images had no local target and were emitted clean", skips)
    (dst_dir / "annotations.json").write_text(write_dataset(dataset))
    manifest = dst_dir / MANIFEST_NAME
    _write_json(
        manifest,
        {
            "global_seed": plan.global_seed,
            "fractions": {k.slug: v for k, v in sorted(plan.fractions.items(), key=lambda kv: kv[0].index)},
            "entries": entries,
        },
    )
    return manifest


def build_eval_grid(
    dataset: CocoDataset,
    grid: GridSpec,
    src_dir: str | Path,
    dst_root: str | Path,
    *,
    threads: int = 1,
    policy: TargetPolicy = DEFAULT_POLICY,
) -> list[Path]:
    """One fully distorted copy of the dataset per (kind, level) cell under
    ``dst_root/<kind>/<level>/``; returns the cell manifest paths."""
    src_dir, dst_root = Path(src_dir), Path(dst_root)
    if any(lv < 1 or lv > MAX_LEVEL for lv in grid.levels):
        raise ParameterError(f"grid levels must be in 1..{MAX_LEVEL}; level 0 is the clean set")
    images = sorted(dataset.images, key=lambda i: i.id)
    manifests = []
    for kind, level in grid.cells():
        cell_dir = dst_root / kind.slug / str(level)
        jobs = [
            _Job(info, kind, level, derive_seed(grid.seed, info.id, kind, level), _output_name(info.file_name, kind))
            for info in images
        ]
        entries = _run_jobs(jobs, dataset, src_dir, cell_dir, threads, policy)
        manifest = cell_dir / MANIFEST_NAME
        _write_json(
            manifest,
            {"global_seed": grid.seed, "kind": kind.slug, "level": level, "entries": entries},
        )
        manifests.append(manifest)
    return manifests


# ------------------------------------------------------- natural sub-sets


@dataclass(frozen=True)
class SubsetEntry:
    image_id: int
    kind: DistortionKind
    retained_annotation_ids: tuple[int, ...]


@dataclass
class SubsetManifest:
    entries: list[SubsetEntry] = field(default_factory=list)
    provenance: str = ""


@dataclass(frozen=True)
class RatioRow:
    kind: DistortionKind
    images: int
    retained: int
    total: int

    @property
    def ratio(self) -> float | None:
        return self.retained / self.total if self.total else None


# column labels of curated natural subsets; natural defocus affects chosen objects only
_NATURAL_ALIASES = {
    "blur": DistortionKind.MOTION_BLUR,
    "defoc.": DistortionKind.LOC_DEFOCUS,
    "defocus": DistortionKind.LOC_DEFOCUS,
    "o.blur": DistortionKind.LOC_MOTION_BLUR,
    "object-blur": DistortionKind.LOC_MOTION_BLUR,
    "backl.": DistortionKind.BACKLIGHT,
}


def _parse_subset_kind(name: str) -> DistortionKind:
    alias = _NATURAL_ALIASES.get(name.strip().lower())
    return alias if alias is not None else DistortionKind.parse(name)


def parse_subset_manifest(text: str) -> SubsetManifest:
    doc = json.loads(text)
    try:
        entries = [
            SubsetEntry(
                image_id=int(e["image_id"]),
                kind=_parse_subset_kind(str(e["kind"])),
                retained_annotation_ids=tuple(int(i) for i in e.get("retained_annotation_ids", [])),
            )
            for e in doc.get("entries", [])
        ]
    except KeyError as exc:
        raise IntegrityError(f"subset manifest entry missing {exc.args[0]!r}") from None
    return SubsetManifest(entries=entries, provenance=str(doc.get("provenance", "")))


def subset_to_json(manifest: SubsetManifest) -> str:
    return json.dumps(
        {
            "provenance": manifest.provenance,
            "entries": [
                {"image_id": e.image_id, "kind": e.kind.slug, "retained_annotation_ids": list(e.retained_annotation_ids)}
                for e in manifest.entries
            ],
        },
        indent=2,
    )


def subset_from_manifest(
    dataset: CocoDataset, manifest: SubsetManifest
) -> tuple[CocoDataset, dict[DistortionKind, RatioRow]]:
    """Filter ``dataset`` to the curated images.

    Global kinds keep every annotation of a listed image; local kinds keep
    only the retained ones. The ratio per kind is retained / annotated
    objects over that kind's images.
    """
    keep_images: set[int] = set()
    keep_anns: set[int] = set()
    per_kind: dict[DistortionKind, list[int]] = {}
    for e in manifest.entries:
        if not dataset.has_image(e.image_id):
            raise IntegrityError(f"subset manifest references missing image id {e.image_id}")
        ann_ids = {a.id for a in dataset.annotations_for(e.image_id)}
        missing = sorted(set(e.retained_annotation_ids) - ann_ids)
        if missing:
            raise IntegrityError(
                f"image {e.image_id}: retained annotation ids {missing} do not belong to it"
            )
        kept = ann_ids if not e.kind.is_local else set(e.retained_annotation_ids)
        keep_images.add(e.image_id)
        keep_anns |= kept
        row = per_kind.setdefault(e.kind, [0, 0, 0])
        row[0] += 1
        row[1] += len(kept)
        row[2] += len(ann_ids)

    subset = CocoDataset(
        images=tuple(i for i in dataset.images if i.id in keep_images),
        annotations=tuple(a for a in dataset.annotations if a.id in keep_anns),
        categories=dataset.categories,
    )
    ratios = {
        kind: RatioRow(kind, *per_kind[kind])
        for kind in sorted(per_kind, key=lambda k: k.index)
    }
    return subset, ratios


def ratio_table_csv(ratios: Mapping[DistortionKind, RatioRow]) -> str:
    lines = ["kind,retained,total,ratio"]
    for row in ratios.values():
        r = "" if row.ratio is None else repr(round(row.ratio, 2))
        lines.append(f"{row.kind.display},{row.retained},{row.total},{r}")
    return "\n".join(lines) + "\n"
