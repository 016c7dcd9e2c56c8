"""COCO annotation / results parsing and segmentation mask handling.

Masks are plain ``(height, width)`` boolean numpy arrays. RLE counts follow
the COCO convention: column-major pixel order, runs alternating and starting
with background.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

import numpy as np

from ._backend import kernels
from .errors import CocoParseError, GeometryError, IntegrityError, RangeError, RLELengthError

BBox = tuple[float, float, float, float]
Polygons = tuple[tuple[float, ...], ...]


@dataclass(frozen=True, slots=True)
class RLE:
    size: tuple[int, int]  # (height, width)
    counts: tuple[int, ...]
    compressed: bool = False


Segmentation = Union[Polygons, RLE, None]


@dataclass(frozen=True, slots=True)
class ImageInfo:
    id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True, slots=True)
class Category:
    id: int
    name: str
    supercategory: str | None = None


@dataclass(frozen=True, slots=True)
class Annotation:
    id: int
    image_id: int
    category_id: int
    bbox: BBox
    area: float
    iscrowd: int = 0
    segmentation: Segmentation = None


@dataclass(frozen=True, slots=True)
class Detection:
    image_id: int
    category_id: int
    bbox: BBox
    score: float


@dataclass(frozen=True)
class CocoDataset:
    images: tuple[ImageInfo, ...]
    annotations: tuple[Annotation, ...]
    categories: tuple[Category, ...]
    _images_by_id: dict[int, ImageInfo] = field(init=False, repr=False, compare=False)
    _anns_by_image: dict[int, tuple[Annotation, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        images_by_id: dict[int, ImageInfo] = {}
        for img in self.images:
            if img.id in images_by_id:
                raise IntegrityError(f"duplicate image id {img.id}")
            images_by_id[img.id] = img
        category_ids = set()
        for cat in self.categories:
            if cat.id in category_ids:
                raise IntegrityError(f"duplicate category id {cat.id}")
            category_ids.add(cat.id)
        grouped: dict[int, list[Annotation]] = {}
        seen: set[int] = set()
        for ann in self.annotations:
            if ann.id in seen:
                raise IntegrityError(f"duplicate annotation id {ann.id}")
            seen.add(ann.id)
            if ann.image_id not in images_by_id:
                raise IntegrityError(
                    f"annotation {ann.id} references missing image id {ann.image_id}"
                )
            if ann.category_id not in category_ids:
                raise IntegrityError(
                    f"annotation {ann.id} references missing category id {ann.category_id}"
                )
            grouped.setdefault(ann.image_id, []).append(ann)
        object.__setattr__(self, "_images_by_id", images_by_id)
        object.__setattr__(
            self, "_anns_by_image", {k: tuple(v) for k, v in grouped.items()}
        )

    def image(self, image_id: int) -> ImageInfo:
        try:
            return self._images_by_id[image_id]
        except KeyError:
            raise IntegrityError(f"unknown image id {image_id}") from None

    def has_image(self, image_id: int) -> bool:
        return image_id in self._images_by_id

    def annotations_for(self, image_id: int) -> tuple[Annotation, ...]:
        return self._anns_by_image.get(image_id, ())

    @property
    def category_ids(self) -> list[int]:
        return [c.id for c in self.categories]

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.images), len(self.annotations), len(self.categories)


# --------------------------------------------------------------------------- RLE


def decode_rle(size: Sequence[int], counts: Sequence[int]) -> np.ndarray:
    """Decode uncompressed COCO run lengths into a boolean mask of shape ``size``."""
    height, width = int(size[0]), int(size[1])
    arr = np.asarray(counts, dtype=np.int64)
    if arr.size and arr.min() < 0:
        raise RLELengthError("RLE counts must be non-negative")
    total = int(arr.sum())
    if total != height * width:
        raise RLELengthError(
            f"RLE counts sum to {total}, expected {height}x{width}={height * width}"
        )
    return kernels.rle_decode(arr, height, width)


def encode_rle(mask: np.ndarray) -> list[int]:
    """Canonical run lengths for ``mask`` (leading zero run only if the first pixel is set)."""
    return [int(v) for v in kernels.rle_encode(np.asarray(mask, dtype=bool))]


def decode_rle_string(s: str) -> list[int]:
    """Decode the COCO LEB128-like ``counts`` string into integer runs."""
    counts: list[int] = []
    p = 0
    data = s.encode("ascii")
    while p < len(data):
        x = 0
        k = 0
        more = True
        while more:
            if p >= len(data):
                raise CocoParseError("truncated compressed RLE string")
            c = data[p] - 48
            if c < 0 or c > 63:
                raise CocoParseError(f"invalid character in compressed RLE: {chr(data[p])!r}")
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def encode_rle_string(counts: Sequence[int]) -> str:
    out = []
    for i, cnt in enumerate(counts):
        x = int(cnt)
        if i > 2:
            x -= int(counts[i - 2])
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            out.append(chr(c + 48))
    return "".join(out)


# ---------------------------------------------------------------- rasterization


def rasterize_polygons(
    polygons: Iterable[Sequence[float]], width: int, height: int
) -> np.ndarray:
    """Union of even-odd polygon fills; a pixel is set iff its center is inside."""
    mask = np.zeros((height, width), dtype=bool)
    for poly in polygons:
        coords = np.asarray(poly, dtype=np.float64)
        if coords.size % 2 or coords.size < 6:
            raise GeometryError(
                f"polygon needs at least 3 (x, y) vertices, got {coords.size} values"
            )
        xs = np.ascontiguousarray(coords[0::2])
        ys = np.ascontiguousarray(coords[1::2])
        mask |= kernels.rasterize_polygon(xs, ys, height, width)
    return mask


def bbox_mask(bbox: Sequence[float], width: int, height: int) -> np.ndarray:
    """Filled box; pixel centers inside the (clamped) rectangle are set."""
    x, y, w, h = (float(v) for v in bbox)
    x0 = min(max(x, 0.0), width)
    y0 = min(max(y, 0.0), height)
    x1 = min(max(x + w, 0.0), width)
    y1 = min(max(y + h, 0.0), height)
    c0, c1 = math.ceil(x0 - 0.5), math.ceil(x1 - 0.5)
    r0, r1 = math.ceil(y0 - 0.5), math.ceil(y1 - 0.5)
    mask = np.zeros((height, width), dtype=bool)
    mask[r0:r1, c0:c1] = True
    return mask


def annotation_mask(ann: Annotation, width: int, height: int) -> np.ndarray:
    seg = ann.segmentation
    if isinstance(seg, RLE):
        if tuple(seg.size) != (height, width):
            raise RLELengthError(
                f"annotation {ann.id}: RLE size {seg.size} does not match image {height}x{width}"
            )
        return decode_rle(seg.size, seg.counts)
    if seg:
        return rasterize_polygons(seg, width, height)
    return bbox_mask(ann.bbox, width, height)


# ---------------------------------------------------------------------- parsing


def _load_json(text: str | bytes) -> Any:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise CocoParseError(f"malformed JSON: {exc.msg}", offset) from None


def _num(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise CocoParseError(f"{what} must be numeric, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise CocoParseError(f"{what} must be finite")
    return out


def _int(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise CocoParseError(f"{what} must be an integer, got {value!r}")
    return value


def _bbox(raw: Any, what: str) -> BBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise CocoParseError(f"{what} must be [x, y, w, h]")
    x, y, w, h = (_num(v, what) for v in raw)
    if w < 0 or h < 0:
        raise RangeError(f"{what} has negative size ({w}, {h})")
    return (x, y, w, h)


def _segmentation(raw: Any, what: str) -> Segmentation:
    if raw is None or raw == []:
        return None
    if isinstance(raw, dict):
        try:
            size = raw["size"]
            counts = raw["counts"]
        except KeyError as exc:
            raise CocoParseError(f"{what} RLE is missing {exc.args[0]!r}") from None
        if not isinstance(size, list) or len(size) != 2:
            raise CocoParseError(f"{what}.size must be [height, width]")
        h, w = _int(size[0], what), _int(size[1], what)
        compressed = isinstance(counts, str)
        runs = decode_rle_string(counts) if compressed else [_int(c, what) for c in counts]
        if any(c < 0 for c in runs) or sum(runs) != h * w:
            raise RLELengthError(f"{what}: RLE counts do not cover {h}x{w} pixels")
        return RLE(size=(h, w), counts=tuple(runs), compressed=compressed)
    if isinstance(raw, list):
        polys = []
        for i, poly in enumerate(raw):
            if not isinstance(poly, list):
                raise CocoParseError(f"{what}[{i}] must be a coordinate list")
            polys.append(tuple(_num(v, what) for v in poly))
        return tuple(polys)
    raise CocoParseError(f"{what} must be a polygon list or an RLE object")


def _records(doc: dict, key: str) -> list:
    value = doc.get(key)
    if not isinstance(value, list):
        raise CocoParseError(f"top-level {key!r} must be an array")
    for i, rec in enumerate(value):
        if not isinstance(rec, dict):
            raise CocoParseError(f"{key}[{i}] must be an object")
    return value


def dataset_from_dict(doc: Any) -> CocoDataset:
    if not isinstance(doc, dict):
        raise CocoParseError("annotation file must be a JSON object")
    try:
        images = tuple(
            ImageInfo(
                id=_int(r["id"], "image.id"),
                file_name=str(r["file_name"]),
                width=_int(r["width"], "image.width"),
                height=_int(r["height"], "image.height"),
            )
            for r in _records(doc, "images")
        )
        categories = tuple(
            Category(
                id=_int(r["id"], "category.id"),
                name=str(r["name"]),
                supercategory=r.get("supercategory"),
            )
            for r in _records(doc, "categories")
        )
        annotations = []
        for r in _records(doc, "annotations"):
            ann_id = _int(r["id"], "annotation.id")
            what = f"annotation {ann_id}"
            bbox = _bbox(r["bbox"], f"{what} bbox")
            seg = _segmentation(r.get("segmentation"), f"{what} segmentation")
            iscrowd = _int(r.get("iscrowd", 0), f"{what} iscrowd")
            if iscrowd not in (0, 1):
                raise CocoParseError(f"{what}: iscrowd must be 0 or 1")
            if iscrowd == 1 and not isinstance(seg, RLE):
                raise CocoParseError(f"{what}: crowd annotations must use RLE segmentation")
            area = r.get("area")
            annotations.append(
                Annotation(
                    id=ann_id,
                    image_id=_int(r["image_id"], f"{what} image_id"),
                    category_id=_int(r["category_id"], f"{what} category_id"),
                    bbox=bbox,
                    area=bbox[2] * bbox[3] if area is None else _num(area, f"{what} area"),
                    iscrowd=iscrowd,
                    segmentation=seg,
                )
            )
    except KeyError as exc:
        raise CocoParseError(f"missing required field {exc.args[0]!r}") from None
    return CocoDataset(images=images, annotations=tuple(annotations), categories=categories)


def parse_dataset(json_text: str | bytes) -> CocoDataset:
    return dataset_from_dict(_load_json(json_text))


def load_dataset(path: str | Path) -> CocoDataset:
    return parse_dataset(Path(path).read_bytes())


def _segmentation_to_json(seg: Segmentation) -> Any:
    if seg is None:
        return []
    if isinstance(seg, RLE):
        counts: Any = encode_rle_string(seg.counts) if seg.compressed else list(seg.counts)
        return {"size": list(seg.size), "counts": counts}
    return [list(p) for p in seg]


def dataset_to_dict(ds: CocoDataset) -> dict:
    return {
        "images": [
            {"id": i.id, "file_name": i.file_name, "width": i.width, "height": i.height}
            for i in ds.images
        ],
        "annotations": [
            {
                "id": a.id,
                "image_id": a.image_id,
                "category_id": a.category_id,
                "bbox": list(a.bbox),
                "area": a.area,
                "iscrowd": a.iscrowd,
                "segmentation": _segmentation_to_json(a.segmentation),
            }
            for a in ds.annotations
        ],
        "categories": [
            {"id": c.id, "name": c.name}
            | ({"supercategory": c.supercategory} if c.supercategory is not None else {})
            for c in ds.categories
        ],
    }


def write_dataset(ds: CocoDataset) -> str:
    return json.dumps(dataset_to_dict(ds))


def parse_detections(json_text: str | bytes) -> list[Detection]:
    doc = _load_json(json_text)
    if not isinstance(doc, list):
        raise CocoParseError("results file must be a JSON array")
    out = []
    for i, r in enumerate(doc):
        if not isinstance(r, dict):
            raise CocoParseError(f"results[{i}] must be an object")
        try:
            score = _num(r["score"], f"results[{i}].score")
            if not 0.0 <= score <= 1.0:
                raise RangeError(f"results[{i}].score {score} outside [0, 1]")
            out.append(
                Detection(
                    image_id=_int(r["image_id"], f"results[{i}].image_id"),
                    category_id=_int(r["category_id"], f"results[{i}].category_id"),
                    bbox=_bbox(r["bbox"], f"results[{i}].bbox"),
                    score=score,
                )
            )
        except KeyError as exc:
            raise CocoParseError(f"results[{i}] missing field {exc.args[0]!r}") from None
    return out


def load_detections(path: str | Path) -> list[Detection]:
    return parse_detections(Path(path).read_bytes())


def write_detections(dets: Iterable[Detection]) -> str:
    return json.dumps(
        [
            {"image_id": d.image_id, "category_id": d.category_id, "bbox": list(d.bbox), "score": d.score}
            for d in dets
        ]
    )
