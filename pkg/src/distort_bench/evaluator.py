"""COCO-style detection scoring and robustness statistics.

Conventions follow the COCO challenge: IoU thresholds 0.50:0.05:0.95,
101-point interpolated precision, at most 100 detections per image and
category, and detections that only overlap crowd regions are ignored.
Area-range breakdowns are not computed.
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .coco_io import Annotation, BBox, CocoDataset, Detection
from .errors import IntegrityError, StatsError, UndefinedRateError

IOU_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_GRID: tuple[float, ...] = tuple(i / 100 for i in range(101))
MAX_DETS = 100
HIST_BINS = 20


def iou_bbox(a: Sequence[float], b: Sequence[float]) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def crowd_overlap(det: Sequence[float], gt: Sequence[float]) -> float:
    """Intersection over the detection's own area (used for crowd regions)."""
    dx, dy, dw, dh = det
    gx, gy, gw, gh = gt
    iw = min(dx + dw, gx + gw) - max(dx, gx)
    ih = min(dy + dh, gy + gh) - max(dy, gy)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    area = dw * dh
    return inter / area if area > 0 else 0.0


# ----------------------------------------------------------------- matching


@dataclass(frozen=True)
class MatchedDetection:
    score: float
    tp: bool
    ignored: bool = False
    gt_id: int | None = None
    iou: float = 0.0


@dataclass
class MatchResult:
    """Matches for one (image, category) pair at one IoU threshold.

    ``detections`` are in descending score order; ``num_gt`` counts
    non-crowd ground truths.
    """

    detections: list[MatchedDetection]
    num_gt: int

    @property
    def tp_count(self) -> int:
        return sum(d.tp for d in self.detections)

    @property
    def unmatched_gt(self) -> int:
        return self.num_gt - self.tp_count


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[Annotation],
    iou_threshold: float,
    max_dets: int = MAX_DETS,
) -> MatchResult:
    """Greedy COCO matching.

    Each detection, highest score first, takes the still-unmatched non-crowd
    ground truth with the largest IoU >= threshold (on equal IoU the later
    ground truth wins). A detection with no such match but overlapping a crowd
    region by at least the threshold (intersection over detection area) is
    ignored rather than counted as a false positive.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)[:max_dets]
    regular = [g for g in gts if not g.iscrowd]
    crowds = [g for g in gts if g.iscrowd]
    thr = min(iou_threshold, 1 - 1e-10)
    taken = [False] * len(regular)
    out = []
    for i in order:
        d = dets[i]
        best, best_iou = -1, thr
        for gi, g in enumerate(regular):
            if taken[gi]:
                continue
            v = iou_bbox(d.bbox, g.bbox)
            if v >= best_iou:
                best, best_iou = gi, v
        if best >= 0:
            taken[best] = True
            out.append(MatchedDetection(d.score, True, False, regular[best].id, best_iou))
            continue
        crowd_hit = None
        crowd_iou = thr
        for g in crowds:
            v = crowd_overlap(d.bbox, g.bbox)
            if v >= crowd_iou:
                crowd_hit, crowd_iou = g, v
        if crowd_hit is not None:
            out.append(MatchedDetection(d.score, False, True, crowd_hit.id, crowd_iou))
        else:
            out.append(MatchedDetection(d.score, False))
    return MatchResult(out, len(regular))


def average_precision(matches: MatchResult | Iterable[MatchResult]) -> float | None:
    """101-point interpolated AP over one or more match results.

    Returns ``None`` when there is no ground truth and no detection (the
    category is excluded from means), and 0.0 for detections without any
    ground truth.
    """
    if isinstance(matches, MatchResult):
        matches = [matches]
    scores: list[float] = []
    flags: list[bool] = []
    num_gt = 0
    for m in matches:
        num_gt += m.num_gt
        for d in m.detections:
            if not d.ignored:
                scores.append(d.score)
                flags.append(d.tp)
    if num_gt == 0:
        return None if not scores else 0.0
    if not scores:
        return 0.0
    order = np.argsort(-np.asarray(scores), kind="mergesort")
    tp = np.asarray(flags, dtype=np.float64)[order]
    tps = np.cumsum(tp)
    fps = np.cumsum(1.0 - tp)
    recall = tps / num_gt
    precision = tps / (tps + fps)
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_GRID, side="left")
    q = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    return float(np.mean(q))


# ------------------------------------------------------------------ dataset


@dataclass
class EvalResult:
    map: float
    ap50: float
    ap75: float
    miou: float
    ap: dict[int, dict[float, float]] = field(default_factory=dict)
    num_tp: int = 0

    def summary(self) -> dict:
        return {"mAP": self.map, "AP50": self.ap50, "AP75": self.ap75, "mIoU": self.miou}


def coco_map(
    dets: Sequence[Detection],
    dataset: CocoDataset,
    *,
    iou_thresholds: Sequence[float] = IOU_THRESHOLDS,
    max_dets: int = MAX_DETS,
    miou_threshold: float = 0.5,
) -> EvalResult:
    """AP per category and threshold, averaged over categories that have at
    least one non-crowd ground truth, then over thresholds."""
    cat_ids = set(dataset.category_ids)
    gts: dict[tuple[int, int], list[Annotation]] = defaultdict(list)
    for a in dataset.annotations:
        gts[(a.image_id, a.category_id)].append(a)
    by_key: dict[tuple[int, int], list[Detection]] = defaultdict(list)
    for d in dets:
        if d.category_id not in cat_ids:
            raise IntegrityError(f"detection references unknown category id {d.category_id}")
        if not dataset.has_image(d.image_id):
            raise IntegrityError(f"detection references unknown image id {d.image_id}")
        by_key[(d.image_id, d.category_id)].append(d)

    image_ids = sorted(i.id for i in dataset.images)
    thresholds = list(iou_thresholds)
    ap: dict[int, dict[float, float]] = {}
    tp_ious: list[float] = []
    for cat in sorted(cat_ids):
        keys = [(img, cat) for img in image_ids if (img, cat) in gts or (img, cat) in by_key]
        if not any(not g.iscrowd for k in keys for g in gts.get(k, ())):
            continue
        ap[cat] = {}
        for t in thresholds:
            results = [match_detections(by_key.get(k, []), gts.get(k, []), t, max_dets) for k in keys]
            ap[cat][t] = average_precision(results)
            if t == miou_threshold:
                tp_ious.extend(d.iou for r in results for d in r.detections if d.tp)
        if miou_threshold not in ap[cat]:
            results = [match_detections(by_key.get(k, []), gts.get(k, []), miou_threshold, max_dets) for k in keys]
            tp_ious.extend(d.iou for r in results for d in r.detections if d.tp)

    def mean_at(t: float) -> float:
        vals = [ap[c][t] for c in ap if t in ap[c]]
        return float(np.mean(vals)) if vals else 0.0

    per_threshold = [mean_at(t) for t in thresholds]
    return EvalResult(
        map=float(np.mean(per_threshold)) if ap else 0.0,
        ap50=mean_at(0.5) if 0.5 in thresholds else math.nan,
        ap75=mean_at(0.75) if 0.75 in thresholds else math.nan,
        miou=float(np.mean(tp_ious)) if tp_ious else 0.0,
        ap=ap,
        num_tp=len(tp_ious),
    )


# ------------------------------------------------------------- robustness


def robustness_rate(map_cell: float, map_clean: float) -> float:
    if not map_clean > 0:
        raise UndefinedRateError(f"robustness rate undefined for clean mAP {map_clean}")
    return map_cell / map_clean


def relative_improvement(score_aug: float, score_base: float) -> float:
    """Percent change of ``score_aug`` relative to ``score_base``."""
    if score_base == 0:
        raise UndefinedRateError("relative improvement undefined for a zero base score")
    return 100.0 * (score_aug - score_base) / score_base


@dataclass
class Stats:
    count: int
    mean: float
    median: float
    min: float
    max: float
    q1: float
    q3: float
    p5: float
    p95: float
    hist_edges: list[float]
    hist_counts: list[int]

    def to_dict(self) -> dict:
        return asdict(self)


def nearest_rank(sorted_values: Sequence[float], pct: int) -> float:
    n = len(sorted_values)
    rank = max(1, -(-pct * n // 100))
    return sorted_values[rank - 1]


def aggregate_stats(rates: Iterable[float]) -> Stats:
    values = sorted(float(r) for r in rates)
    if not values:
        raise StatsError("aggregate_stats needs at least one value")
    top = values[-1]
    upper = top if top > 0 else 1.0
    if not np.all(np.diff(np.linspace(0.0, upper, HIST_BINS + 1)) > 0):
        upper = 1.0  # range too small to split into finite bins
    counts, edges = np.histogram(values, bins=HIST_BINS, range=(0.0, upper))
    return Stats(
        count=len(values),
        mean=math.fsum(values) / len(values),
        median=values[(len(values) - 1) // 2],
        min=values[0],
        max=top,
        q1=nearest_rank(values, 25),
        q3=nearest_rank(values, 75),
        p5=nearest_rank(values, 5),
        p95=nearest_rank(values, 95),
        hist_edges=[float(e) for e in edges],
        hist_counts=[int(c) for c in counts],
    )


@dataclass
class CellResult:
    kind: str
    level: int
    map: float | None = None
    ap50: float | None = None
    miou: float | None = None
    rate: float | None = None
    rate_ap50: float | None = None
    status: str = "ok"


@dataclass
class RobustnessReport:
    clean: CellResult
    cells: list[CellResult]
    stats: Stats | None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "clean": asdict(self.clean),
            "cells": [asdict(c) for c in self.cells],
            "stats": self.stats.to_dict() if self.stats else None,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "RobustnessReport":
        stats = doc.get("stats")
        return cls(
            clean=CellResult(**doc["clean"]),
            cells=[CellResult(**c) for c in doc["cells"]],
            stats=Stats(**stats) if stats else None,
            warnings=list(doc.get("warnings", [])),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "level", "mAP", "AP50", "mIoU", "rate"])
        for c in [self.clean, *self.cells]:
            w.writerow(["" if v is None else v for v in (c.kind, c.level, c.map, c.ap50, c.miou, c.rate)])
        return buf.getvalue()


def robustness_report(
    clean: EvalResult, cells: Mapping[tuple[str, int], EvalResult | None]
) -> RobustnessReport:
    """Rates of each distorted cell against the clean result; ``None`` cells
    are reported as absent."""
    warnings: list[str] = []
    clean_row = CellResult("clean", 0, clean.map, clean.ap50, clean.miou)
    try:
        robustness_rate(clean.map, clean.map)
        clean_row.rate = 1.0
    except UndefinedRateError as exc:
        clean_row.status = "undefined-rate"
        warnings.append(str(exc))
    rows = []
    for (kind, level), res in cells.items():
        if res is None:
            rows.append(CellResult(kind, level, status="absent"))
            warnings.append(f"missing detections for cell {kind}/{level}")
            continue
        row = CellResult(kind, level, res.map, res.ap50, res.miou)
        try:
            row.rate = robustness_rate(res.map, clean.map)
        except UndefinedRateError:
            row.status = "undefined-rate"
        try:
            row.rate_ap50 = robustness_rate(res.ap50, clean.ap50)
        except UndefinedRateError:
            pass
        rows.append(row)
    rates = [r.rate for r in rows if r.rate is not None]
    return RobustnessReport(clean_row, rows, aggregate_stats(rates) if rates else None, warnings)
