import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distort_bench.coco_io import RLE, Annotation, CocoDataset, Detection, ImageInfo
from distort_bench.errors import IntegrityError, StatsError, UndefinedRateError
from distort_bench.evaluator import (
    IOU_THRESHOLDS,
    EvalResult,
    RobustnessReport,
    aggregate_stats,
    average_precision,
    coco_map,
    iou_bbox,
    match_detections,
    relative_improvement,
    robustness_rate,
    robustness_report,
)
from helpers import CATEGORIES, random_instance
from oracles import box_iou, brute_coco_map


def _gt(id, bbox, crowd=0, image_id=1, cat=1):
    seg = RLE((100, 100), (10000,)) if crowd else None
    return Annotation(id, image_id, cat, bbox, bbox[2] * bbox[3], crowd, seg)


def _det(bbox, score, image_id=1, cat=1):
    return Detection(image_id, cat, bbox, score)


def test_thresholds():
    assert IOU_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)


class TestIoU:
    def test_examples(self):
        assert iou_bbox((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
        assert iou_bbox((0, 0, 10, 10), (20, 20, 5, 5)) == 0.0
        assert iou_bbox((0, 0, 10, 10), (5, 5, 10, 10)) == pytest.approx(25 / 175, abs=1e-15)

    def test_touching_edges(self):
        assert iou_bbox((0, 0, 10, 10), (10, 0, 10, 10)) == 0.0

    @given(*[st.integers(0, 30) for _ in range(4)], *[st.integers(0, 30) for _ in range(4)])
    def test_matches_oracle_and_symmetric(self, ax, ay, aw, ah, bx, by, bw, bh):
        a, b = (ax, ay, aw, ah), (bx, by, bw, bh)
        v = iou_bbox(a, b)
        assert v == pytest.approx(box_iou(a, b), abs=1e-12)
        assert v == iou_bbox(b, a)
        assert 0.0 <= v <= 1.0


class TestMatching:
    def test_single_tp(self):
        m = match_detections([_det((0, 0, 10, 10), 0.9)], [_gt(1, (0, 0, 10, 9))], 0.5)
        assert [d.tp for d in m.detections] == [True]

    def test_greedy_two_dets_one_gt(self):
        dets = [_det((0, 0, 10, 10), 0.6), _det((0, 0, 10, 10), 0.9)]
        m = match_detections(dets, [_gt(1, (0, 0, 10, 10))], 0.5)
        assert [(d.score, d.tp) for d in m.detections] == [(0.9, True), (0.6, False)]

    def test_crowd_only_is_ignored(self):
        m = match_detections([_det((10, 10, 5, 5), 0.7)], [_gt(1, (0, 0, 100, 100), crowd=1)], 0.5)
        (d,) = m.detections
        assert d.ignored and not d.tp and m.num_gt == 0

    def test_equal_iou_later_gt_wins(self):
        gts = [_gt(1, (0, 0, 10, 10)), _gt(2, (0, 0, 10, 10))]
        m = match_detections([_det((0, 0, 10, 10), 0.5)], gts, 0.5)
        assert m.detections[0].gt_id == 2

    def test_max_dets_cap(self):
        dets = [_det((0, 0, 1, 1), s / 200) for s in range(1, 151)]
        m = match_detections(dets, [], 0.5)
        assert len(m.detections) == 100
        assert min(d.score for d in m.detections) == 51 / 200


class TestAP:
    def test_all_matched(self):
        m = match_detections([_det((0, 0, 10, 10), 0.9)], [_gt(1, (0, 0, 10, 10))], 0.5)
        assert average_precision(m) == 1.0

    def test_no_detections(self):
        assert average_precision(match_detections([], [_gt(1, (0, 0, 10, 10))], 0.5)) == 0.0

    def test_fp_then_tp_is_half(self):
        dets = [_det((50, 50, 10, 10), 0.9), _det((0, 0, 10, 10), 0.8)]
        m = match_detections(dets, [_gt(1, (0, 0, 10, 10))], 0.5)
        assert average_precision(m) == pytest.approx(0.5, abs=1e-12)

    def test_empty_gt_semantics(self):
        assert average_precision(match_detections([], [], 0.5)) is None
        assert average_precision(match_detections([_det((0, 0, 1, 1), 0.5)], [], 0.5)) == 0.0

    @given(st.integers(0, 10**6))
    @settings(max_examples=100, deadline=None)
    def test_invariant_under_monotone_score_map(self, seed):
        rng = np.random.default_rng(seed)
        dets, ds = random_instance(rng, max_images=1, max_cats=1)
        a = coco_map(dets, ds)
        warped = [Detection(d.image_id, d.category_id, d.bbox, d.score**3) for d in dets]
        b = coco_map(warped, ds)
        assert a.map == pytest.approx(b.map, abs=1e-12)

    @given(st.integers(0, 10**6))
    @settings(max_examples=100, deadline=None)
    def test_low_scoring_fp_never_helps(self, seed):
        rng = np.random.default_rng(seed)
        dets, ds = random_instance(rng)
        before = coco_map(dets, ds).map
        # disjoint from every box on the 40x40 grid and scored below everything
        after = coco_map([*dets, Detection(1, 1, (200.0, 200.0, 4.0, 4.0), 0.01)], ds).map
        assert after <= before + 1e-12


def _dataset(anns, n_images=1):
    images = tuple(ImageInfo(i + 1, f"{i + 1}.jpg", 100, 100) for i in range(n_images))
    return CocoDataset(images, tuple(anns), CATEGORIES)


class TestCocoMap:
    def test_perfect(self):
        anns = [_gt(1, (0, 0, 10, 10)), _gt(2, (30, 30, 20, 10), cat=2), _gt(3, (5, 5, 40, 40), image_id=2)]
        dets = [_det(a.bbox, 1.0, a.image_id, a.category_id) for a in anns]
        r = coco_map(dets, _dataset(anns, 2))
        assert (r.map, r.ap50, r.ap75, r.miou) == (1.0, 1.0, 1.0, 1.0)

    def test_empty(self):
        r = coco_map([], _dataset([_gt(1, (0, 0, 10, 10))]))
        assert r.map == 0.0 and r.miou == 0.0

    def test_category_without_gt_excluded(self):
        # category 2 has neither ground truth nor detections; it must not drag the mean down
        r = coco_map([_det((0, 0, 10, 10), 0.9)], _dataset([_gt(1, (0, 0, 10, 10))]))
        assert r.map == 1.0 and set(r.ap) == {1}

    def test_unknown_category(self):
        with pytest.raises(IntegrityError, match="77"):
            coco_map([_det((0, 0, 1, 1), 0.5, cat=77)], _dataset([]))

    def test_unknown_image(self):
        with pytest.raises(IntegrityError):
            coco_map([_det((0, 0, 1, 1), 0.5, image_id=9)], _dataset([]))

    def test_three_image_fixture_matches_oracle(self):
        anns = [
            _gt(1, (0, 0, 10, 10)), _gt(2, (20, 20, 10, 10)), _gt(3, (0, 0, 50, 50), crowd=1, image_id=2),
            _gt(4, (10, 10, 30, 20), image_id=2, cat=2), _gt(5, (60, 60, 20, 20), image_id=3),
        ]
        dets = [
            _det((1, 1, 10, 10), 0.95), _det((21, 19, 10, 11), 0.4), _det((5, 5, 8, 8), 0.7, image_id=2),
            _det((12, 10, 28, 22), 0.8, image_id=2, cat=2), _det((60, 60, 20, 18), 0.6, image_id=3),
            _det((0, 60, 20, 20), 0.9, image_id=3),
        ]
        ds = _dataset(anns, 3)
        got = coco_map(dets, ds)
        want = brute_coco_map(dets, anns, [1, 2], [1, 2, 3])
        assert (got.map, got.ap50, got.miou) == pytest.approx(want, abs=1e-9)

    @pytest.mark.parametrize("seed", range(50))
    def test_random_matches_oracle(self, seed):
        dets, ds = random_instance(np.random.default_rng(seed))
        got = coco_map(dets, ds)
        want = brute_coco_map(dets, ds.annotations, ds.category_ids, [i.id for i in ds.images])
        assert abs(got.map - want[0]) <= 1e-9
        assert abs(got.ap50 - want[1]) <= 1e-9
        assert abs(got.miou - want[2]) <= 1e-9


class TestRates:
    def test_constructed_ratio(self):
        r = robustness_rate(0.2532, 0.400)
        assert round(r, 3) == 0.633
        assert abs(r - 0.633) <= 1e-15

    def test_trivial(self):
        assert robustness_rate(0.37, 0.37) == 1.0
        assert robustness_rate(0.0, 0.4) == 0.0

    def test_zero_clean(self):
        with pytest.raises(UndefinedRateError):
            robustness_rate(0.1, 0.0)

    @given(st.floats(0, 1), st.floats(1e-6, 1))
    def test_inverse(self, x, c):
        assert robustness_rate(x, c) * c == pytest.approx(x, rel=1e-12, abs=1e-300)

    def test_improvement(self):
        assert relative_improvement(0.20, 0.10) == pytest.approx(100.0)
        assert relative_improvement(0.306, 0.303) == pytest.approx(0.99, abs=0.005)
        assert relative_improvement(0.5, 0.5) == 0.0
        with pytest.raises(UndefinedRateError):
            relative_improvement(0.5, 0.0)


class TestStats:
    def test_constant(self):
        s = aggregate_stats([1, 1, 1])
        assert s.mean == 1 and s.median == 1

    def test_three(self):
        s = aggregate_stats([0.9, 0.2, 0.4])
        assert s.mean == pytest.approx(0.5) and s.median == 0.4
        assert (s.min, s.max, s.q1, s.q3) == (0.2, 0.9, 0.2, 0.9)

    def test_ramp(self):
        s = aggregate_stats([i / 100 for i in range(100, 0, -1)])
        assert (s.p5, s.q1, s.median, s.q3, s.p95) == (0.05, 0.25, 0.50, 0.75, 0.95)
        assert sum(s.hist_counts) == 100 and len(s.hist_edges) == 21
        assert s.hist_edges[-1] == 1.0

    def test_subnormal_max(self):
        s = aggregate_stats([0.0, 5e-324])
        assert sum(s.hist_counts) == 2

    def test_empty(self):
        with pytest.raises(StatsError):
            aggregate_stats([])

    @given(st.lists(st.floats(0, 2), min_size=1, max_size=60))
    def test_order_statistics_bracket(self, xs):
        s = aggregate_stats(xs)
        assert s.min <= s.p5 <= s.q1 <= s.median <= s.q3 <= s.p95 <= s.max
        assert s.min - 1e-12 <= s.mean <= s.max + 1e-12
        assert sum(s.hist_counts) == len(xs)


class TestReport:
    def _res(self, m):
        return EvalResult(m, m, m, m)

    def test_rates_and_absent(self):
        rep = robustness_report(self._res(0.4), {("noise", 1): self._res(0.2532), ("haze", 2): None})
        noise, haze = rep.cells
        assert round(noise.rate, 3) == 0.633 and haze.status == "absent"
        assert rep.clean.rate == 1.0 and rep.warnings
        assert rep.stats.count == 1

    def test_zero_clean(self):
        rep = robustness_report(self._res(0.0), {("noise", 1): self._res(0.0)})
        assert rep.clean.status == "undefined-rate" and rep.cells[0].rate is None
        assert rep.stats is None

    def test_dict_roundtrip_and_csv(self):
        rep = robustness_report(self._res(0.5), {("rain", 3): self._res(0.25)})
        again = RobustnessReport.from_dict(rep.to_dict())
        assert again == rep
        lines = rep.to_csv().splitlines()
        assert lines[0] == "kind,level,mAP,AP50,mIoU,rate"
        assert lines[2].startswith("rain,3,0.25,0.25,0.25,0.5")
        assert math.isclose(float(lines[2].split(",")[-1]), 0.5)
