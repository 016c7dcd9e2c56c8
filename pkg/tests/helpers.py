"""Deterministic synthetic fixtures: textured scenes with polygon objects."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from distort_bench import imaging
from distort_bench.coco_io import (
    RLE,
    Annotation,
    Category,
    CocoDataset,
    Detection,
    ImageInfo,
    dataset_to_dict,
    rasterize_polygons,
)
from distort_bench.dataset_builder import SubsetEntry, SubsetManifest
from distort_bench.distortions import DistortionKind as K


def polygon_area(coords) -> float:
    xs = np.asarray(coords[0::2], dtype=float)
    ys = np.asarray(coords[1::2], dtype=float)
    return float(abs(np.dot(xs, np.roll(ys, -1)) - np.dot(ys, np.roll(xs, -1))) / 2)


def scene(seed: int, height: int = 96, width: int = 128, n_objects: int = 3, first_ann_id: int = 1, image_id: int = 1):
    """A smooth-plus-textured background with a few flat-ish polygon objects."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width] / max(height, width)
    base = np.stack(
        [0.3 + 0.4 * xx, 0.2 + 0.5 * yy, 0.5 + 0.3 * np.sin(6 * xx + 4 * yy)], axis=-1
    )
    coarse = rng.random((height // 8 + 1, width // 8 + 1, 3))
    texture = np.kron(coarse, np.ones((8, 8, 1)))[:height, :width]
    img = 0.7 * base + 0.2 * texture + 0.1 * rng.random((height, width, 3))
    anns = []
    for i in range(n_objects):
        w = rng.integers(width // 6, width // 3)
        h = rng.integers(height // 6, height // 3)
        x = rng.integers(0, width - w)
        y = rng.integers(0, height - h)
        if i % 2 == 0:
            poly = (float(x), float(y), float(x + w), float(y), float(x + w), float(y + h), float(x), float(y + h))
        else:
            cx, cy = x + w / 2, y + h / 2
            poly = (float(cx), float(y), float(x + w), float(cy), float(cx), float(y + h), float(x), float(cy))
        m = rasterize_polygons([poly], width, height)
        color = rng.random(3)
        # broadband blotches; a periodic pattern would resonate with disk-kernel sidelobes
        blotch = np.kron(rng.random((height // 3 + 1, width // 3 + 1)), np.ones((3, 3)))[:height, :width]
        img[m] = 0.6 * color + 0.3 * blotch[m][:, None] * color + 0.1 * rng.random((int(m.sum()), 3))
        anns.append(
            Annotation(
                id=first_ann_id + i,
                image_id=image_id,
                category_id=1 + i % 2,
                bbox=(float(x), float(y), float(w), float(h)),
                area=polygon_area(poly),
                iscrowd=0,
                segmentation=(poly,),
            )
        )
    return imaging.to_u8(img), anns


CATEGORIES = (Category(1, "person"), Category(2, "car"))


def mini_coco(root: Path, n_images: int, height: int = 96, width: int = 128, seed: int = 0, empty_ids=()):
    """Write ``n_images`` scenes plus ``annotations.json`` under ``root``.

    Images whose id is in ``empty_ids`` get no annotations.
    """
    img_dir = root / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    images, anns = [], []
    next_ann = 1
    for k in range(n_images):
        image_id = k + 1
        pixels, objs = scene(seed * 1000 + k, height, width, first_ann_id=next_ann, image_id=image_id)
        if image_id in empty_ids:
            objs = []
        next_ann += len(objs) + 3
        name = f"{image_id:06d}.png"
        imaging.write_png(img_dir / name, pixels)
        images.append(ImageInfo(image_id, name, width, height))
        anns.extend(objs)
    ds = CocoDataset(tuple(images), tuple(anns), CATEGORIES)
    ann_path = root / "annotations.json"
    ann_path.write_text(json.dumps(dataset_to_dict(ds)))
    return ann_path, img_dir, ds


def tree_bytes(root: Path, exclude=("run_config.json",)) -> dict[str, bytes]:
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name not in exclude
    }


def random_instance(rng: np.random.Generator, max_images=5, max_cats=3, max_dets=10):
    """A small random detection problem on a coarse grid so IoU and score ties occur."""
    n_img = int(rng.integers(1, max_images + 1))
    n_cat = int(rng.integers(1, max_cats + 1))
    cats = tuple(Category(c + 1, f"c{c + 1}") for c in range(n_cat))
    images = tuple(ImageInfo(i + 1, f"{i + 1}.jpg", 40, 40) for i in range(n_img))

    def box():
        x, y = rng.integers(0, 8, size=2) * 4
        w, h = rng.integers(1, 5, size=2) * 4
        return (float(x), float(y), float(w), float(h))

    anns = []
    for k in range(int(rng.integers(0, 3 * n_img + 1))):
        b = box()
        crowd = int(rng.random() < 0.15)
        seg = None
        if crowd:
            seg = RLE((40, 40), (1600,))
        anns.append(Annotation(k + 1, int(rng.integers(1, n_img + 1)), int(rng.integers(1, n_cat + 1)),
                               b, b[2] * b[3], crowd, seg))
    dets = []
    for _ in range(int(rng.integers(0, max_dets + 1))):
        if anns and rng.random() < 0.6:
            g = anns[int(rng.integers(len(anns)))]
            jitter = rng.integers(-1, 2, size=4) * 2
            b = tuple(float(max(1.0, v + j)) if i >= 2 else float(v + j) for i, (v, j) in enumerate(zip(g.bbox, jitter)))
            img, cat = g.image_id, g.category_id
        else:
            b, img, cat = box(), int(rng.integers(1, n_img + 1)), int(rng.integers(1, n_cat + 1))
        score = float(rng.integers(1, 11)) / 10
        dets.append(Detection(img, cat, b, score))
    return dets, CocoDataset(images, tuple(anns), cats)


def ratio_fixture():
    """Noise: 44 images, 289 objects, all kept. Backlight: 128 images, 934 of 1374 kept.

    One extra image stays outside the subset.
    """
    images, anns, entries = [], [], []
    ann_id = 1

    def add_image(image_id, n):
        nonlocal ann_id
        images.append(ImageInfo(image_id, f"{image_id}.jpg", 640, 480))
        ids = list(range(ann_id, ann_id + n))
        for i in ids:
            anns.append(Annotation(i, image_id, 1, (0.0, 0.0, 10.0, 10.0), 100.0))
        ann_id += n
        return ids

    def spread(total, n):
        q, r = divmod(total, n)
        return [q + 1 if k < r else q for k in range(n)]

    for k, n in enumerate(spread(289, 44)):
        add_image(k + 1, n)
        entries.append(SubsetEntry(k + 1, K.NOISE, ()))
    for k, (n, keep) in enumerate(zip(spread(1374, 128), spread(934, 128))):
        ids = add_image(1000 + k, n)
        entries.append(SubsetEntry(1000 + k, K.BACKLIGHT, tuple(ids[:keep])))
    add_image(5000, 4)
    ds = CocoDataset(tuple(images), tuple(anns), CATEGORIES)
    return ds, SubsetManifest(entries, "fixture")
