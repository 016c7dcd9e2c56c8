"""Severity-graded image distortions (7 global, 3 local).

Every generator takes a severity level in 1..10; level 0 is the identity for
all kinds and is handled by :func:`apply`. All parameters are affine in the
level. Randomness comes from a counter-based SplitMix64 stream seeded per
(image, kind, level) by :func:`derive_seed`, so outputs never depend on
scheduling order.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import imaging
from .coco_io import Annotation, annotation_mask
from .errors import NoTargetError, ParameterError

MAX_LEVEL = 10
MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
FEATHER = 2
HAZE_AIRLIGHT = 0.9
RAIN_INTENSITY = 0.25
RAIN_MAX_TILT = math.radians(30.0)
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class DistortionKind(enum.Enum):
    # value: (index, slug, display name, is_local)
    NOISE = (0, "noise", "Noise", False)
    CONTRAST = (1, "contrast", "Contrast", False)
    COMPRESSION = (2, "compression", "Compression", False)
    RAIN = (3, "rain", "Rain", False)
    HAZE = (4, "haze", "Haze", False)
    MOTION_BLUR = (5, "motion-blur", "Motion-Blur", False)
    DEFOCUS_BLUR = (6, "defocus-blur", "Defoc-Blur", False)
    LOC_MOTION_BLUR = (7, "loc-mblur", "Loc. MBlur", True)
    LOC_DEFOCUS = (8, "loc-defocus", "Loc. Defoc.", True)
    BACKLIGHT = (9, "backlight", "BackLight", True)

    @property
    def index(self) -> int:
        return self.value[0]

    @property
    def slug(self) -> str:
        return self.value[1]

    @property
    def display(self) -> str:
        return self.value[2]

    @property
    def is_local(self) -> bool:
        return self.value[3]

    @classmethod
    def parse(cls, name: str) -> "DistortionKind":
        key = name.strip().lower().replace("_", "-")
        for kind in cls:
            if key in (kind.slug, kind.name.lower().replace("_", "-"), kind.display.lower()):
                return kind
        alias = _ALIASES.get(key)
        if alias is not None:
            return alias
        raise ParameterError(f"unknown distortion kind {name!r}")


_ALIASES = {
    "mblur": DistortionKind.MOTION_BLUR,
    "motion": DistortionKind.MOTION_BLUR,
    "defocus": DistortionKind.DEFOCUS_BLUR,
    "jpeg": DistortionKind.COMPRESSION,
    "loc-motion-blur": DistortionKind.LOC_MOTION_BLUR,
    "loc-defoc": DistortionKind.LOC_DEFOCUS,
    "back-light": DistortionKind.BACKLIGHT,
}

ALL_KINDS: tuple[DistortionKind, ...] = tuple(DistortionKind)
GLOBAL_KINDS = tuple(k for k in ALL_KINDS if not k.is_local)
LOCAL_KINDS = tuple(k for k in ALL_KINDS if k.is_local)


# ------------------------------------------------------------------ seeding


def splitmix64(state: int) -> int:
    """One SplitMix64 step: advance by the golden gamma, then finalize."""
    z = (state + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(global_seed: int, image_id: int, kind: DistortionKind | int, level: int) -> int:
    kind_index = kind.index if isinstance(kind, DistortionKind) else int(kind)
    x = (global_seed ^ image_id ^ (kind_index << 32) ^ (level << 40)) & MASK64
    return splitmix64(x)


class SplitMix64:
    """Counter-based SplitMix64 stream; draws are vectorized over numpy uint64."""

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GOLDEN_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        return z ^ (z >> np.uint64(31))

    def uniform(self, n: int) -> np.ndarray:
        """Doubles in [0, 1) from the top 53 bits."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def normal(self, n: int) -> np.ndarray:
        """Box-Muller (cosine branch) over consecutive uniform pairs."""
        u = self.uniform(2 * n)
        u1 = 1.0 - u[0::2]
        u2 = u[1::2]
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)


# -------------------------------------------------------------------- ramps


def noise_sigma(level: int) -> float:
    return 0.04 * level


def contrast_factor(level: int) -> float:
    return 1.0 - 0.09 * level


def jpeg_quality(level: int) -> int:
    return max(2, 100 - 10 * level)


def haze_transmission(level: int) -> float:
    return 1.0 - 0.085 * level


def motion_length(level: int) -> int:
    return 2 * level + 1


def defocus_radius(level: int) -> int:
    return level


def rain_streak_count(level: int, width: int, height: int) -> int:
    return math.floor(level * width * height / 1e4 + 0.5)


def rain_length_range(level: int) -> tuple[float, float]:
    return 10.0 + level, 20.0 + 2.0 * level


def backlight_scale(level: int) -> float:
    return 1.0 - 0.09 * level


def backlight_glow(level: int) -> float:
    return 0.05 * level


def backlight_ring_radius(level: int) -> int:
    return 2 + level // 2


def influence_radius(kind: DistortionKind, level: int) -> int:
    """Distance beyond which a local distortion leaves pixels untouched."""
    if kind is DistortionKind.LOC_MOTION_BLUR:
        return FEATHER + motion_length(level) // 2
    if kind is DistortionKind.LOC_DEFOCUS:
        return FEATHER + defocus_radius(level)
    if kind is DistortionKind.BACKLIGHT:
        return FEATHER + backlight_ring_radius(level)
    raise ParameterError(f"{kind.slug} is not a local distortion")


# ---------------------------------------------------------------- generators
# All take/return float images in [0, 1] except ``compression`` (uint8).


def gaussian_noise(img: np.ndarray, level: int, rng: SplitMix64) -> np.ndarray:
    noise = rng.normal(img.size).reshape(img.shape)
    return np.clip(img + noise_sigma(level) * noise, 0.0, 1.0)


def contrast_change(img: np.ndarray, level: int) -> np.ndarray:
    mu = float(np.mean(img @ LUMA_WEIGHTS))
    return np.clip(mu + contrast_factor(level) * (img - mu), 0.0, 1.0)


def compression(img_u8: np.ndarray, level: int) -> np.ndarray:
    return imaging.jpeg_roundtrip(img_u8, jpeg_quality(level))


def haze(img: np.ndarray, level: int) -> np.ndarray:
    t = haze_transmission(level)
    return img * t + HAZE_AIRLIGHT * (1.0 - t)


def rain_layer(height: int, width: int, level: int, rng: SplitMix64) -> np.ndarray:
    """Softened streak intensities, shape (H, W)."""
    tilt = (2.0 * rng.uniform(1)[0] - 1.0) * RAIN_MAX_TILT
    n = rain_streak_count(level, width, height)
    layer = np.zeros((height, width), dtype=np.float64)
    if n > 0:
        x0 = rng.uniform(n) * width
        y0 = rng.uniform(n) * height
        lo, hi = rain_length_range(level)
        lengths = lo + rng.uniform(n) * (hi - lo)
        steps = np.arange(int(math.ceil(hi)), dtype=np.float64)
        on = steps[None, :] < lengths[:, None]
        xs = np.floor(x0[:, None] + steps[None, :] * math.sin(tilt)).astype(np.int64)
        ys = np.floor(y0[:, None] + steps[None, :] * math.cos(tilt)).astype(np.int64)
        on &= (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
        layer[ys[on], xs[on]] = RAIN_INTENSITY
    return imaging.convolve2d(layer, imaging.box_kernel(1))


def rain(img: np.ndarray, level: int, rng: SplitMix64) -> np.ndarray:
    layer = rain_layer(img.shape[0], img.shape[1], level, rng)
    return np.clip(img + layer[:, :, None], 0.0, 1.0)


def _blur_angle(rng: SplitMix64) -> float:
    return float(rng.uniform(1)[0]) * math.pi


def motion_blur(img: np.ndarray, level: int, rng: SplitMix64) -> np.ndarray:
    k = imaging.motion_kernel(motion_length(level), _blur_angle(rng))
    return imaging.convolve2d(img, k)


def defocus_blur(img: np.ndarray, level: int) -> np.ndarray:
    return imaging.convolve2d(img, imaging.disk_kernel(defocus_radius(level)))


def loc_motion_blur(img: np.ndarray, level: int, mask: np.ndarray, rng: SplitMix64) -> np.ndarray:
    return imaging.blend_masked(img, motion_blur(img, level, rng), mask, FEATHER)


def loc_defocus(img: np.ndarray, level: int, mask: np.ndarray) -> np.ndarray:
    return imaging.blend_masked(img, defocus_blur(img, level), mask, FEATHER)


def backlight(img: np.ndarray, level: int, mask: np.ndarray) -> np.ndarray:
    darkened = imaging.blend_masked(img, img * backlight_scale(level), mask, FEATHER)
    halo = imaging.ring(mask, backlight_ring_radius(level))
    glowing = imaging.blend_masked(darkened, darkened + backlight_glow(level), halo, FEATHER)
    return np.clip(glowing, 0.0, 1.0)


# ------------------------------------------------------------ local targets


@dataclass(frozen=True)
class TargetPolicy:
    min_area_fraction: float = 0.01
    max_targets: int = 5
    include_crowd: bool = False


DEFAULT_POLICY = TargetPolicy()


def select_targets(
    anns: Sequence[Annotation],
    width: int,
    height: int,
    policy: TargetPolicy = DEFAULT_POLICY,
) -> list[Annotation]:
    """Objects a local distortion acts on.

    Largest-first (ties by lower id), limited to ``policy.max_targets``
    objects covering at least ``min_area_fraction`` of the image. When no
    object is large enough the single largest eligible one is used.
    """
    pool = [a for a in anns if policy.include_crowd or not a.iscrowd]
    pool.sort(key=lambda a: (-a.area, a.id))
    threshold = policy.min_area_fraction * width * height
    big = [a for a in pool if a.area >= threshold]
    if big:
        return big[: policy.max_targets]
    return pool[:1]


def target_mask(targets: Sequence[Annotation], width: int, height: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    for ann in targets:
        mask |= annotation_mask(ann, width, height)
    return mask


# --------------------------------------------------------------------- apply


@dataclass(frozen=True)
class DistortionSpec:
    kind: DistortionKind
    level: int
    seed: int = 0
    target_policy: TargetPolicy = field(default=DEFAULT_POLICY)

    def __post_init__(self) -> None:
        if not isinstance(self.kind, DistortionKind):
            object.__setattr__(self, "kind", DistortionKind.parse(str(self.kind)))
        if int(self.level) != self.level or not 0 <= self.level <= MAX_LEVEL:
            raise ParameterError(f"severity level must be in 0..{MAX_LEVEL}, got {self.level}")


def apply(
    img: np.ndarray,
    spec: DistortionSpec,
    anns: Sequence[Annotation] = (),
) -> np.ndarray:
    """Distort a uint8 RGB image. Raises :class:`NoTargetError` for a local
    kind when no annotation qualifies as a target."""
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ParameterError(f"expected an (H, W, 3) image, got shape {img.shape}")
    level, kind = spec.level, spec.kind
    if level == 0:
        return img.copy()
    height, width = img.shape[:2]

    mask = None
    if kind.is_local:
        targets = select_targets(anns, width, height, spec.target_policy)
        if not targets:
            raise NoTargetError(f"{kind.slug}: no eligible target among {len(anns)} annotations")
        mask = target_mask(targets, width, height)

    if kind is DistortionKind.COMPRESSION:
        return compression(img, level)

    rng = SplitMix64(spec.seed)
    f = imaging.to_float(img)
    if kind is DistortionKind.NOISE:
        out = gaussian_noise(f, level, rng)
    elif kind is DistortionKind.CONTRAST:
        out = contrast_change(f, level)
    elif kind is DistortionKind.RAIN:
        out = rain(f, level, rng)
    elif kind is DistortionKind.HAZE:
        out = haze(f, level)
    elif kind is DistortionKind.MOTION_BLUR:
        out = motion_blur(f, level, rng)
    elif kind is DistortionKind.DEFOCUS_BLUR:
        out = defocus_blur(f, level)
    elif kind is DistortionKind.LOC_MOTION_BLUR:
        out = loc_motion_blur(f, level, mask, rng)
    elif kind is DistortionKind.LOC_DEFOCUS:
        out = loc_defocus(f, level, mask)
    else:
        out = backlight(f, level, mask)
    return imaging.to_u8(out)
