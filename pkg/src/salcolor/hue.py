"""Hue statistics of salient versus unsalient image patches.

Images are tiled into non-overlapping square patches. A patch is salient
when at least a coverage fraction of its pixels exceed the saliency
threshold, and unsalient when no pixel does; a third class draws the same
number of patch positions uniformly at random. Per class we accumulate a
360-bin one-degree hue histogram over chromatic pixels, the circular hue
variance, and the fraction of hues in the green-blue arc [90, 270).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imageops import rgb_to_hue

GREEN_BLUE_LOW = 90.0
GREEN_BLUE_HIGH = 270.0
HUE_BINS = 360


@dataclass
class PatchClassStats:
    n_patches: int = 0
    chromatic_pixels: int = 0
    histogram: np.ndarray = field(default_factory=lambda: np.zeros(HUE_BINS, dtype=np.int64))
    _cos_sum: float = 0.0
    _sin_sum: float = 0.0

    @property
    def empty(self) -> bool:
        return self.n_patches == 0

    @property
    def green_blue_fraction(self) -> float | None:
        if self.chromatic_pixels == 0:
            return None
        gb = int(self.histogram[int(GREEN_BLUE_LOW):int(GREEN_BLUE_HIGH)].sum())
        return gb / self.chromatic_pixels

    @property
    def hue_circular_variance(self) -> float | None:
        if self.chromatic_pixels == 0:
            return None
        r = math.hypot(self._cos_sum, self._sin_sum) / self.chromatic_pixels
        return 1.0 - r

    def add_patch(self, hue: np.ndarray, chromatic: np.ndarray) -> None:
        self.n_patches += 1
        values = hue[chromatic]
        if values.size == 0:
            return
        self.chromatic_pixels += values.size
        bins = np.minimum(values.astype(np.int64), HUE_BINS - 1)
        self.histogram += np.bincount(bins, minlength=HUE_BINS)
        radians = np.deg2rad(values)
        self._cos_sum += float(np.cos(radians).sum())
        self._sin_sum += float(np.sin(radians).sum())

    def merge(self, other: "PatchClassStats") -> None:
        self.n_patches += other.n_patches
        self.chromatic_pixels += other.chromatic_pixels
        self.histogram += other.histogram
        self._cos_sum += other._cos_sum
        self._sin_sum += other._sin_sum

    def to_dict(self) -> dict:
        return {
            "n_patches": self.n_patches,
            "chromatic_pixels": self.chromatic_pixels,
            "histogram": self.histogram.tolist(),
            "green_blue_fraction": self.green_blue_fraction,
            "hue_circular_variance": self.hue_circular_variance,
        }


@dataclass
class HueAnalysis:
    salient: PatchClassStats
    unsalient: PatchClassStats
    random: PatchClassStats

    def classes(self) -> dict[str, PatchClassStats]:
        return {"salient": self.salient, "unsalient": self.unsalient, "random": self.random}

    def merge(self, other: "HueAnalysis") -> None:
        self.salient.merge(other.salient)
        self.unsalient.merge(other.unsalient)
        self.random.merge(other.random)

    def to_dict(self) -> dict:
        return {name: stats.to_dict() for name, stats in self.classes().items()}


def empty_analysis() -> HueAnalysis:
    return HueAnalysis(PatchClassStats(), PatchClassStats(), PatchClassStats())


def salient_patch_hue_analysis(
    img: np.ndarray,
    saliency: np.ndarray,
    patch: int = 64,
    high_thresh: float = 0.5,
    coverage: float = 0.8,
    seed: int = 0,
) -> HueAnalysis:
    """Classify patches of one image by saliency and collect hue statistics.

    ``img`` is an (H, W, 3) uint8 image; ``saliency`` the matching (H, W)
    float map in [0, 1]. An image class with no qualifying patches is
    reported empty rather than raising.
    """
    saliency = np.asarray(saliency, dtype=np.float64)
    if saliency.ndim != 2 or img.shape[:2] != saliency.shape:
        raise ValueError(
            f"saliency shape {saliency.shape} does not match image {img.shape[:2]}"
        )
    h, w = saliency.shape
    if patch < 1 or h < patch or w < patch:
        raise ValueError(f"patch size {patch} does not fit image {h}x{w}")

    hue, chromatic = rgb_to_hue(img)
    high = saliency > high_thresh
    result = empty_analysis()

    tiles = [
        (ty * patch, tx * patch)
        for ty in range(h // patch)
        for tx in range(w // patch)
    ]
    for y, x in tiles:
        region = np.s_[y:y + patch, x:x + patch]
        n_high = int(high[region].sum())
        if n_high >= coverage * patch * patch:
            result.salient.add_patch(hue[region], chromatic[region])
        elif n_high == 0:
            result.unsalient.add_patch(hue[region], chromatic[region])

    rng = np.random.default_rng(seed)
    for _ in range(len(tiles)):
        y = int(rng.integers(0, h - patch + 1))
        x = int(rng.integers(0, w - patch + 1))
        region = np.s_[y:y + patch, x:x + patch]
        result.random.add_patch(hue[region], chromatic[region])

    return result
