"""Dataset indexing, sample loading, and a synthetic toy dataset.

A dataset is two directories: color images and saliency maps, paired by
basename with the extension ignored. Color files whose pixels are all
R = G = B carry no chroma signal and are excluded from the index (logged);
a color file with no saliency partner is an error.
"""

from __future__ import annotations

import colorsys
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .imageops import normalize, rgb_to_gray

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}


@dataclass(frozen=True)
class IndexEntry:
    stem: str
    color_path: Path
    saliency_path: Path


@dataclass
class DatasetIndex:
    entries: list[IndexEntry]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class TrainingSample:
    """One training triplet: network-range gray input, color target, saliency map."""

    gray: torch.Tensor      # (1, H, W) in [-1, 1]
    color: torch.Tensor     # (3, H, W) in [-1, 1]
    saliency: torch.Tensor  # (1, H, W) in [0, 1]
    source_id: str


def list_image_files(directory: str | Path) -> dict[str, Path]:
    """Map basename stem -> path for image files in a directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    files: dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() not in IMAGE_EXTENSIONS or not path.is_file():
            continue
        if path.stem in files:
            raise ValueError(
                f"ambiguous basename '{path.stem}' in {directory}: "
                f"{files[path.stem].name} and {path.name}"
            )
        files[path.stem] = path
    return files


def _is_grayscale_encoded(path: Path) -> bool:
    arr = _decode(path, "RGB")
    return bool(np.all(arr[..., 0] == arr[..., 1]) and np.all(arr[..., 1] == arr[..., 2]))


def _decode(path: Path, pil_mode: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert(pil_mode))
    except Exception as exc:
        raise ValueError(f"undecodable image file {path}: {exc}") from exc


def build_index(color_dir: str | Path, saliency_dir: str | Path) -> DatasetIndex:
    """Pair color and saliency files by basename, sorted lexicographically."""
    color_files = list_image_files(color_dir)
    saliency_files = list_image_files(saliency_dir)
    orphans = sorted(set(color_files) - set(saliency_files))
    if orphans:
        raise ValueError(f"color files with no saliency partner: {orphans}")
    entries = []
    for stem in sorted(color_files):
        color_path = color_files[stem]
        if _is_grayscale_encoded(color_path):
            log.warning("excluding grayscale-encoded color file %s", color_path)
            continue
        entries.append(IndexEntry(stem, color_path, saliency_files[stem]))
    if not entries:
        raise ValueError(f"no usable color/saliency pairs under {color_dir}")
    return DatasetIndex(entries)


def load_sample(entry: IndexEntry, target_size: int = 256) -> TrainingSample:
    """Load one index entry, resizing (bilinear) to target_size when needed."""
    color = _decode(entry.color_path, "RGB")
    sal = _decode(entry.saliency_path, "L")
    color = _resize(color, target_size)
    sal = _resize(sal, target_size)
    gray = rgb_to_gray(color)
    return TrainingSample(
        gray=normalize(gray),
        color=normalize(color),
        saliency=torch.from_numpy((sal.astype(np.float32) / 255.0))[None],
        source_id=entry.stem,
    )


def _resize(arr: np.ndarray, size: int) -> np.ndarray:
    if arr.shape[0] == size and arr.shape[1] == size:
        return arr
    img = Image.fromarray(arr)
    return np.asarray(img.resize((size, size), Image.BILINEAR))


def load_samples(index: DatasetIndex, target_size: int = 256) -> list[TrainingSample]:
    return [load_sample(entry, target_size) for entry in index.entries]


def stack_samples(samples: list[TrainingSample]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Stack samples into (gray, color, saliency) training batches."""
    gray = torch.stack([s.gray for s in samples])
    color = torch.stack([s.color for s in samples])
    sal = torch.stack([s.saliency for s in samples])
    return gray, color, sal


def make_toy_dataset(n: int, size: int, seed: int, out_dir: str | Path) -> DatasetIndex:
    """Generate n images of chromatic shapes on gray backgrounds, plus exact masks.

    Every image holds one axis-aligned rectangle (and sometimes a disc)
    snapped to a size/8 grid, placed so that at least one quarter-size tile
    is fully covered and the outermost tiles stay empty. Shape colors are
    fully saturated and chosen to contrast with the background in luma, so
    shapes stay visible in the grayscale input; backgrounds are achromatic
    gray. The saliency mask is exactly binary. Content is deterministic
    per seed.
    """
    if size % 32 != 0 or size <= 0:
        raise ValueError(f"size must be a positive multiple of 32, got {size}")
    if n < 1:
        raise ValueError("n must be >= 1")
    out_dir = Path(out_dir)
    color_dir = out_dir / "color"
    saliency_dir = out_dir / "saliency"
    color_dir.mkdir(parents=True, exist_ok=True)
    saliency_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    s8 = size // 8
    for i in range(n):
        # background gray kept away from the mid-range so the normalized
        # target is clearly nonzero off-mask
        band = rng.integers(0, 2)
        bg = int(rng.integers(30, 81)) if band == 0 else int(rng.integers(175, 226))
        img = np.full((size, size, 3), bg, dtype=np.uint8)
        mask = np.zeros((size, size), dtype=np.uint8)

        w8, h8 = int(rng.integers(3, 5)), int(rng.integers(3, 5))
        x8 = int(rng.integers(1, 7 - w8))
        y8 = int(rng.integers(1, 7 - h8))
        x0, y0 = x8 * s8, y8 * s8
        x1, y1 = (x8 + w8) * s8, (y8 + h8) * s8
        img[y0:y1, x0:x1] = _contrasting_color(rng, bg)
        mask[y0:y1, x0:x1] = 255

        if rng.random() < 0.5:
            radius = float(rng.uniform(0.8, 1.5)) * s8
            cx = float(rng.uniform(1 * s8 + radius, 6 * s8 - radius))
            cy = float(rng.uniform(1 * s8 + radius, 6 * s8 - radius))
            yy, xx = np.mgrid[0:size, 0:size]
            disc = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2
            img[disc] = _contrasting_color(rng, bg)
            mask[disc] = 255

        Image.fromarray(img).save(color_dir / f"toy_{i:04d}.png")
        Image.fromarray(mask).save(saliency_dir / f"toy_{i:04d}.png")

    return build_index(color_dir, saliency_dir)


def _saturated_color(rng: np.random.Generator) -> np.ndarray:
    hue = float(rng.uniform(0.0, 1.0))
    value = float(rng.uniform(0.8, 1.0))
    r, g, b = colorsys.hsv_to_rgb(hue, 1.0, value)
    return np.array([round(r * 255), round(g * 255), round(b * 255)], dtype=np.uint8)


_MIN_LUMA_CONTRAST = 25.0


def _contrasting_color(rng: np.random.Generator, bg: int) -> np.ndarray:
    """A saturated color whose luma differs from the background gray.

    A shape with background-matching luma would be invisible in the
    grayscale input, leaving its color and saliency unlearnable.
    """
    for _ in range(64):
        color = _saturated_color(rng)
        y = 0.299 * color[0] + 0.587 * color[1] + 0.114 * color[2]
        if abs(y - bg) >= _MIN_LUMA_CONTRAST:
            return color
    # saturated blue (luma 29) and yellow (luma 226) contrast with any
    # background in the generated gray bands
    if bg >= 128:
        return np.array([0, 0, 255], dtype=np.uint8)
    return np.array([255, 255, 0], dtype=np.uint8)
