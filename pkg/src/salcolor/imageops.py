"""Value-range conversions, color transforms, and saliency weighting.

Conventions used across the package:

* 8-bit images are numpy ``uint8`` arrays shaped ``(H, W)`` or ``(H, W, 3)``.
* Network-range images are float torch tensors, channels first, in ``[-1, 1]``;
  an optional leading batch dimension is allowed.
* Saliency maps are single-channel float tensors (or arrays) in ``[0, 1]``.
"""

from __future__ import annotations

import numpy as np
import torch

# BT.601 luma coefficients.
_LUMA_R = 0.299
_LUMA_G = 0.587
_LUMA_B = 0.114


def _require_uint8_image(img: np.ndarray, name: str = "img") -> None:
    if not isinstance(img, np.ndarray):
        raise TypeError(f"{name} must be a numpy array, got {type(img).__name__}")
    if img.dtype != np.uint8:
        raise ValueError(f"{name} must be uint8, got {img.dtype}")
    if img.ndim == 2:
        return
    if img.ndim == 3 and img.shape[2] in (1, 3):
        return
    raise ValueError(f"{name} must be (H, W) or (H, W, 1|3), got shape {img.shape}")


def _require_rgb(img: np.ndarray, name: str = "img") -> None:
    _require_uint8_image(img, name)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{name} must be (H, W, 3), got shape {img.shape}")


def normalize(img: np.ndarray) -> torch.Tensor:
    """Map an 8-bit image to a channels-first float tensor in [-1, 1].

    Grayscale ``(H, W)`` input becomes ``(1, H, W)``; RGB ``(H, W, 3)``
    becomes ``(3, H, W)``. The mapping is ``v / 127.5 - 1``.
    """
    _require_uint8_image(img)
    arr = img.astype(np.float32) / 127.5 - 1.0
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = np.moveaxis(arr, 2, 0)
    return torch.from_numpy(np.ascontiguousarray(arr))


def denormalize(img: torch.Tensor | np.ndarray) -> np.ndarray:
    """Map a [-1, 1] channels-first tensor back to an 8-bit image.

    Values are clamped to [-1, 1] first, so the composition
    ``denormalize(normalize(x))`` is the identity on uint8 input.
    Raises on NaN or infinite values.
    """
    if isinstance(img, torch.Tensor):
        arr = img.detach().cpu().numpy()
    else:
        arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"expected (1|3, H, W), got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("non-finite values in image tensor")
    arr = np.clip(arr.astype(np.float64), -1.0, 1.0) * 127.5 + 127.5
    arr = np.rint(arr).astype(np.uint8)
    if arr.shape[0] == 1:
        return arr[0]
    return np.moveaxis(arr, 0, 2)


def rgb_to_gray(img: np.ndarray) -> np.ndarray:
    """Collapse an RGB image to single-channel luma (BT.601, rounded)."""
    _require_rgb(img)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    y = _LUMA_R * r.astype(np.float64) + _LUMA_G * g + _LUMA_B * b
    return np.rint(y).astype(np.uint8)


def luma(img: np.ndarray) -> np.ndarray:
    """BT.601 luma as float64, without rounding (metric internals)."""
    _require_rgb(img)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    return _LUMA_R * r.astype(np.float64) + _LUMA_G * g + _LUMA_B * b


def apply_saliency_weight(color: torch.Tensor, saliency: torch.Tensor) -> torch.Tensor:
    """Pixelwise product of a color image and a saliency map.

    ``color`` is ``(3, H, W)`` or ``(B, 3, H, W)``; ``saliency`` is the
    matching ``(1, H, W)`` or ``(B, 1, H, W)`` map, broadcast over channels.
    """
    if color.dim() not in (3, 4):
        raise ValueError(f"color must be 3-D or 4-D, got {color.dim()}-D")
    if saliency.dim() != color.dim():
        raise ValueError("color and saliency must have the same rank")
    ch_axis = 0 if color.dim() == 3 else 1
    if saliency.shape[ch_axis] != 1:
        raise ValueError(f"saliency must have one channel, got {saliency.shape[ch_axis]}")
    if color.shape[-2:] != saliency.shape[-2:]:
        raise ValueError(
            f"spatial size mismatch: {tuple(color.shape[-2:])} vs {tuple(saliency.shape[-2:])}"
        )
    if color.dim() == 4 and color.shape[0] != saliency.shape[0]:
        raise ValueError("batch size mismatch between color and saliency")
    return color * saliency


def rgb_to_opponent(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Opponent color planes (rg, yb) of an RGB image, in real arithmetic.

    rg = R - G and yb = (R + G) / 2 - B, both returned as float64 arrays.
    """
    _require_rgb(img)
    r = img[..., 0].astype(np.float64)
    g = img[..., 1].astype(np.float64)
    b = img[..., 2].astype(np.float64)
    rg = r - g
    yb = (r + g) / 2.0 - b
    return rg, yb


def rgb_to_hue(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """HSV hue in degrees plus a chromatic-pixel mask.

    Returns ``(hue, chromatic)`` where ``hue`` is float64 in [0, 360) and
    ``chromatic`` is False wherever R = G = B (hue undefined there; the hue
    array holds 0 at those pixels and must not be read through the mask).
    """
    _require_rgb(img)
    rgb = img.astype(np.float64)
    mx = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    c = mx - mn
    chromatic = c > 0

    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    safe_c = np.where(chromatic, c, 1.0)
    hue = np.zeros_like(mx)

    is_r = chromatic & (mx == r)
    is_g = chromatic & (mx == g) & ~is_r
    is_b = chromatic & ~is_r & ~is_g
    hue = np.where(is_r, ((g - b) / safe_c) % 6.0, hue)
    hue = np.where(is_g, (b - r) / safe_c + 2.0, hue)
    hue = np.where(is_b, (r - g) / safe_c + 4.0, hue)
    hue = hue * 60.0
    hue = np.where(hue >= 360.0, hue - 360.0, hue)
    hue[~chromatic] = 0.0
    return hue, chromatic


def saturation(img: np.ndarray) -> np.ndarray:
    """HSV saturation on the 0..255 scale, float64 (0 where V = 0)."""
    _require_rgb(img)
    rgb = img.astype(np.float64)
    mx = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    safe_v = np.where(mx > 0, mx, 1.0)
    return np.where(mx > 0, (mx - mn) / safe_v * 255.0, 0.0)
