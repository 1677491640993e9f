"""Image quality and colorfulness metrics, and directory-level evaluation.

PSNR is computed jointly over channels on 8-bit images with a +inf
sentinel for identical inputs (serialized as the string "inf"). SSIM is
single-scale on the luma channel with an 11x11 Gaussian window
(sigma 1.5, K1 0.01, K2 0.03, L 255), mean-pooled over valid windows.
Colorfulness (CCI) defaults to the opponent-space form
sigma_rgyb + 0.3 * mu_rgyb; a saturation-statistics form is available as
an alternate. The CCI optimum band is the closed interval [16, 20].
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np

from .data import list_image_files, _decode
from .imageops import luma, rgb_to_opponent, saturation

PEAK = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
CCI_OPTIMUM = (16.0, 20.0)
CCI_HASLER = "hasler"
CCI_SATURATION = "saturation"


def _check_pair(a: np.ndarray, b: np.ndarray, channels: int | None) -> None:
    for name, img in (("a", a), ("b", b)):
        if not isinstance(img, np.ndarray) or img.dtype != np.uint8:
            raise ValueError(f"{name} must be a uint8 array")
        if channels == 3:
            if img.ndim != 3 or img.shape[2] != 3:
                raise ValueError(f"{name} must be (H, W, 3), got shape {img.shape}")
        elif img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
            raise ValueError(f"{name} must be (H, W) or (H, W, 3), got shape {img.shape}")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over all channels jointly."""
    _check_pair(a, b, channels=3)
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    w = np.exp(-(x ** 2) / (2.0 * sigma * sigma))
    return w / w.sum()


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    # separable valid-mode correlation with a normalized 1-D window
    size = window.shape[0]
    rows = np.lib.stride_tricks.sliding_window_view(img, size, axis=0)
    out = rows @ window
    cols = np.lib.stride_tricks.sliding_window_view(out, size, axis=1)
    return cols @ window


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity between two images, on the luma channel."""
    _check_pair(a, b, channels=None)
    if a.ndim == 3:
        xa, xb = luma(a), luma(b)
    else:
        xa, xb = a.astype(np.float64), b.astype(np.float64)
    if min(xa.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image {xa.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    window = _gaussian_window()
    mu_a = _filter_valid(xa, window)
    mu_b = _filter_valid(xb, window)
    var_a = _filter_valid(xa * xa, window) - mu_a * mu_a
    var_b = _filter_valid(xb * xb, window) - mu_b * mu_b
    cov = _filter_valid(xa * xb, window) - mu_a * mu_b
    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class CciRecord:
    cci: float
    in_optimum: bool


def cci(img: np.ndarray, form: str = CCI_HASLER) -> CciRecord:
    """Colorfulness index of one image, flagged against the optimum band.

    The default opponent form is sigma_rgyb + 0.3 * mu_rgyb with population
    standard deviations. The alternate 'saturation' form is mean HSV
    saturation plus its standard deviation, on the 0..255 saturation scale.
    """
    if form == CCI_HASLER:
        rg, yb = rgb_to_opponent(img)
        sigma = math.hypot(float(rg.std()), float(yb.std()))
        mu = math.hypot(float(rg.mean()), float(yb.mean()))
        value = sigma + 0.3 * mu
    elif form == CCI_SATURATION:
        s = saturation(img)
        value = float(s.mean()) + float(s.std())
    else:
        raise ValueError(f"unknown CCI form '{form}' (expected '{CCI_HASLER}' or '{CCI_SATURATION}')")
    return CciRecord(cci=value, in_optimum=CCI_OPTIMUM[0] <= value <= CCI_OPTIMUM[1])


def cci_ratio(images: Iterable[np.ndarray], form: str = CCI_HASLER) -> Fraction:
    """Exact fraction of images whose CCI falls in the optimum band."""
    total = 0
    hits = 0
    for img in images:
        total += 1
        if cci(img, form).in_optimum:
            hits += 1
    if total == 0:
        raise ValueError("cci_ratio needs at least one image")
    return Fraction(hits, total)


@dataclass
class ReportRow:
    file: str
    psnr_db: float
    ssim: float
    cci: float
    in_optimum: bool


@dataclass
class MetricsReport:
    rows: list[ReportRow]
    aggregates: dict
    meta: dict

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["file", "psnr_db", "ssim", "cci", "in_optimum"])
            for row in self.rows:
                writer.writerow(
                    [row.file, _num_str(row.psnr_db), _num_str(row.ssim),
                     _num_str(row.cci), str(row.in_optimum).lower()]
                )
        return path

    def to_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "rows": [
                {
                    "file": r.file,
                    "psnr_db": _json_num(r.psnr_db),
                    "ssim": r.ssim,
                    "cci": r.cci,
                    "in_optimum": r.in_optimum,
                }
                for r in self.rows
            ],
            "aggregates": {k: _json_num(v) for k, v in self.aggregates.items()},
            "meta": self.meta,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


def _num_str(v: float) -> str:
    if math.isinf(v):
        return "inf"
    return repr(float(v))


def _json_num(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, list):
        return [_json_num(x) for x in v]
    return v


def box_stats(values: list[float]) -> dict:
    """Quartiles plus Tukey whiskers (farthest points within 1.5 IQR)."""
    if not values:
        raise ValueError("box_stats needs at least one value")
    arr = np.asarray(values, dtype=np.float64)
    q1, med, q3 = (float(q) for q in np.percentile(arr, [25.0, 50.0, 75.0]))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = arr[(arr >= lo_fence) & (arr <= hi_fence)]
    return {
        "q1": q1,
        "median": med,
        "q3": q3,
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
    }


def evaluate_pairs(
    pred_dir: str | Path,
    gt_dir: str | Path,
    cci_form: str = CCI_HASLER,
    config_snapshot: dict | None = None,
) -> MetricsReport:
    """Score every basename-matched prediction/ground-truth pair."""
    pred_files = list_image_files(pred_dir)
    gt_files = list_image_files(gt_dir)
    if not pred_files or not gt_files:
        raise ValueError(f"no images to evaluate under {pred_dir} / {gt_dir}")
    unmatched = sorted(set(pred_files) ^ set(gt_files))
    if unmatched:
        raise ValueError(f"unmatched files between prediction and ground truth: {unmatched}")

    rows = []
    for stem in sorted(pred_files):
        pred = _decode(pred_files[stem], "RGB")
        gt = _decode(gt_files[stem], "RGB")
        if pred.shape != gt.shape:
            raise ValueError(
                f"size mismatch for '{stem}': {pred.shape[:2]} vs {gt.shape[:2]}"
            )
        record = cci(pred, cci_form)
        rows.append(
            ReportRow(
                file=pred_files[stem].name,
                psnr_db=psnr(pred, gt),
                ssim=ssim(pred, gt),
                cci=record.cci,
                in_optimum=record.in_optimum,
            )
        )

    cci_values = [r.cci for r in rows]
    ratio = Fraction(sum(r.in_optimum for r in rows), len(rows))
    psnr_values = [r.psnr_db for r in rows]
    mean_psnr = math.inf if any(math.isinf(v) for v in psnr_values) else float(np.mean(psnr_values))
    stats = box_stats(cci_values)
    aggregates = {
        "count": len(rows),
        "mean_psnr_db": mean_psnr,
        "mean_ssim": float(np.mean([r.ssim for r in rows])),
        "mean_cci": float(np.mean(cci_values)),
        "cci_ratio": float(ratio),
        "cci_ratio_exact": f"{ratio.numerator}/{ratio.denominator}",
        "cci_quartiles": [stats["q1"], stats["median"], stats["q3"]],
        "cci_whiskers": [stats["whisker_low"], stats["whisker_high"]],
    }
    meta = {
        "ssim_channel": "luma",
        "cci_form": cci_form,
        "cci_optimum": list(CCI_OPTIMUM),
    }
    if config_snapshot is not None:
        meta["config"] = config_snapshot
    return MetricsReport(rows=rows, aggregates=aggregates, meta=meta)
