"""Threshold segmentation and populated/depopulated area accounting.

The chain is grayscale -> user threshold (0-10 scale) -> strict ">" cut ->
pixel counts -> percentages. Counting always runs on the grayscale image;
pseudocolor output is a visualization aid only. Percentages are carried as
exact rationals and rounded to 2 decimals only at the reporting boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .images import ImageBuffer, image_from_array, to_grayscale

# A cut separates pixels into two populations; when their gray means sit
# closer than this, thresholding is unreliable (low-contrast warning).
CONTRAST_WARN_GRAY_LEVELS = 30.0


@dataclass(frozen=True)
class SegmentationMask:
    """One bit per pixel; True marks bright (depopulated) pixels."""

    width: int
    height: int
    bits: np.ndarray  # bool, shape (height, width)

    def popcount(self) -> int:
        return int(self.bits.sum())

    def to_image(self) -> ImageBuffer:
        """Render as a 1-channel 0/255 raster (PGM-exportable)."""
        return image_from_array(np.where(self.bits, 255, 0).astype(np.uint8))


@dataclass(frozen=True)
class CoverageReport:
    threshold_user: float
    threshold_gray: int
    total_pixels: int
    populated_pixels: int
    depopulated_pixels: int
    low_contrast: bool

    @property
    def populated_pct(self) -> Fraction:
        return Fraction(100 * self.populated_pixels, self.total_pixels)

    @property
    def depopulated_pct(self) -> Fraction:
        return Fraction(100 * self.depopulated_pixels, self.total_pixels)

    def to_json_dict(self) -> dict:
        # Fixed key order; percentages rendered with 2 decimals.
        return {
            "threshold_user": float(self.threshold_user),
            "threshold_gray": self.threshold_gray,
            "total": self.total_pixels,
            "populated": self.populated_pixels,
            "depopulated": self.depopulated_pixels,
            "populated_pct": float(round(self.populated_pct, 2)),
            "depopulated_pct": float(round(self.depopulated_pct, 2)),
            "low_contrast": self.low_contrast,
        }


def map_threshold(user: float) -> int:
    """Map the user's 0-10 threshold to an 8-bit gray cut: round(user/10 * 255)."""
    if not 0.0 <= user <= 10.0:
        raise ValueError(f"threshold must be in [0, 10], got {user}")
    return int(math.floor(user / 10.0 * 255.0 + 0.5))


def segment(gray_image: ImageBuffer, gray_cut: int) -> SegmentationMask:
    """Mark pixels strictly brighter than ``gray_cut`` as depopulated."""
    if gray_image.channels != 1:
        raise ValueError("segment expects a 1-channel image; apply to_grayscale first")
    bits = gray_image.pixels[:, :, 0] > gray_cut
    return SegmentationMask(width=gray_image.width, height=gray_image.height, bits=bits)


def coverage_report(image: ImageBuffer, user_threshold: float):
    """Full coverage computation; returns (CoverageReport, SegmentationMask)."""
    gray = to_grayscale(image)
    cut = map_threshold(user_threshold)
    mask = segment(gray, cut)
    total = gray.width * gray.height
    depopulated = mask.popcount()
    report = CoverageReport(
        threshold_user=float(user_threshold),
        threshold_gray=cut,
        total_pixels=total,
        populated_pixels=total - depopulated,
        depopulated_pixels=depopulated,
        low_contrast=_is_low_contrast(gray, mask),
    )
    return report, mask


def _is_low_contrast(gray: ImageBuffer, mask: SegmentationMask) -> bool:
    values = gray.pixels[:, :, 0]
    bright = values[mask.bits]
    dark = values[~mask.bits]
    if bright.size == 0 or dark.size == 0:
        return False
    return float(bright.mean() - dark.mean()) < CONTRAST_WARN_GRAY_LEVELS


def pseudocolor(gray_image: ImageBuffer, stops) -> ImageBuffer:
    """Map gray values through a linear multi-stop color gradient.

    Visualization aid only; never feeds the pixel counts.
    """
    stops = [tuple(int(v) for v in s) for s in stops]
    if len(stops) < 2:
        raise ValueError(f"need at least 2 color stops, got {len(stops)}")
    if gray_image.channels != 1:
        raise ValueError("pseudocolor expects a 1-channel image")
    palette = np.asarray(stops, dtype=np.float64)  # (n, 3)
    pos = np.arange(256, dtype=np.float64) / 255.0 * (len(stops) - 1)
    i0 = np.minimum(np.floor(pos).astype(np.intp), len(stops) - 2)
    frac = (pos - i0)[:, np.newaxis]
    lut = palette[i0] * (1 - frac) + palette[i0 + 1] * frac
    lut = np.clip(np.floor(lut + 0.5), 0, 255).astype(np.uint8)
    return image_from_array(lut[gray_image.pixels[:, :, 0]])
