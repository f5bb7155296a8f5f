"""Synthetic cane-field generator with exact ground-truth gap masks.

Fields are rendered as dark crop texture with bright soil gaps (rectangles
and ellipses) plus seeded per-pixel noise. The mask is the ground truth:
the achieved gap fraction is counted from it, and blob placement iterates
until that count lands within +/-0.02 of the requested target, so every
generated field carries an exact, recountable label.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .images import ImageBuffer, image_from_array, luminance_of_rgb, save_image

GAP_FRACTION_BAND = 0.02
WELL_SEPARATED_MIN_LUMA = 60.0

# Populated fields stay at gap <= 0.05 and depopulated at >= 0.20, leaving a
# 0.15 separability margin between the two label families.
POPULATED_MAX_GAP = 0.05
DEPOPULATED_MIN_GAP = 0.20

DEFAULT_CROP_RGB = (38, 92, 34)
DEFAULT_SOIL_RGB = (196, 172, 128)

CLASS_POPULATED = "poblada"
CLASS_DEPOPULATED = "despoblada"


@dataclass(frozen=True)
class FieldSpec:
    width: int
    height: int
    gap_fraction_target: float
    crop_color_mean: tuple = DEFAULT_CROP_RGB
    soil_color_mean: tuple = DEFAULT_SOIL_RGB
    noise_amplitude: int = 12
    blob_count: int = 6
    seed: int = 0
    well_separated: bool = True

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"field dims must be positive, got {self.width}x{self.height}")
        if not 0.0 <= self.gap_fraction_target < 1.0:
            raise ValueError(f"gap_fraction_target must be in [0, 1), got {self.gap_fraction_target}")
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be >= 0")
        if self.well_separated:
            sep = abs(luminance_of_rgb(self.soil_color_mean) - luminance_of_rgb(self.crop_color_mean))
            if sep < WELL_SEPARATED_MIN_LUMA:
                raise ValueError(
                    f"crop/soil luminance separation {sep:.1f} below "
                    f"{WELL_SEPARATED_MIN_LUMA} with well_separated mode on"
                )

    def ideal_threshold_user(self) -> float:
        """User-scale threshold at the midpoint of the crop/soil luminances."""
        mid = (luminance_of_rgb(self.crop_color_mean) + luminance_of_rgb(self.soil_color_mean)) / 2.0
        return mid * 10.0 / 255.0


def generate_field(spec: FieldSpec):
    """Render one field; returns (ImageBuffer, mask, exact_gap_fraction).

    The mask is a bool array (True marks soil/gap) and the fraction equals
    its popcount over width*height exactly. Identical specs produce
    byte-identical output.
    """
    rng = np.random.default_rng(spec.seed)
    total = spec.width * spec.height
    mask = np.zeros((spec.height, spec.width), dtype=bool)

    target = spec.gap_fraction_target
    if target > 0.0:
        if spec.blob_count < 1:
            raise ValueError("unreachable target fraction: blob_count is 0 with target > 0")
        lo = max(0, math.ceil((target - GAP_FRACTION_BAND) * total))
        hi = min(total, math.floor((target + GAP_FRACTION_BAND) * total))
        if lo > hi:
            raise ValueError(
                f"unreachable target fraction {target} at {spec.width}x{spec.height}: "
                f"no pixel count lands within +/-{GAP_FRACTION_BAND}"
            )
        per_blob = target * total / spec.blob_count
        for _ in range(spec.blob_count):
            _paint_blob(mask, rng, per_blob * rng.uniform(0.6, 1.4), hi)
        guard = 0
        while mask.sum() < lo:
            guard += 1
            if guard > 10000:
                raise ValueError(f"unreachable target fraction {target}: blob placement stalled")
            _paint_blob(mask, rng, min(per_blob, float(lo - mask.sum())), hi)

    count = int(mask.sum())
    image = _render(spec, mask, rng)
    return image, mask, count / total


def _paint_blob(mask: np.ndarray, rng: np.random.Generator, area: float, hi: int):
    """Paint one random rectangle or ellipse, trimming so popcount never exceeds hi."""
    h, w = mask.shape
    area = max(1.0, area)
    aspect = rng.uniform(0.5, 2.0)
    bw = max(1, min(w, int(round(math.sqrt(area * aspect)))))
    bh = max(1, min(h, int(round(math.sqrt(area / aspect)))))
    y0 = int(rng.integers(0, max(1, h - bh + 1)))
    x0 = int(rng.integers(0, max(1, w - bw + 1)))
    blob = np.zeros_like(mask)
    if rng.random() < 0.5:
        blob[y0 : y0 + bh, x0 : x0 + bw] = True
    else:
        cy, cx = y0 + (bh - 1) / 2.0, x0 + (bw - 1) / 2.0
        ry, rx = max(bh / 2.0, 0.5), max(bw / 2.0, 0.5)
        yy, xx = np.ogrid[:h, :w]
        blob = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    new = blob & ~mask
    budget = hi - int(mask.sum())
    fresh = np.flatnonzero(new.ravel())
    if fresh.size > budget:
        fresh = fresh[:budget]
    mask.ravel()[fresh] = True


def _render(spec: FieldSpec, mask: np.ndarray, rng: np.random.Generator) -> ImageBuffer:
    crop = np.asarray(spec.crop_color_mean, dtype=np.float64)
    soil = np.asarray(spec.soil_color_mean, dtype=np.float64)
    base = np.where(mask[:, :, np.newaxis], soil, crop)
    if spec.noise_amplitude > 0:
        base = base + rng.integers(
            -spec.noise_amplitude, spec.noise_amplitude + 1, size=base.shape
        )
    return image_from_array(np.clip(base, 0, 255).astype(np.uint8))


def generate_classification_dataset(
    n_per_class: int,
    seed: int,
    out_dir,
    size: int = 96,
    noise_amplitude: int = 12,
) -> list:
    """Write a two-class labeled dataset under ``out_dir`` plus a manifest.

    Layout is out_dir/<class>/<name>.png with classes "poblada" (gap
    fraction <= 0.05) and "despoblada" (>= 0.20), mirroring the two-folder
    field-photo organization the classifier trains on. Returns the manifest
    rows [(filename, class, gap_fraction), ...]; the same rows land in
    out_dir/manifest.csv.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    rows = []
    for class_name, target_range, blobs in (
        (CLASS_POPULATED, (0.0, POPULATED_MAX_GAP - GAP_FRACTION_BAND), 3),
        (CLASS_DEPOPULATED, (DEPOPULATED_MIN_GAP + GAP_FRACTION_BAND, 0.45), 6),
    ):
        class_dir = out_dir / class_name
        class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(n_per_class):
            target = float(rng.uniform(*target_range))
            spec = FieldSpec(
                width=size,
                height=size,
                gap_fraction_target=target,
                noise_amplitude=noise_amplitude,
                blob_count=blobs,
                seed=int(rng.integers(0, 2**63)),
            )
            image, _, fraction = generate_field(spec)
            name = f"{class_name}_{i:04d}.png"
            save_image(image, class_dir / name)
            rows.append((f"{class_name}/{name}", class_name, fraction))
    with open(out_dir / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "class", "gap_fraction"])
        writer.writerows(rows)
    return rows
