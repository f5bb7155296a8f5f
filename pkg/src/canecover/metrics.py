"""Image-quality metrics and classification evaluation helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .images import ImageBuffer

PSNR_MAX_VALUE = 255


@dataclass(frozen=True)
class PSNRResult:
    """Mean squared error and peak signal-to-noise ratio in dB.

    ``psnr_db`` is ``math.inf`` exactly when the images are identical
    (mse == 0); rendered as the string "inf" in JSON so downstream readers
    never divide by zero.
    """

    mse: float
    psnr_db: float
    max_value: int = PSNR_MAX_VALUE

    def to_json_dict(self) -> dict:
        return {
            "mse": self.mse,
            "psnr_db": "inf" if math.isinf(self.psnr_db) else self.psnr_db,
        }


def psnr(a: ImageBuffer, b: ImageBuffer) -> PSNRResult:
    """PSNR between two same-shaped 8-bit images: 10*log10(255^2 / MSE)."""
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels):
        raise ValueError(
            f"dimension mismatch: {a.width}x{a.height}x{a.channels} "
            f"vs {b.width}x{b.height}x{b.channels}"
        )
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNRResult(mse=0.0, psnr_db=math.inf)
    return PSNRResult(mse=mse, psnr_db=10.0 * math.log10(PSNR_MAX_VALUE**2 / mse))


def psnr_epoch_summary(per_epoch_psnr, boundary: int) -> dict:
    """Summarize a per-epoch PSNR series around a boundary epoch.

    ``mean_early`` averages epochs 1..boundary (1-based, inclusive),
    ``mean_late`` averages the remaining epochs, and the relative change is
    100 * (late - early) / early.
    """
    values = [float(v) for v in per_epoch_psnr]
    if not 1 <= boundary < len(values):
        raise ValueError(f"boundary {boundary} leaves an empty segment for {len(values)} epochs")
    mean_early = sum(values[:boundary]) / boundary
    mean_late = sum(values[boundary:]) / (len(values) - boundary)
    return {
        "mean_early": mean_early,
        "mean_late": mean_late,
        "relative_change_pct": 100.0 * (mean_late - mean_early) / mean_early,
    }


@dataclass(frozen=True)
class ConfusionMatrix:
    """2x2 tally of true (rows) vs predicted (cols) labels."""

    class_names: tuple
    counts: np.ndarray  # int64, shape (2, 2)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self):
        """trace/total; None when the matrix is empty (undefined)."""
        return None if self.total == 0 else float(np.trace(self.counts)) / self.total

    def precision(self, class_index: int):
        col = self.counts[:, class_index].sum()
        return None if col == 0 else float(self.counts[class_index, class_index]) / float(col)

    def recall(self, class_index: int):
        row = self.counts[class_index, :].sum()
        return None if row == 0 else float(self.counts[class_index, class_index]) / float(row)

    def to_json_dict(self) -> dict:
        return {
            "classes": list(self.class_names),
            "counts": self.counts.tolist(),
            "accuracy": self.accuracy,
            "precision": [self.precision(i) for i in range(len(self.class_names))],
            "recall": [self.recall(i) for i in range(len(self.class_names))],
        }


def confusion_from_pairs(truths, predictions, class_names) -> ConfusionMatrix:
    """Tally equal-length truth/prediction label sequences."""
    truths, predictions = list(truths), list(predictions)
    if len(truths) != len(predictions):
        raise ValueError(f"{len(truths)} truths vs {len(predictions)} predictions")
    names = tuple(class_names)
    index = {name: i for i, name in enumerate(names)}
    counts = np.zeros((len(names), len(names)), dtype=np.int64)
    for t, p in zip(truths, predictions):
        if t not in index:
            raise ValueError(f"unknown true label '{t}'")
        if p not in index:
            raise ValueError(f"unknown predicted label '{p}'")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(class_names=names, counts=counts)
