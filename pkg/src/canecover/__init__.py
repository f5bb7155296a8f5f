"""Cane-field coverage toolkit.

Three stages, mirroring the field workflow: super-resolution of aerial
photos, populated/depopulated classification, and threshold-based area
percentages, plus a synthetic-field oracle, quality metrics, dataset
utilities, a CLI, and an HTTP serve mode for interactive threshold tuning.
"""

from . import classifier, coverage, images, metrics, superres, synth, tensor

__version__ = "0.1.0"

__all__ = [
    "classifier",
    "coverage",
    "images",
    "metrics",
    "superres",
    "synth",
    "tensor",
    "__version__",
]
