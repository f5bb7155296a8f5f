"""Raster I/O, grayscale, resize, and the seeded 80/20 dataset split.

Run from the repository root:  python demos/02_images_and_splits.py
"""

import tempfile
from pathlib import Path

from canecover.images import (
    load_image,
    normalize,
    resize,
    save_image,
    split_dataset,
    to_grayscale,
)
from canecover.synth import FieldSpec, generate_field

out = Path(tempfile.mkdtemp(prefix="canecover_demo_"))
print("working in", out)

print("\n=== a synthetic cane field ===")
spec = FieldSpec(width=96, height=96, gap_fraction_target=0.3, seed=11)
field, mask, fraction = generate_field(spec)
print(f"generated {field.width}x{field.height}, exact gap fraction {fraction:.4f}")
save_image(field, out / "field.png")
reloaded = load_image(out / "field.png")
print("PNG round trip lossless:", bool((reloaded.pixels == field.pixels).all()))

print("\n=== grayscale (0.299 R + 0.587 G + 0.114 B) ===")
gray = to_grayscale(field)
print("crop pixels render dark, soil bright; mean gray =", gray.pixels.mean().round(1))

print("\n=== bilinear resize with half-pixel centers ===")
small = resize(field, 32, 32)
same = resize(field, field.width, field.height)
print("96 -> 32:", (small.width, small.height), " same-size resize identical:",
      bool((same.pixels == field.pixels).all()))

print("\n=== normalization for the networks ===")
tensor = normalize(field)
print("tensor shape (C,H,W):", tensor.shape, " range:", (tensor.min(), tensor.max()))

print("\n=== seeded 80/20 split (the reference counts) ===")
listing = {"all": [f"photo_{i:04d}.png" for i in range(650)]}
split = split_dataset(listing, train_fraction=0.8, seed=1)
train, test = split.counts()["all"]
print(f"650 photos at 80% -> train {train} / test {test}")
again = split_dataset(listing, train_fraction=0.8, seed=1)
print("same seed reproduces the split byte-for-byte:", split.to_json() == again.to_json())
