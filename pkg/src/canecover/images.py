"""Raster I/O, color conversion, resizing, normalization, and dataset splits.

Images are 8-bit rasters (1 or 3 channels) held as HxWxC uint8 arrays.
Supported containers are PNG and binary PPM/PGM: all lossless, so a
save/load round trip reproduces pixels exactly. Train/test splitting uses
a fixed splitmix64 Fisher-Yates shuffle so splits are reproducible across
runs and implementations.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .tensor import Tensor, splitmix64

# BT.601 luminance weights.
_LUMA = (0.299, 0.587, 0.114)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")


class ImageIOError(Exception):
    """Base class for raster I/O failures."""


class UnreadableFileError(ImageIOError):
    """The path could not be opened or read."""


class UnsupportedFormatError(ImageIOError):
    """The file is not PNG or binary PPM/PGM."""


class CorruptImageError(ImageIOError):
    """The file has a recognized format but a broken header or body."""


@dataclass(frozen=True)
class ImageBuffer:
    """8-bit raster with interleaved row-major pixels, 1 or 3 channels."""

    width: int
    height: int
    channels: int
    pixels: np.ndarray  # uint8, shape (height, width, channels)

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"dims must be positive, got {self.width}x{self.height}")
        if self.pixels.dtype != np.uint8:
            raise ValueError("pixels must be uint8")
        if self.pixels.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"pixels shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x{self.channels}"
            )


def image_from_array(arr: np.ndarray) -> ImageBuffer:
    """Wrap a HxW or HxWxC uint8 array as an ImageBuffer."""
    a = np.asarray(arr, dtype=np.uint8)
    if a.ndim == 2:
        a = a[:, :, np.newaxis]
    h, w, c = a.shape
    return ImageBuffer(width=w, height=h, channels=c, pixels=a)


def load_image(path) -> ImageBuffer:
    """Load a PNG or binary PPM/PGM file.

    Raises:
        UnreadableFileError: the file cannot be opened.
        UnsupportedFormatError: the magic bytes match no supported format.
        CorruptImageError: recognized format but truncated or invalid.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _decode_png(data, path)
    if data[:2] in (b"P5", b"P6"):
        return _decode_pnm(data, path)
    raise UnsupportedFormatError(f"{path}: not a PNG or binary PPM/PGM file")


def save_image(image: ImageBuffer, path):
    """Write ``image`` as PNG, PPM (3-channel), or PGM (1-channel) by extension."""
    suffix = Path(path).suffix.lower()
    if suffix == ".png":
        mode = "L" if image.channels == 1 else "RGB"
        arr = image.pixels[:, :, 0] if image.channels == 1 else image.pixels
        Image.fromarray(arr, mode=mode).save(path, format="PNG")
    elif suffix == ".ppm":
        if image.channels != 3:
            raise ValueError("PPM requires a 3-channel image; use .pgm for grayscale")
        _write_pnm(image, path, b"P6")
    elif suffix == ".pgm":
        if image.channels != 1:
            raise ValueError("PGM requires a 1-channel image; use .ppm for color")
        _write_pnm(image, path, b"P5")
    else:
        raise UnsupportedFormatError(f"unsupported output extension '{suffix}'")


def _decode_png(data: bytes, path) -> ImageBuffer:
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            if img.mode != "L":
                img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise CorruptImageError(f"{path}: broken PNG stream: {exc}") from exc
    return image_from_array(arr)


def _decode_pnm(data: bytes, path) -> ImageBuffer:
    channels = 3 if data[:2] == b"P6" else 1
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptImageError(f"{path}: truncated PNM header")
        token = data[start:pos]
        if not token.isdigit():
            raise CorruptImageError(f"{path}: non-numeric PNM header field {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise CorruptImageError(f"{path}: invalid PNM dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormatError(f"{path}: only maxval 255 PNM supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    body = data[pos : pos + width * height * channels]
    if len(body) != width * height * channels:
        raise CorruptImageError(f"{path}: PNM pixel data truncated")
    arr = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
    return ImageBuffer(width=width, height=height, channels=channels, pixels=arr.copy())


def _write_pnm(image: ImageBuffer, path, magic: bytes):
    header = magic + f"\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.pixels.tobytes())


def to_grayscale(image: ImageBuffer) -> ImageBuffer:
    """Convert RGB to luminance: round(0.299 R + 0.587 G + 0.114 B).

    1-channel input is returned unchanged, so the operation is idempotent.
    """
    if image.channels == 1:
        return image
    px = image.pixels.astype(np.float64)
    gray = _LUMA[0] * px[:, :, 0] + _LUMA[1] * px[:, :, 1] + _LUMA[2] * px[:, :, 2]
    gray = np.clip(np.floor(gray + 0.5), 0, 255).astype(np.uint8)
    return image_from_array(gray)


def resize(image: ImageBuffer, out_w: int, out_h: int) -> ImageBuffer:
    """Bilinear resize with half-pixel-aligned sample centers.

    Resizing to the original dimensions is a pixel-exact identity.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output dims must be positive, got {out_w}x{out_h}")
    if out_w == image.width and out_h == image.height:
        return image
    y0, y1, fy = _resize_axis(out_h, image.height)
    x0, x1, fx = _resize_axis(out_w, image.width)
    px = image.pixels.astype(np.float64)
    fy = fy[:, np.newaxis, np.newaxis]
    fx = fx[np.newaxis, :, np.newaxis]
    top = px[y0][:, x0] * (1 - fx) + px[y0][:, x1] * fx
    bot = px[y1][:, x0] * (1 - fx) + px[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return image_from_array(out)


def _resize_axis(out_n: int, in_n: int):
    src = (np.arange(out_n) + 0.5) * (in_n / out_n) - 0.5
    src = np.clip(src, 0.0, in_n - 1.0)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, in_n - 1)
    return i0, i1, src - i0


def normalize(image: ImageBuffer) -> Tensor:
    """Scale pixels to [0, 1] and reorder to channel-planar CxHxW float64."""
    return image.pixels.astype(np.float64).transpose(2, 0, 1) / 255.0


def denormalize(t: Tensor) -> ImageBuffer:
    """Clamp a CxHxW tensor to [0, 1] and quantize back to 8-bit pixels."""
    if t.ndim != 3:
        raise ValueError(f"expected CxHxW tensor, got shape {t.shape}")
    arr = np.clip(t, 0.0, 1.0) * 255.0
    arr = np.floor(arr + 0.5).astype(np.uint8)
    return image_from_array(arr.transpose(1, 2, 0))


def luminance_of_rgb(rgb) -> float:
    """Luminance of a single RGB triple under the same weights as to_grayscale."""
    r, g, b = rgb
    return _LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b


@dataclass(frozen=True)
class ClassSplit:
    name: str
    train: tuple
    test: tuple


@dataclass(frozen=True)
class DatasetSplit:
    """Seeded, disjoint per-class train/test listings."""

    seed: int
    train_fraction: float
    classes: tuple

    @property
    def class_names(self) -> list:
        return [c.name for c in self.classes]

    def counts(self) -> dict:
        return {c.name: (len(c.train), len(c.test)) for c in self.classes}

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "train_fraction": self.train_fraction,
            "classes": [
                {"name": c.name, "train": sorted(c.train), "test": sorted(c.test)}
                for c in self.classes
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=False)


def split_from_json(text: str) -> DatasetSplit:
    raw = json.loads(text)
    classes = tuple(
        ClassSplit(name=c["name"], train=tuple(c["train"]), test=tuple(c["test"]))
        for c in raw["classes"]
    )
    return DatasetSplit(seed=raw["seed"], train_fraction=raw["train_fraction"], classes=classes)


def split_dataset(listing: dict, train_fraction: float, seed: int) -> DatasetSplit:
    """Split per-class file listings into train/test with a seeded shuffle.

    Files are sorted lexicographically, Fisher-Yates shuffled with a
    splitmix64 stream derived from (seed, class name), then cut at
    round(train_fraction * N) with ties rounding half-up. Identical
    (listing, fraction, seed) always yields an identical split.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if not listing:
        raise ValueError("listing has no classes")
    classes = []
    for name in sorted(listing):
        files = sorted(listing[name])
        if not files:
            raise ValueError(f"class '{name}' has no files")
        shuffled = _seeded_shuffle(files, (seed ^ _fnv1a64(name)) & _MASK64)
        n_train = int(math.floor(train_fraction * len(files) + 0.5))
        classes.append(
            ClassSplit(name=name, train=tuple(shuffled[:n_train]), test=tuple(shuffled[n_train:]))
        )
    return DatasetSplit(seed=seed, train_fraction=train_fraction, classes=tuple(classes))


def scan_dataset_dir(root) -> dict:
    """Build a class -> filenames listing from root/<class_name>/*.{png,ppm,pgm}."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    listing = {}
    for entry in sorted(root.iterdir()):
        if entry.is_dir():
            listing[entry.name] = sorted(
                f.name for f in entry.iterdir() if f.suffix.lower() in IMAGE_SUFFIXES
            )
    if not listing:
        raise FileNotFoundError(f"no class directories under {root}")
    return listing


def _fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def _seeded_shuffle(items: list, state: int) -> list:
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        state, r = splitmix64(state)
        j = r % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out
