"""Image and mask containers plus the compositing primitives used everywhere.

Intensities live in [0, 1] as float32; signed images (contact residuals)
extend the range to [-1, 1] and are only clamped on export. All operations
are pure: inputs are never mutated and arrays inside containers are
read-only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from .errors import ContractError, ShapeError

MUXF_MAGIC = b"MUXF"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Image:
    """H x W x C float32 intensity field, C in {1, 3}.

    Unsigned images hold values in [0, 1]; images created with
    ``signed=True`` may hold [-1, 1] and are clamped only when exported
    for display.
    """

    data: np.ndarray
    signed: bool = False

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ShapeError(f"image data must be HxWx1 or HxWx3, got {arr.shape}")
        arr = _freeze(arr.astype(np.float32, copy=True))
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def constant(cls, width, height, value, channels=3, signed=False) -> "Image":
        value = np.broadcast_to(np.asarray(value, np.float32), (channels,))
        data = np.tile(value, (height, width, 1))
        return cls(data, signed=signed)

    @classmethod
    def zeros(cls, width, height, channels=3, signed=False) -> "Image":
        return cls(np.zeros((height, width, channels), np.float32), signed=signed)

    @classmethod
    def ones(cls, width, height, channels=3) -> "Image":
        return cls(np.ones((height, width, channels), np.float32))

    def same_shape(self, other: "Image") -> bool:
        return self.data.shape == other.data.shape


@dataclass(frozen=True)
class Mask:
    """H x W float32 weight field in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ShapeError(f"mask data must be HxW, got {arr.shape}")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("mask weights must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr.copy()))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.data == 0.0) | (self.data == 1.0)))

    def mean(self) -> float:
        return float(self.data.mean())

    def complement(self) -> "Mask":
        return Mask(np.float32(1.0) - self.data)

    @classmethod
    def ones(cls, width, height) -> "Mask":
        return cls(np.ones((height, width), np.float32))

    @classmethod
    def zeros(cls, width, height) -> "Mask":
        return cls(np.zeros((height, width), np.float32))


class ClipCounter:
    """Counts values clipped by an operation that declares saturation."""

    def __init__(self):
        self.count = 0

    def add(self, n: int):
        self.count += int(n)


def _check_hw(a, b, what="operands"):
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeError(
            f"{what} disagree in size: {a.height}x{a.width} vs {b.height}x{b.width}"
        )


def hadamard(a: Image, b: Image) -> Image:
    """Per-pixel, per-channel product of two images, clamped to [0, 1].

    A single-channel operand broadcasts across the channels of the other.
    """
    _check_hw(a, b, "hadamard operands")
    if a.channels != b.channels and 1 not in (a.channels, b.channels):
        raise ShapeError(
            f"channel mismatch: {a.channels} vs {b.channels} (only 1-channel broadcasts)"
        )
    out = np.clip(a.data * b.data, 0.0, 1.0).astype(np.float32)
    return Image(out, signed=False)


def mask_blend(m: Mask, a: Image, b: Image) -> Image:
    """Convex per-pixel combination: m*a + (1-m)*b.

    The complement weight pair is canonicalized (wb = 1-m, wa = 1-wb) and
    the sum accumulated in float64, which makes the operation exact at
    m in {0, 1}, exact for a == b, and bit-for-bit symmetric under
    (m, a, b) -> (1-m, b, a).
    """
    _check_hw(m, a, "mask and image")
    _check_hw(m, b, "mask and image")
    if a.channels != b.channels:
        raise ShapeError(f"channel mismatch: {a.channels} vs {b.channels}")
    wb = np.float32(1.0) - m.data
    wa = np.float32(1.0) - wb
    acc = wa[:, :, None].astype(np.float64) * a.data + wb[:, :, None].astype(
        np.float64
    ) * b.data
    return Image(acc.astype(np.float32), signed=a.signed or b.signed)


def disk_kernel(radius: float) -> np.ndarray:
    """Normalized flat disk: equal taps at integer offsets with dx^2+dy^2 <= r^2."""
    if radius < 0:
        raise ValueError("blur radius must be >= 0")
    r = int(np.floor(radius))
    ys, xs = np.mgrid[-r : r + 1, -r : r + 1]
    k = ((xs * xs + ys * ys) <= radius * radius).astype(np.float64)
    return k / k.sum()


def disk_blur(img: Image, radius: float) -> Image:
    """Disk defocus blur with edge replication at the borders.

    radius 0 returns the input unchanged; a constant image is preserved
    up to float rounding because the kernel sums to one.
    """
    if radius < 1.0:
        return img
    k = disk_kernel(radius)
    src = img.data.astype(np.float64)
    out = np.empty_like(src)
    for c in range(img.channels):
        out[:, :, c] = ndimage.convolve(src[:, :, c], k, mode="nearest")
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32), signed=img.signed)


def clamp01(img: Image, counter: ClipCounter | None = None) -> Image:
    """Clamp into [0, 1], optionally counting how many pixels saturated."""
    if counter is not None:
        counter.add(np.count_nonzero((img.data < 0.0) | (img.data > 1.0)))
    return Image(np.clip(img.data, 0.0, 1.0), signed=False)


# --- file formats ---------------------------------------------------------


def to_uint8(img: Image) -> np.ndarray:
    """Quantize to 8 bits for display; signed images are mapped [-1,1] -> [0,1]."""
    data = img.data
    if img.signed:
        data = (data + 1.0) * 0.5
    data = np.clip(data, 0.0, 1.0)
    return np.round(data * 255.0).astype(np.uint8)


def write_png(path, img: Image):
    arr = to_uint8(img)
    if arr.shape[2] == 1:
        pil = PILImage.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(arr, mode="RGB")
    pil.save(path, format="PNG")


def read_png(path) -> Image:
    pil = PILImage.open(path)
    if pil.mode not in ("L", "RGB"):
        pil = pil.convert("RGB")
    arr = np.asarray(pil, dtype=np.float32) / 255.0
    return Image(arr)


def mask_to_png(path, m: Mask):
    write_png(path, Image(m.data[:, :, None]))


def mask_from_png(path) -> Mask:
    img = read_png(path)
    data = img.data.mean(axis=2) if img.channels == 3 else img.data[:, :, 0]
    return Mask(data)


def write_muxf(path, img: Image):
    """Lossless float container: 16-byte header (magic, width, height,
    channels as little-endian u32) followed by row-major float32 data."""
    header = MUXF_MAGIC + struct.pack("<III", img.width, img.height, img.channels)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(img.data, dtype="<f4").tobytes())


def read_muxf(path, signed: bool | None = None) -> Image:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != MUXF_MAGIC:
            raise ContractError(f"{path}: not a MUXF container")
        w, h, c = struct.unpack("<III", header[4:])
        raw = fh.read(4 * w * h * c)
    if len(raw) != 4 * w * h * c:
        raise ContractError(f"{path}: truncated MUXF payload")
    data = np.frombuffer(raw, dtype="<f4").reshape(h, w, c)
    if signed is None:
        signed = bool(data.min() < 0.0)
    return Image(data.astype(np.float32), signed=signed)
