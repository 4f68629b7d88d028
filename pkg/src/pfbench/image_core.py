"""Pixel containers, range conventions and raster I/O.

Two array conventions are used everywhere:

* ``ImageU8``: ``uint8`` array of shape ``(H, W, C)``, interleaved, ``C`` in {1, 3}.
* ``ImageF32``: ``float32`` array of shape ``(C, H, W)``, planar, nominal range [0, 1].

Both are plain NumPy arrays; the helpers below validate and convert between them.
"""

import io
from dataclasses import dataclass

import cv2
import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError, MalformedFile, OutOfBounds, ShapeMismatch, UnsupportedFormat

__all__ = [
    "Rect",
    "as_u8",
    "as_f32",
    "decode_image",
    "encode_png",
    "read_image",
    "write_png",
    "u8_to_f32",
    "f32_to_u8",
    "crop",
    "image_size",
]

_ALPHA_MODES = {"RGBA", "LA", "PA", "La", "RGBa"}


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise OutOfBounds(f"rect must be at least 1x1, got {self.width}x{self.height}")

    def compose(self, inner):
        """Rect of ``inner`` (relative to self) expressed in self's parent frame."""
        return Rect(self.x + inner.x, self.y + inner.y, inner.width, inner.height)


def as_u8(img):
    """Validate an ImageU8, promoting a 2-D array to one channel."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise ShapeMismatch(f"ImageU8 must be uint8, got {img.dtype}")
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ShapeMismatch(f"ImageU8 must be (H, W, 1|3), got {img.shape}")
    return img


def as_f32(img):
    """Validate an ImageF32 (planar, finite), promoting a 2-D array to one channel."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        img = img[None]
    if img.ndim != 3 or min(img.shape) < 1:
        raise ShapeMismatch(f"ImageF32 must be (C, H, W), got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise DataError("ImageF32 contains non-finite samples")
    return img


def image_size(img):
    """(width, height) of a planar image."""
    return img.shape[2], img.shape[1]


def _probe(data):
    try:
        with Image.open(io.BytesIO(data)) as im:
            return im.format, im.mode, dict(im.info)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise MalformedFile(f"undecodable raster: {exc}") from exc


def decode_image(data):
    """Decode PNG (8/16-bit, gray/RGB) or baseline TIFF bytes into an ImageU8.

    16-bit samples are mapped to 8 bits as round(v / 257).
    """
    data = bytes(data)
    fmt, mode, info = _probe(data)
    if fmt not in ("PNG", "TIFF"):
        raise UnsupportedFormat(f"unsupported container {fmt}")
    if mode == "P" and "transparency" in info:
        raise UnsupportedFormat("palette image with transparency")
    if mode in _ALPHA_MODES:
        raise UnsupportedFormat(f"alpha channels are not supported (mode {mode})")

    arr = cv2.imdecode(np.frombuffer(data, np.uint8), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise MalformedFile("raster decoder rejected the payload")
    if arr.dtype == np.uint16:
        arr = ((2 * arr.astype(np.uint32) + 257) // 514).astype(np.uint8)
    elif arr.dtype == np.bool_:
        arr = arr.astype(np.uint8) * 255
    elif arr.dtype != np.uint8:
        raise UnsupportedFormat(f"unsupported sample type {arr.dtype}")
    if arr.ndim == 2:
        arr = arr[:, :, None]
    elif arr.shape[2] == 3:
        arr = arr[:, :, ::-1]
    elif arr.shape[2] == 4:
        raise UnsupportedFormat("alpha channels are not supported")
    else:
        raise UnsupportedFormat(f"unsupported channel count {arr.shape[2]}")
    return np.ascontiguousarray(arr)


def encode_png(img):
    """Encode an ImageU8 as 8-bit PNG bytes (deterministic)."""
    img = as_u8(img)
    pil = Image.fromarray(img[:, :, 0] if img.shape[2] == 1 else img)
    buf = io.BytesIO()
    pil.save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def read_image(path):
    with open(path, "rb") as fh:
        return decode_image(fh.read())


def write_png(path, img):
    """Write an ImageU8 or ImageF32 (quantized) as 8-bit PNG."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        img = f32_to_u8(img)
    with open(path, "wb") as fh:
        fh.write(encode_png(img))


def u8_to_f32(img):
    img = as_u8(img)
    return np.ascontiguousarray(np.moveaxis(img, 2, 0).astype(np.float32) / np.float32(255.0))


def f32_to_u8(img):
    """Clamp to [0, 1], scale by 255 and round half away from zero."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    scaled = np.clip(img, 0.0, 1.0) * 255.0
    # values are non-negative, so floor(x + 0.5) is half-away-from-zero
    q = np.floor(scaled + 0.5).astype(np.uint8)
    return np.ascontiguousarray(np.moveaxis(q, 0, 2))


def crop(img, r):
    img = np.asarray(img)
    _, h, w = img.shape
    if r.x < 0 or r.y < 0 or r.x + r.width > w or r.y + r.height > h:
        raise OutOfBounds(f"{r} does not fit in {w}x{h} image")
    return img[:, r.y:r.y + r.height, r.x:r.x + r.width].copy()
