"""Canonical decoded image form and lossless image I/O."""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidImage

MIN_SOURCE_SIZE = 8


@dataclass(frozen=True, eq=False)
class PixelBuffer:
    """An 8-bit RGB image stored row-major as a read-only ``(height, width, 3)`` array.

    Intermediate results (e.g. a downsampled image) may be smaller than the
    8px floor; the floor is enforced when images are loaded from disk.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype != np.uint8:
            raise InvalidImage(f"expected uint8 samples, got {arr.dtype}")
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise InvalidImage(f"expected (height, width, 3) samples, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidImage("image has a zero dimension")
        arr = np.array(arr, order="C", copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr) -> "PixelBuffer":
        """Build from any array-like; grayscale is replicated and alpha dropped."""
        arr = np.asarray(arr)
        if arr.ndim == 2:
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        elif arr.ndim == 3 and arr.shape[2] == 1:
            arr = np.repeat(arr, 3, axis=2)
        elif arr.ndim == 3 and arr.shape[2] == 4:
            arr = arr[:, :, :3]
        if arr.dtype != np.uint8:
            arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
        return cls(arr)

    @classmethod
    def constant(cls, width: int, height: int, color=(128, 128, 128)) -> "PixelBuffer":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[...] = np.asarray(color, dtype=np.uint8)
        return cls(arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def as_float(self) -> np.ndarray:
        return self.data.astype(np.float64)

    def digest(self) -> str:
        """SHA-256 over dimensions and samples."""
        h = hashlib.sha256()
        h.update(f"{self.width}x{self.height}x3:".encode())
        h.update(self.data.tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, PixelBuffer):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash(self.digest())

    def __repr__(self):
        return f"PixelBuffer({self.width}x{self.height})"


def decode_image(raw: bytes, min_size: int = MIN_SOURCE_SIZE) -> PixelBuffer:
    try:
        with Image.open(io.BytesIO(raw)) as im:
            im.load()
            rgb = _to_rgb(im)
    except InvalidImage:
        raise
    except Exception as exc:  # PIL raises a zoo of exception types
        raise InvalidImage(f"cannot decode image: {exc}") from exc
    buf = PixelBuffer(np.asarray(rgb, dtype=np.uint8))
    if buf.width < min_size or buf.height < min_size:
        raise InvalidImage(f"image {buf.width}x{buf.height} is below the {min_size}px floor")
    return buf


def load_image(path, min_size: int = MIN_SOURCE_SIZE) -> PixelBuffer:
    """Decode any Pillow-readable file to canonical 8-bit RGB."""
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise InvalidImage(f"no such image: {path}") from exc
    return decode_image(raw, min_size=min_size)


def _to_rgb(im: Image.Image) -> Image.Image:
    if im.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(im, dtype=np.float64)
        scale = 255.0 / 65535.0 if arr.max(initial=0) > 255 else 1.0
        gray = np.clip(np.rint(arr * scale), 0, 255).astype(np.uint8)
        return Image.fromarray(np.repeat(gray[:, :, None], 3, axis=2))
    if im.mode == "RGB":
        return im
    if im.mode in ("RGBA", "LA", "PA"):
        # alpha is dropped, never composited
        im = im.convert("RGBA") if im.mode != "RGBA" else im
        return Image.fromarray(np.asarray(im)[:, :, :3])
    return im.convert("RGB")


def encode_png(img: PixelBuffer) -> bytes:
    out = io.BytesIO()
    Image.fromarray(img.data).save(out, format="PNG", optimize=False, compress_level=6)
    return out.getvalue()


def save_png(img: PixelBuffer, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_png(img))
    return path
