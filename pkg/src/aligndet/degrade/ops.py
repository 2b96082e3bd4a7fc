"""Deterministic post-processing operators and their serializable op records."""

from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from ..errors import EncodeError, InvalidParameter, ParseError
from ..pixels import PixelBuffer
from ..seeding import check_seed
from .resample import Kernel, resample_to, scaled_size

# 4:2:0 below this quality, 4:4:4 at or above it
SUBSAMPLING_CUTOFF = 95


def jpeg_compress(img: PixelBuffer, quality: int) -> PixelBuffer:
    """Baseline JPEG encode/decode round trip with the standard scaled tables."""
    quality = _check_quality(quality)
    subsampling = 2 if quality < SUBSAMPLING_CUTOFF else 0
    out = io.BytesIO()
    try:
        Image.fromarray(img.data).save(
            out,
            format="JPEG",
            quality=quality,
            subsampling=subsampling,
            optimize=False,
            progressive=False,
        )
    except (OSError, ValueError) as exc:
        raise EncodeError(str(exc)) from exc
    out.seek(0)
    with Image.open(out) as decoded:
        arr = np.asarray(decoded.convert("RGB"), dtype=np.uint8)
    return PixelBuffer(arr)


def double_jpeg(img: PixelBuffer, quality: int) -> PixelBuffer:
    return jpeg_compress(jpeg_compress(img, quality), quality)


def resize(img: PixelBuffer, scale: float, kernel=Kernel.BILINEAR) -> PixelBuffer:
    """Rescale both dimensions by ``scale``; output size is rounded half up."""
    scale = _check_scale(scale, upper=4.0)
    kernel = Kernel(kernel)
    if scale == 1.0:
        return img
    return resample_to(img, scaled_size(img.width, scale), scaled_size(img.height, scale), kernel)


def double_resize(img: PixelBuffer, scale: float, kernel=Kernel.BILINEAR) -> PixelBuffer:
    """Downsample by ``scale`` then upsample back to the exact original size."""
    scale = _check_scale(scale, upper=1.0)
    kernel = Kernel(kernel)
    if scale == 1.0:
        return img
    small = resample_to(img, scaled_size(img.width, scale), scaled_size(img.height, scale), kernel)
    return resample_to(small, img.width, img.height, kernel)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: PixelBuffer, sigma: float) -> PixelBuffer:
    sigma = _check_sigma(sigma)
    k = gaussian_kernel(sigma)
    arr = img.as_float()
    arr = ndimage.correlate1d(arr, k, axis=0, mode="reflect")
    arr = ndimage.correlate1d(arr, k, axis=1, mode="reflect")
    return PixelBuffer(np.clip(np.rint(arr), 0, 255).astype(np.uint8))


def gaussian_noise(img: PixelBuffer, sigma: float, seed: int) -> PixelBuffer:
    sigma = _check_sigma(sigma)
    rng = np.random.default_rng(check_seed(seed))
    noisy = img.as_float() + sigma * rng.standard_normal(img.shape)
    return PixelBuffer(np.clip(np.rint(noisy), 0, 255).astype(np.uint8))


def _check_quality(q) -> int:
    if isinstance(q, bool) or not isinstance(q, (int, np.integer)) or not 1 <= q <= 100:
        raise InvalidParameter(f"JPEG quality must be an integer in 1..100, got {q!r}")
    return int(q)


def _check_scale(scale, upper: float) -> float:
    scale = float(scale)
    if not (0.0 < scale <= upper):
        raise InvalidParameter(f"scale must lie in (0, {upper}], got {scale}")
    return scale


def _check_sigma(sigma) -> float:
    sigma = float(sigma)
    if not (sigma > 0.0 and math.isfinite(sigma)):
        raise InvalidParameter(f"sigma must be positive and finite, got {sigma}")
    return sigma


# --- op records -----------------------------------------------------------


@dataclass(frozen=True)
class Jpeg:
    quality: int
    kind = "jpeg"

    def __post_init__(self):
        object.__setattr__(self, "quality", _check_quality(self.quality))

    def apply(self, img):
        return jpeg_compress(img, self.quality)


@dataclass(frozen=True)
class DoubleJpeg:
    quality: int
    kind = "double_jpeg"

    def __post_init__(self):
        object.__setattr__(self, "quality", _check_quality(self.quality))

    def apply(self, img):
        return double_jpeg(img, self.quality)


@dataclass(frozen=True)
class Resize:
    scale: float
    kernel: Kernel = Kernel.BILINEAR
    kind = "resize"

    def __post_init__(self):
        object.__setattr__(self, "scale", _check_scale(self.scale, 4.0))
        object.__setattr__(self, "kernel", Kernel(self.kernel))

    def apply(self, img):
        return resize(img, self.scale, self.kernel)


@dataclass(frozen=True)
class DoubleResize:
    scale: float
    kernel: Kernel = Kernel.BILINEAR
    kind = "double_resize"

    def __post_init__(self):
        object.__setattr__(self, "scale", _check_scale(self.scale, 1.0))
        object.__setattr__(self, "kernel", Kernel(self.kernel))

    def apply(self, img):
        return double_resize(img, self.scale, self.kernel)


@dataclass(frozen=True)
class GaussianBlur:
    sigma: float
    kind = "gaussian_blur"

    def __post_init__(self):
        object.__setattr__(self, "sigma", _check_sigma(self.sigma))

    def apply(self, img):
        return gaussian_blur(img, self.sigma)


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float
    seed: int
    kind = "gaussian_noise"

    def __post_init__(self):
        object.__setattr__(self, "sigma", _check_sigma(self.sigma))
        object.__setattr__(self, "seed", check_seed(int(self.seed)))

    def apply(self, img):
        return gaussian_noise(img, self.sigma, self.seed)


OP_TYPES = {cls.kind: cls for cls in (Jpeg, DoubleJpeg, Resize, DoubleResize, GaussianBlur, GaussianNoise)}


def op_to_dict(op) -> dict:
    d = {"kind": op.kind}
    for key, value in asdict(op).items():
        d[key] = value.value if isinstance(value, Kernel) else value
    return d


def op_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in OP_TYPES:
        raise ParseError(f"unknown degradation op kind {kind!r}")
    try:
        return OP_TYPES[kind](**d)
    except TypeError as exc:
        raise ParseError(f"bad parameters for {kind}: {exc}") from exc
