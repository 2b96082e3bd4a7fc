"""Separable nearest / bilinear / bicubic resampling on 8-bit RGB buffers.

Pixel centres sit at half-integer coordinates. When shrinking, the kernel
support is widened by the reduction factor (antialiasing), and border
samples are replicated. Every output row of the weight matrix sums to one,
so constant images map to the same constant.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from ..errors import DegenerateOutput
from ..pixels import PixelBuffer


class Kernel(str, enum.Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"


def _triangle(x):
    x = np.abs(x)
    return np.where(x < 1.0, 1.0 - x, 0.0)


def _keys_cubic(x, a=-0.5):
    x = np.abs(x)
    x2 = x * x
    x3 = x2 * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x < 1.0, near, np.where(x < 2.0, far, 0.0))


_FILTERS = {Kernel.BILINEAR: (_triangle, 1.0), Kernel.BICUBIC: (_keys_cubic, 2.0)}


def weight_matrix(n_in: int, n_out: int, kernel: Kernel) -> np.ndarray:
    """``(n_out, n_in)`` interpolation matrix along one axis."""
    kernel = Kernel(kernel)
    W = np.zeros((n_out, n_in), dtype=np.float64)
    ratio = n_in / n_out
    dst = np.arange(n_out)
    if kernel is Kernel.NEAREST:
        src = np.minimum(np.floor((dst + 0.5) * ratio).astype(np.int64), n_in - 1)
        W[dst, src] = 1.0
        return W

    fn, support = _FILTERS[kernel]
    fscale = max(1.0, ratio)
    reach = support * fscale
    for j in dst:
        centre = (j + 0.5) * ratio - 0.5
        lo = int(math.floor(centre - reach))
        hi = int(math.ceil(centre + reach))
        taps = np.arange(lo, hi + 1)
        w = fn((taps - centre) / fscale)
        np.add.at(W[j], np.clip(taps, 0, n_in - 1), w)
    W /= W.sum(axis=1, keepdims=True)
    return W


def scaled_size(n: int, scale: float) -> int:
    # round half up, not Python's banker's rounding
    return int(math.floor(n * scale + 0.5))


def resample_to(img: PixelBuffer, width: int, height: int, kernel: Kernel = Kernel.BILINEAR) -> PixelBuffer:
    if width < 1 or height < 1:
        raise DegenerateOutput(f"target size {width}x{height} has a zero dimension")
    if (width, height) == (img.width, img.height):
        return img
    Wy = weight_matrix(img.height, height, kernel)
    Wx = weight_matrix(img.width, width, kernel)
    src = img.as_float()
    tmp = np.tensordot(Wy, src, axes=(1, 0))  # (height, w_in, 3)
    out = np.tensordot(tmp, Wx, axes=(1, 1))  # (height, 3, width)
    out = np.transpose(out, (0, 2, 1))
    return PixelBuffer(np.clip(np.rint(out), 0, 255).astype(np.uint8))
