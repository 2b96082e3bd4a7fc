"""Procedural desk-scale scenes standing in for photographs.

Each scene is a small landscape (sky, horizon, ground texture, sun, trees)
finished with photographic sensor noise. ``surreal=True`` renders the same
layout with a broken physical arrangement (upside-down world, or a sun
buried in the ground under inverted trees), drawn by the same renderer, so a
scene and its surreal twin differ in semantics but not in pixel statistics.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import ImageRecord, Label, Subset
from .pixels import PixelBuffer, save_png
from .seeding import derive_seed

STYLES = {
    # sensor noise sigma range, colour temperature shift
    "photo": ((2.5, 6.0), (0.0, 0.0, 0.0)),
    "alt": ((3.5, 7.0), (18.0, 4.0, -16.0)),
}


def _pink_noise(rng, h, w, beta=1.6):
    spectrum = rng.standard_normal((h, w)) + 1j * rng.standard_normal((h, w))
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    f = np.sqrt(fx * fx + fy * fy)
    f[0, 0] = 1.0
    field = np.real(np.fft.ifft2(spectrum / f ** (beta / 2)))
    field -= field.mean()
    return field / (field.std() + 1e-12)


def render_scene(seed: int, size: int = 64, surreal: bool = False, style: str = "photo") -> PixelBuffer:
    noise_range, tint = STYLES[style]
    rng = np.random.default_rng(seed)
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    horizon = rng.uniform(0.35, 0.65) * h
    sky_top = np.array([70, 120, 210]) + rng.uniform(-20, 20, 3)
    sky_low = np.array([170, 200, 235]) + rng.uniform(-15, 15, 3)
    ground = np.array([70, 120, 50]) if rng.random() < 0.6 else np.array([130, 105, 70])
    ground = ground + rng.uniform(-20, 20, 3)
    sun_x = rng.uniform(0.15, 0.85) * w
    sun_y = rng.uniform(0.1, 0.8) * horizon
    sun_r = rng.uniform(2.5, 5.5)
    n_trees = int(rng.integers(1, 4))
    trees = [
        (rng.uniform(0.1, 0.9) * w, rng.uniform(0.12, 0.3) * h, rng.uniform(2.5, 5.0), rng.uniform(0.8, 1.6))
        for _ in range(n_trees)
    ]
    variant = "inverted" if rng.random() < 0.5 else "sunken"
    texture = _pink_noise(rng, h, w)
    sensor = rng.uniform(*noise_range)

    t = np.clip(yy / max(horizon, 1.0), 0.0, 1.0)[..., None]
    img = (1 - t) * sky_top + t * sky_low
    below = (yy >= horizon)[..., None]
    img = np.where(below, ground + 14.0 * texture[..., None], img)

    sun_cy = sun_y
    crown_side = -1.0
    if surreal and variant == "sunken":
        sun_cy = horizon + (h - horizon) * rng.uniform(0.3, 0.7)
        crown_side = 1.0
    sun = (xx - sun_x) ** 2 + (yy - sun_cy) ** 2 <= sun_r**2
    img[sun] = np.array([250, 230, 120])

    for tx, trunk_h, crown_r, trunk_w in trees:
        base = horizon + 2.0
        top = base + crown_side * trunk_h
        y0, y1 = sorted((base, top))
        trunk = (np.abs(xx - tx) <= trunk_w) & (yy >= y0) & (yy <= y1)
        img[trunk] = np.array([90, 60, 35])
        crown = (xx - tx) ** 2 + (yy - top) ** 2 <= crown_r**2
        img[crown] = np.array([35, 95, 40]) + 10.0 * texture[crown][:, None]

    if surreal and variant == "inverted":
        img = img[::-1]

    img = ndimage.gaussian_filter(img, sigma=(0.6, 0.6, 0), mode="nearest")
    img = img + np.asarray(tint)
    img = img + sensor * rng.standard_normal(img.shape)
    return PixelBuffer(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def write_scenes(
    out_dir,
    n: int,
    seed: int,
    *,
    prefix: str = "scene",
    label: Label = Label.REAL,
    surreal: bool = False,
    style: str = "photo",
    size: int = 64,
    scene_key: str | None = None,
    generator: str | None = None,
) -> list:
    """Render ``n`` scenes to PNG and return real/synthetic records for them.

    Scene ``i`` draws its layout from ``derive_seed(seed, f"{scene_key}-{i}")``,
    so passing the same ``scene_key`` for a real batch and a surreal batch
    yields matched twins.
    """
    out_dir = Path(out_dir)
    key = scene_key or prefix
    records = []
    for i in range(n):
        rid = f"{prefix}-{i:05d}"
        img = render_scene(derive_seed(seed, f"{key}-{i}"), size=size, surreal=surreal, style=style)
        path = save_png(img, out_dir / f"{rid}.png")
        records.append(
            ImageRecord(
                id=rid,
                source_path=str(path.resolve()),
                label=label,
                semantic_id=rid,
                subset=Subset.UNASSIGNED,
                generator=generator,
            )
        )
    return records
