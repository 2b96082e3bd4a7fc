"""A self-contained desk-scale workspace for driving the CLI end to end.

Lays out raw inputs the way the CLI expects them (real and surreal image
directories, a pairing file, captions, per-generator benchmark fakes), a
semantic stub fixture, held-out probe splits, and a ``config.yaml`` whose
relative paths point at all of it.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import yaml

from .core import Label
from .corpus import REAL_PREFIX, SYNTHETIC_PREFIX, PseudoReconstructor, build_pixel_set, build_semantic_set
from .pixels import load_image, save_png
from .scenes import render_scene, write_scenes
from .seeding import derive_seed


def _semantic_split(root: Path, name: str, n: int, seed: int, style: str):
    reals = write_scenes(root / name / "reals", n, seed, prefix=f"{name}-real", scene_key=name)
    fakes = write_scenes(
        root / name / "fakes", n, seed, prefix=f"{name}-fake", scene_key=name, surreal=True,
        label=Label.SYNTHETIC, style=style, generator=f"surreal-{style}",
    )
    pairing = {f.id: r.id for f, r in zip(fakes, reals)}
    return build_semantic_set(reals, fakes, pairing, seed=seed, out_dir=root / name / "set", name=name)


def _pixel_split(root: Path, name: str, n: int, seed: int, strength: float):
    reals = write_scenes(root / name / "reals", n, seed, prefix=f"{name}-real", scene_key=name)
    return build_pixel_set(reals, PseudoReconstructor(strength), root / name / "set", name=name, seed=seed)


def write_demo_workspace(root, *, n_train: int = 40, n_eval: int = 20, seed: int = 0, size: int = 64) -> Path:
    """Write the workspace under ``root`` and return the path of its ``config.yaml``."""
    root = Path(root)
    write_scenes(root / "reals", n_train, seed, prefix="real", scene_key="world", size=size)
    write_scenes(root / "fakes", n_train, seed, prefix="surreal", scene_key="world", surreal=True, label=Label.SYNTHETIC, size=size)
    pairing = {f"surreal-{i:05d}": f"real-{i:05d}" for i in range(n_train)}
    (root / "pairing.json").write_text(json.dumps(pairing, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    # benchmark: reals with captions, faithful fakes per generator, surreal fakes per generator
    bench = root / "bench"
    reals = write_scenes(bench / "reals", n_eval, seed, prefix="bench", scene_key="bench", size=size)
    stub = []
    with (bench / "captions.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "caption", "surreal_caption"])
        for i, r in enumerate(reals):
            w.writerow([r.id, f"a quiet landscape, scene {i}", f"the same landscape with the world turned over, scene {i}"])
            stub.append({"image_id": r.id, "text": f"{REAL_PREFIX} Lighting and layout are physically consistent."})
    for strength in (1.0, 0.7):
        gen = f"recon-{strength:g}"
        recon = PseudoReconstructor(strength)
        for r in reals:
            save_png(recon.reconstruct(load_image(r.source_path)), bench / "faithful" / gen / f"{r.id}.png")
            stub.append({"image_id": f"{gen}__faithful__{r.id}", "text": f"{REAL_PREFIX} Nothing in the scene is implausible."})
    for style in ("photo", "alt"):
        gen = f"surreal-{style}"
        for i, r in enumerate(reals):
            img = render_scene(derive_seed(seed, f"bench-{i}"), size=size, surreal=True, style=style)
            save_png(img, bench / "surreal" / gen / f"{r.id}.png")
            stub.append({"image_id": f"{gen}__surreal__{r.id}", "text": f"{SYNTHETIC_PREFIX} The sun and trees defy gravity."})
    (root / "stub.jsonl").write_text("".join(json.dumps(row, sort_keys=True) + "\n" for row in stub), encoding="utf-8")

    probe = root / "probe"
    _semantic_split(probe, "semantic_val", n_eval, seed, "photo")
    _semantic_split(probe, "semantic_test", n_eval, seed, "alt")
    _pixel_split(probe, "pixel_val", n_eval, seed, 1.0)
    _pixel_split(probe, "pixel_test", n_eval, seed, 0.7)

    config = {
        "seed": seed,
        "data": {
            "reals": "reals",
            "fakes": "fakes",
            "pairing": "pairing.json",
            "benchmark_reals": "bench/reals",
            "captions": "bench/captions.csv",
            "faithful_fakes": "bench/faithful",
            "surreal_fakes": "bench/surreal",
        },
        "backends": {"semantic_stub": "stub.jsonl"},
        "probe": {"splits": {s: f"probe/{s}/set/manifest.jsonl" for s in ("semantic_val", "semantic_test", "pixel_val", "pixel_test")}},
    }
    path = root / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")
    return path
