"""Why both branches are needed, on two hand-made images.

    python demos/two_branches.py

A faithful reconstruction looks plausible but carries pixel traces; a
surreal image is clean at the pixel level but semantically wrong. Each
branch catches one, and OR fusion catches both.
"""

import tempfile
from pathlib import Path

from aligndet.corpus import REAL_PREFIX, PseudoReconstructor, build_pixel_set
from aligndet.expert import ExpertTrainConfig, train_expert
from aligndet.fusion import detect
from aligndet.scenes import render_scene, write_scenes
from aligndet.semantic import DpoBatchItem, dpo_loss, parse_verdict, stub_backend

tmp = Path(tempfile.mkdtemp())

# a small expert is enough to see pixel traces of the pseudo-reconstructor;
# its probabilities stay close to 0.5 but land on the right side of the cut
reals = write_scenes(tmp / "reals", 150, 0, prefix="real")
recon = PseudoReconstructor(1.0)
expert = train_expert(build_pixel_set(reals, recon, tmp / "pixel", seed=0), ExpertTrainConfig())

plain = render_scene(12345)
faithful_fake = recon.reconstruct(plain)
surreal_fake = render_scene(12345, surreal=True)

# the stub stands in for a served VLM: it only objects to the surreal image
vlm = stub_backend(
    {"surreal": "This is an AI-generated image. The sun sits below the ground line."},
    default=f"{REAL_PREFIX} The scene is coherent.",
)
for name, img in (("real", plain), ("faithful", faithful_fake), ("surreal", surreal_fake)):
    v = detect(img, vlm, expert, image_id=name)
    print(f"{name:>9}: semantic={v.semantic.decision.value:<9} pixel={v.pixel.decision.value:<9} "
          f"(p={v.pixel.score:.3f})  -> {v.final.value}")

# free-text answers are reduced to a verdict by their leading prefix
for text in ("This is an authentic image. Nothing odd.", "AI-generated, look at the hands.", "Hard to say."):
    print(f"{text!r:46} -> {parse_verdict(text).value}")

# the DPO objective starts at ln 2 and falls as the chosen answer gains margin
for margin in (0.0, 20.0, 100.0):
    loss, _ = dpo_loss([DpoBatchItem(-10.0 + margin, -10.0, -10.0, -10.0)], beta=0.05)
    print(f"DPO loss at margin {margin:5.1f}: {loss:.4f}")
