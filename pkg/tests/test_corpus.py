import csv
import json

import numpy as np
import pytest

from aligndet import corpus as cp
from aligndet.core import ImageRecord, Label, ManifestKind, Subset, load_manifest
from aligndet.degrade import DEFAULT_HEAVY_PROFILE, double_resize, jpeg_compress
from aligndet.degrade.resample import Kernel
from aligndet.errors import (
    InvalidParameter,
    ParseError,
    ReconstructionFailure,
    UnknownPairTarget,
    UnmatchedCaption,
)
from aligndet.pixels import load_image
from aligndet.scenes import write_scenes
from aligndet.seeding import caption_hash


def mad(a, b):
    return float(np.abs(a.as_float() - b.as_float()).mean())


@pytest.fixture
def reals(tmp_path):
    return write_scenes(tmp_path / "reals", 6, 3, prefix="real", scene_key="w", size=32)


@pytest.fixture
def fakes(tmp_path):
    return write_scenes(tmp_path / "fakes", 6, 3, prefix="fake", scene_key="w", size=32, surreal=True, label=Label.SYNTHETIC)


# --- constants ------------------------------------------------------------------


def test_prefix_constants_byte_exact():
    assert cp.SYNTHETIC_PREFIX == "This is an AI-generated image."
    assert cp.REAL_PREFIX == "This is an authentic image."
    assert cp.DPO_PROMPT == "Is this image AI-generated or authentic? Answer and explain."


def test_default_corpus_sizes():
    assert cp.PIXEL_SET_REALS == 11_800
    assert (cp.SEMANTIC_SET_REALS, cp.SEMANTIC_SET_FAKES) == (5_000, 5_000)
    assert cp.AIGI_NOW_PER_GENERATOR == 1_000


# --- pseudo reconstruction ----------------------------------------------------------


@pytest.mark.parametrize("strength,scale,quality", [(1.0, 0.5, 68), (0.5, 0.75, 83), (0.2, 0.9, 92), (0.05, 0.975, 97)])
def test_pseudo_recon_parameters(strength, scale, quality):
    r = cp.PseudoReconstructor(strength)
    assert (r.scale, r.quality) == (scale, quality)


def test_pseudo_recon_is_its_formula(photo):
    expect = jpeg_compress(double_resize(photo, 0.5, Kernel.BICUBIC), 68)
    assert cp.pseudo_reconstruct(photo, 1.0) == expect


def test_pseudo_recon_dims_and_difference(photo):
    out = cp.pseudo_reconstruct(photo, 0.5)
    assert out.shape == photo.shape and mad(out, photo) > 0


def test_pseudo_recon_monotone_in_strength(photo):
    # frozen on the committed photo: 3.6544, 4.8664, 7.2507
    d = [mad(photo, cp.pseudo_reconstruct(photo, s)) for s in (0.2, 0.5, 1.0)]
    assert d == pytest.approx([3.6544053819444446, 4.866391782407407, 7.250687210648148], abs=1e-9)
    assert d[0] <= d[1] <= d[2]


@pytest.mark.parametrize("s", [0.0, 1.01, -0.5])
def test_pseudo_recon_strength_range(s):
    with pytest.raises(InvalidParameter):
        cp.PseudoReconstructor(s)


# --- pixel set ------------------------------------------------------------------------


def test_pixel_set_shape(reals, tmp_path):
    m = cp.build_pixel_set(reals, cp.PseudoReconstructor(1.0), tmp_path / "px")
    assert m.kind is ManifestKind.PIXEL_SUPERVISION and len(m) == 12
    assert len(m.with_label(Label.REAL)) == len(m.with_label(Label.SYNTHETIC)) == 6
    real_ids = {r.id for r in m.with_label(Label.REAL)}
    for f in m.with_label(Label.SYNTHETIC):
        assert f.semantic_id in real_ids and f.degradation is None and f.generator == "pseudo-recon-1"
    assert cp.audit_orthogonality(m) == []
    assert load_manifest(tmp_path / "px" / "manifest.jsonl") == m


def test_pixel_set_deterministic(reals, tmp_path):
    a = cp.build_pixel_set(reals, cp.PseudoReconstructor(0.7), tmp_path / "a")
    b = cp.build_pixel_set(reals, cp.PseudoReconstructor(0.7), tmp_path / "b")
    assert (tmp_path / "a" / "manifest.jsonl").read_bytes() == (tmp_path / "b" / "manifest.jsonl").read_bytes()
    for r in a.with_label(Label.SYNTHETIC):
        assert (tmp_path / "a" / r.source_path).read_bytes() == (tmp_path / "b" / r.source_path).read_bytes()


def test_pixel_set_sampling(reals, tmp_path):
    m = cp.build_pixel_set(reals, cp.PseudoReconstructor(1.0), tmp_path / "px", n_real=4, seed=9)
    assert len(m) == 8


def test_pixel_set_rejects_fakes(fakes, tmp_path):
    with pytest.raises(InvalidParameter):
        cp.build_pixel_set(fakes, cp.PseudoReconstructor(1.0), tmp_path)


def test_reconstruction_failure_carries_id(reals, tmp_path):
    class Broken:
        name = "broken"

        def reconstruct(self, img):
            raise RuntimeError("boom")

    with pytest.raises(ReconstructionFailure) as exc:
        cp.build_pixel_set(reals, Broken(), tmp_path)
    assert exc.value.record_id == "real-00000"


def test_reconstruction_size_change_is_failure(reals, tmp_path):
    class Shrink:
        name = "shrink"

        def reconstruct(self, img):
            from aligndet.degrade import resize

            return resize(img, 0.5)

    with pytest.raises(ReconstructionFailure):
        cp.build_pixel_set(reals, Shrink(), tmp_path)


# --- semantic set -----------------------------------------------------------------------


def pairing_of(fakes, reals):
    return {f.id: r.id for f, r in zip(fakes, reals)}


def test_semantic_paired_specs_byte_equal(reals, fakes, tmp_path):
    m = cp.build_semantic_set(reals, fakes, pairing_of(fakes, reals), DEFAULT_HEAVY_PROFILE, 11, tmp_path / "s")
    assert m.kind is ManifestKind.SEMANTIC_SUPERVISION and len(m) == 12
    by = m.by_id()
    for f, r in zip(fakes, reals):
        assert by[f.id].degradation.to_json() == by[r.id].degradation.to_json()
        assert by[f.id].semantic_id == r.id
    assert all(r.degradation is not None and r.subset is Subset.SEMANTIC_SET for r in m.records)
    assert cp.audit_orthogonality(m) == []


def test_semantic_pairs_get_distinct_specs_across_pairs(reals, fakes, tmp_path):
    m = cp.build_semantic_set(reals, fakes, pairing_of(fakes, reals), seed=11, out_dir=tmp_path / "s")
    specs = {r.degradation.to_json() for r in m.with_label(Label.REAL)}
    assert len(specs) == len(reals)


def test_semantic_deterministic(reals, fakes, tmp_path):
    pairing = pairing_of(fakes, reals)
    a = cp.build_semantic_set(reals, fakes, pairing, seed=5, out_dir=tmp_path / "a")
    b = cp.build_semantic_set(reals[::-1], fakes[::-1], pairing, seed=5, out_dir=tmp_path / "b")
    assert a == b
    assert (tmp_path / "a" / "manifest.jsonl").read_bytes() == (tmp_path / "b" / "manifest.jsonl").read_bytes()
    for r in a.records:
        assert a.load_image(r).digest() == b.load_image(r).digest()


def test_semantic_images_are_the_spec_applied(reals, fakes, tmp_path):
    m = cp.build_semantic_set(reals, fakes, pairing_of(fakes, reals), seed=2, out_dir=tmp_path / "s")
    src = {r.id: r for r in reals + fakes}
    for r in m.records[:4]:
        assert m.load_image(r) == r.degradation.apply(load_image(src[r.id].source_path))


def test_semantic_unpaired_mode(reals, fakes, tmp_path):
    m = cp.build_semantic_set(reals, fakes, None, seed=1, out_dir=tmp_path / "u", n_real=3, n_fake=4)
    assert len(m.with_label(Label.REAL)) == 3 and len(m.with_label(Label.SYNTHETIC)) == 4
    assert len({r.degradation.to_json() for r in m.records}) == 7


def test_semantic_counts_only_unpaired(reals, fakes, tmp_path):
    with pytest.raises(InvalidParameter):
        cp.build_semantic_set(reals, fakes, pairing_of(fakes, reals), out_dir=tmp_path, n_real=2)


def test_unknown_pair_target(reals, fakes, tmp_path):
    with pytest.raises(UnknownPairTarget) as exc:
        cp.build_semantic_set(reals, fakes, {fakes[0].id: "ghost"}, out_dir=tmp_path)
    assert (exc.value.fake_id, exc.value.real_id) == (fakes[0].id, "ghost")


def test_semantic_label_checks(reals, fakes, tmp_path):
    with pytest.raises(InvalidParameter):
        cp.build_semantic_set(fakes, fakes, None, out_dir=tmp_path)


def test_mixed_combination(reals, fakes, tmp_path):
    px = cp.build_pixel_set(reals, cp.PseudoReconstructor(1.0), tmp_path / "px", name="px")
    se = cp.build_semantic_set(reals, fakes, pairing_of(fakes, reals), out_dir=tmp_path / "se", name="se")
    with pytest.raises(Exception):
        cp.combine_mixed([px, se])  # the same reals appear in both
    mixed = cp.combine_mixed([px, se], namespace=True)
    assert mixed.kind is ManifestKind.MIXED_SUPERVISION and len(mixed) == len(px) + len(se)
    assert all(r.id.split("/")[0] in ("px", "se") for r in mixed.records)
    assert all(mixed.resolve(r).exists() for r in mixed.records)


def test_audit_flags_leaks(reals, fakes, tmp_path):
    px = cp.build_pixel_set(reals, cp.PseudoReconstructor(1.0), tmp_path / "px")
    r0 = px.with_label(Label.SYNTHETIC)[0]
    ident = cp._with(r0, source_path=str(px.resolve(px.by_id()[r0.semantic_id])))
    leaked = px.replace(records=tuple(ident if r.id == r0.id else r for r in px.records))
    assert [p.record_id for p in cp.audit_orthogonality(leaked)] == [r0.id]


# --- DPO pairs --------------------------------------------------------------------------


@pytest.fixture
def semantic_set(reals, fakes, tmp_path):
    return cp.build_semantic_set(reals, fakes, pairing_of(fakes, reals), seed=4, out_dir=tmp_path / "sem")


def test_dpo_bare_prefixes(semantic_set):
    pairs = cp.build_dpo_pairs(semantic_set)
    assert len(pairs) == len(semantic_set) and pairs.failures == []
    by = {p.image_id: p for p in pairs}
    for r in semantic_set.records:
        p = by[r.id]
        assert p.prompt == cp.DPO_PROMPT
        if r.label is Label.SYNTHETIC:
            assert (p.chosen, p.rejected) == ("This is an AI-generated image.", "This is an authentic image.")
        else:
            assert p.chosen.startswith("This is an authentic image.")
            assert p.rejected.startswith("This is an AI-generated image.")


def test_dpo_responder_continuations(semantic_set):
    seen = []

    def responder(img, prompt, prefix):
        seen.append(prefix)
        return "The horizon is level." if prefix == cp.REAL_PREFIX else f"{prefix} The sun is underground."

    pairs = cp.build_dpo_pairs(semantic_set, responder)
    p = next(p for p in pairs if p.image_id.startswith("fake"))
    assert p.chosen == "This is an AI-generated image. The sun is underground."
    assert p.rejected == "This is an authentic image. The horizon is level."
    assert len(seen) == 2 * len(semantic_set)


def test_dpo_responder_failures_are_skipped_and_counted(semantic_set):
    def responder(img, prompt, prefix):
        if img.digest() == semantic_set.load_image(semantic_set.records[0]).digest():
            raise TimeoutError("slow")
        return None

    pairs = cp.build_dpo_pairs(semantic_set, responder)
    assert len(pairs) == len(semantic_set) - 1
    assert pairs.failures == [semantic_set.records[0].id]


def test_dpo_needs_semantic_manifest(reals, tmp_path):
    px = cp.build_pixel_set(reals, cp.PseudoReconstructor(1.0), tmp_path / "px")
    with pytest.raises(InvalidParameter):
        cp.build_dpo_pairs(px)


def test_preference_pair_validates_prefixes():
    with pytest.raises(InvalidParameter):
        cp.PreferencePair("x", "q", cp.REAL_PREFIX, cp.REAL_PREFIX + " hmm")
    with pytest.raises(InvalidParameter):
        cp.PreferencePair("x", "q", "Maybe.", cp.REAL_PREFIX)


def test_export_empty(tmp_path):
    p = cp.export_dpo_jsonl([], tmp_path / "d.jsonl")
    assert p.read_bytes() == b""


def test_export_roundtrip_and_determinism(semantic_set, tmp_path):
    pairs = cp.build_dpo_pairs(semantic_set)
    a = cp.export_dpo_jsonl(list(reversed(pairs)), tmp_path / "out" / "a.jsonl")
    b = cp.export_dpo_jsonl(pairs, tmp_path / "out" / "b.jsonl")
    assert a.read_bytes() == b.read_bytes()
    rows = [json.loads(l) for l in a.read_text().splitlines()]
    assert [r["image_id"] for r in rows] == sorted(r["image_id"] for r in rows)
    assert set(rows[0]) == {"image_id", "image", "prompt", "chosen", "rejected"}
    assert (tmp_path / "out" / rows[0]["image"]).exists()  # relative to the export file
    back = cp.load_dpo_jsonl(a)
    assert [(p.image_id, p.prompt, p.chosen, p.rejected) for p in back] == [
        (p.image_id, p.prompt, p.chosen, p.rejected) for p in sorted(pairs, key=lambda p: p.image_id)
    ]


def test_load_dpo_bad_row(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"image_id": "a"}\n')
    with pytest.raises(ParseError):
        cp.load_dpo_jsonl(p)


# --- AIGI-Now --------------------------------------------------------------------------


def _bench(tmp_path, reals, n_per_gen=None):
    caption_file = tmp_path / "captions.csv"
    with caption_file.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "caption", "surreal_caption"])
        for i, r in enumerate(reals):
            w.writerow([r.id, f"caption {i}", f"surreal caption {i}"])
    caps = cp.load_captions(caption_file)
    faithful, surreal = [], []
    for gen in ("g1", "g2"):
        for r in reals:
            key = caps[r.id].key
            faithful.append(ImageRecord(f"{gen}-f-{r.id}", r.source_path, Label.SYNTHETIC, key, generator=gen))
            surreal.append(ImageRecord(f"{gen}-s-{r.id}", r.source_path, Label.SYNTHETIC, key, generator=gen))
    return caps, faithful, surreal


def test_aigi_now_assembly(reals, tmp_path):
    caps, faithful, surreal = _bench(tmp_path, reals)
    pixel, semantic = cp.build_aigi_now(reals, caps, faithful, surreal, seed=3, out_dir=tmp_path / "bn", per_generator=4)
    assert pixel.kind is semantic.kind is ManifestKind.BENCHMARK
    assert all(r.degradation is None for r in pixel.records)
    assert all(r.degradation is not None for r in semantic.records)
    fakes_p = {r.id for r in pixel.with_label(Label.SYNTHETIC)}
    fakes_s = {r.id for r in semantic.with_label(Label.SYNTHETIC)}
    assert not fakes_p & fakes_s
    for gen in ("g1", "g2"):
        assert sum(r.generator == gen for r in pixel.records) == 4
    # every semantic group shares one spec between its real and its surreal fakes
    groups = {}
    for r in semantic.records:
        groups.setdefault(r.semantic_id, set()).add(r.degradation.to_json())
    assert all(len(v) == 1 for v in groups.values())
    assert {r.semantic_id for r in pixel.records} == {caption_hash(c.caption) for c in caps.values()}
    assert load_manifest(tmp_path / "bn" / "semantic.jsonl") == semantic
    assert all(semantic.resolve(r).exists() for r in semantic.records)


def test_aigi_now_unmatched_caption(reals, tmp_path):
    caps, faithful, surreal = _bench(tmp_path, reals)
    bad = ImageRecord("g1-x", reals[0].source_path, Label.SYNTHETIC, "0000000000000000", generator="g1")
    with pytest.raises(UnmatchedCaption) as exc:
        cp.build_aigi_now(reals, caps, faithful + [bad], surreal, out_dir=tmp_path / "bn")
    assert exc.value.record_id == "g1-x"


def test_aigi_now_real_without_caption(reals, tmp_path):
    caps, faithful, surreal = _bench(tmp_path, reals)
    caps.pop(reals[0].id)
    with pytest.raises(UnmatchedCaption):
        cp.build_aigi_now(reals, caps, faithful, surreal, out_dir=tmp_path / "bn")


def test_captions_jsonl(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text(json.dumps({"image_id": "a", "caption": "x", "surreal_caption": "y"}) + "\n")
    assert cp.load_captions(p)["a"].key == caption_hash("x")
    p.write_text(json.dumps({"image_id": "a"}) + "\n")
    with pytest.raises(ParseError):
        cp.load_captions(p)
