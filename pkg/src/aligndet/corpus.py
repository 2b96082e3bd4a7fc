"""Builders for the orthogonal supervision sets, DPO pairs and the AIGI-Now protocol.

Two sets are kept disjoint by construction:

* pixel supervision -- a real image and its reconstruction. Semantics are
  identical, so only pixel statistics separate the classes. Nothing is
  degraded.
* semantic supervision -- real and semantically implausible images pushed
  through the *same* randomized heavy post-processing, so pixel statistics
  carry no label signal.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .core import (
    CorpusManifest,
    Diagnostic,
    ImageRecord,
    Label,
    ManifestKind,
    Subset,
    check_manifest,
    save_manifest,
)
from .degrade import DEFAULT_HEAVY_PROFILE, DegradationSpec, Kernel, PipelineProfile, apply_spec, double_resize, jpeg_compress, sample_heavy_pipeline
from .errors import (
    InvalidParameter,
    ParseError,
    ReconstructionFailure,
    ResponderFailure,
    UnknownPairTarget,
    UnmatchedCaption,
)
from .pixels import PixelBuffer, load_image, save_png
from .seeding import caption_hash, derive_seed, seeded_sample

log = logging.getLogger(__name__)

SYNTHETIC_PREFIX = "This is an AI-generated image."
REAL_PREFIX = "This is an authentic image."
DPO_PROMPT = "Is this image AI-generated or authentic? Answer and explain."

PIXEL_SET_REALS = 11_800
SEMANTIC_SET_REALS = 5_000
SEMANTIC_SET_FAKES = 5_000
AIGI_NOW_PER_GENERATOR = 1_000

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp", ".tif", ".tiff"}


def verdict_prefix(label: Label) -> str:
    return SYNTHETIC_PREFIX if Label(label) is Label.SYNTHETIC else REAL_PREFIX


class Reconstructor(Protocol):
    name: str

    def reconstruct(self, img: PixelBuffer) -> PixelBuffer: ...


@dataclass(frozen=True)
class PseudoReconstructor:
    """Desk-scale stand-in for a VAE round trip.

    Bicubic double resize by ``1 - 0.5 * strength`` followed by JPEG at
    quality ``round(98 - 30 * strength)``. Content survives; fine-grained
    pixel statistics do not.
    """

    strength: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.strength <= 1.0:
            raise InvalidParameter(f"strength must lie in (0, 1], got {self.strength}")

    @property
    def scale(self) -> float:
        return 1.0 - 0.5 * self.strength

    @property
    def quality(self) -> int:
        return int(np.floor(98.0 - 30.0 * self.strength + 0.5))

    @property
    def name(self) -> str:
        return f"pseudo-recon-{self.strength:g}"

    def reconstruct(self, img: PixelBuffer) -> PixelBuffer:
        return jpeg_compress(double_resize(img, self.scale, Kernel.BICUBIC), self.quality)


def pseudo_reconstruct(img: PixelBuffer, strength: float) -> PixelBuffer:
    return PseudoReconstructor(strength).reconstruct(img)


def _absolute(records, root=None) -> list:
    """Records with source paths made absolute (relative paths resolve against ``root``)."""
    if isinstance(records, CorpusManifest):
        root = records.root if root is None else root
        records = records.records
    out = []
    for r in records:
        path = Path(r.source_path)
        if not path.is_absolute():
            path = (Path(root) / path) if root is not None else path.resolve()
        out.append(_with(r, source_path=str(path)))
    return out


def _with(record: ImageRecord, **changes) -> ImageRecord:
    d = {f: getattr(record, f) for f in ("id", "source_path", "label", "semantic_id", "subset", "generator", "degradation")}
    d.update(changes)
    return ImageRecord(**d)


def records_from_dir(directory, label: Label, generator: str | None = None) -> list:
    """One record per image file in ``directory`` (sorted, id = file stem)."""
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    return [
        ImageRecord(id=p.stem, source_path=str(p.resolve()), label=label, semantic_id=p.stem, generator=generator)
        for p in files
    ]


def build_pixel_set(
    reals,
    recon: Reconstructor,
    out_dir,
    *,
    name: str = "pixel-set",
    seed: int = 0,
    n_real: int | None = None,
) -> CorpusManifest:
    """Pair every real with its reconstruction; writes PNGs and ``manifest.jsonl`` under ``out_dir``."""
    out_dir = Path(out_dir)
    reals = _absolute(reals)
    for r in reals:
        if r.label is not Label.REAL:
            raise InvalidParameter(f"record {r.id!r} is not labeled real")
    if n_real is not None:
        reals = seeded_sample(reals, n_real, seed)

    records = []
    for real in sorted(reals, key=lambda r: r.id):
        try:
            src = load_image(real.source_path)
            fake = recon.reconstruct(src)
        except Exception as exc:
            raise ReconstructionFailure(real.id, exc) from exc
        if fake.shape != src.shape:
            raise ReconstructionFailure(real.id, ValueError(f"reconstruction changed size {src.shape} -> {fake.shape}"))
        fake_id = f"{real.id}__{recon.name}"
        rel = Path("images") / f"{fake_id}.png"
        save_png(fake, out_dir / rel)
        records.append(_with(real, semantic_id=real.id, subset=Subset.PIXEL_SET, degradation=None))
        records.append(
            ImageRecord(
                id=fake_id,
                source_path=rel.as_posix(),
                label=Label.SYNTHETIC,
                semantic_id=real.id,
                subset=Subset.PIXEL_SET,
                generator=recon.name,
            )
        )
    manifest = CorpusManifest(name=name, seed=seed, kind=ManifestKind.PIXEL_SUPERVISION, records=records, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest


def _degrade_records(records, group_of, profile, seed, out_dir, subset) -> list:
    specs: dict[str, DegradationSpec] = {}
    out = []
    for r in sorted(records, key=lambda r: r.id):
        group = group_of(r)
        if group not in specs:
            specs[group] = sample_heavy_pipeline(derive_seed(seed, group), profile)
        spec = specs[group]
        img = apply_spec(spec, load_image(r.source_path))
        rel = Path("images") / f"{r.id}.png"
        save_png(img, Path(out_dir) / rel)
        out.append(_with(r, source_path=rel.as_posix(), semantic_id=group, subset=subset, degradation=spec))
    return out


def build_semantic_set(
    reals,
    fakes,
    pairing: dict | None,
    profile: PipelineProfile = DEFAULT_HEAVY_PROFILE,
    seed: int = 0,
    out_dir=".",
    *,
    name: str = "semantic-set",
    n_real: int | None = None,
    n_fake: int | None = None,
) -> CorpusManifest:
    """Degrade reals and implausible fakes with shared per-pair heavy specs.

    With ``pairing`` (fake id -> real id) both members of a pair get the spec
    drawn from ``derive_seed(seed, real id)``. Without it every record gets
    its own spec keyed by its id.
    """
    out_dir = Path(out_dir)
    reals, fakes = _absolute(reals), _absolute(fakes)
    for r in reals:
        if r.label is not Label.REAL:
            raise InvalidParameter(f"record {r.id!r} is not labeled real")
    for f in fakes:
        if f.label is not Label.SYNTHETIC:
            raise InvalidParameter(f"record {f.id!r} is not labeled synthetic")

    if pairing is None:
        if n_real is not None:
            reals = seeded_sample(reals, n_real, seed)
        if n_fake is not None:
            fakes = seeded_sample(fakes, n_fake, seed)
        group_of = lambda r: r.id  # noqa: E731
    else:
        if n_real is not None or n_fake is not None:
            raise InvalidParameter("sampling counts apply only to unpaired mode")
        real_ids = {r.id for r in reals}
        for fake_id, real_id in sorted(pairing.items()):
            if real_id not in real_ids:
                raise UnknownPairTarget(fake_id, real_id)
        group_of = lambda r: pairing.get(r.id, r.id) if r.label is Label.SYNTHETIC else r.id  # noqa: E731

    records = _degrade_records(reals + fakes, group_of, profile, seed, out_dir, Subset.SEMANTIC_SET)
    manifest = CorpusManifest(name=name, seed=seed, kind=ManifestKind.SEMANTIC_SUPERVISION, records=records, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest


def combine_mixed(manifests, *, name: str = "mixed-set", seed: int = 0, namespace: bool = False) -> CorpusManifest:
    """Union of supervision sets (paths made absolute).

    Ids must not collide unless ``namespace`` is set, which prefixes every
    id with its source manifest's name.
    """
    records = []
    for m in manifests:
        recs = _absolute(m)
        if namespace:
            recs = [_with(r, id=f"{m.name}/{r.id}") for r in recs]
        records.extend(recs)
    return check_manifest(CorpusManifest(name=name, seed=seed, kind=ManifestKind.MIXED_SUPERVISION, records=records))


def audit_orthogonality(manifest: CorpusManifest) -> list:
    """Diagnostics for any leak between the two supervision types (empty when clean)."""
    problems = []
    if manifest.kind is ManifestKind.PIXEL_SUPERVISION:
        reals = {r.semantic_id: r for r in manifest.with_label(Label.REAL)}
        for r in manifest.records:
            if r.degradation is not None:
                problems.append(Diagnostic(r.id, "pixel-supervision record carries a degradation spec"))
        for fake in manifest.with_label(Label.SYNTHETIC):
            real = reals.get(fake.semantic_id)
            if real is None:
                problems.append(Diagnostic(fake.id, "unpaired synthetic record"))
                continue
            a, b = manifest.load_image(real), manifest.load_image(fake)
            if a.shape != b.shape:
                problems.append(Diagnostic(fake.id, "pair differs in size"))
            elif float(np.abs(a.as_float() - b.as_float()).mean()) <= 0.0:
                problems.append(Diagnostic(fake.id, "reconstruction is identical to its real image"))
    elif manifest.kind is ManifestKind.SEMANTIC_SUPERVISION:
        groups = defaultdict(list)
        for r in manifest.records:
            if r.degradation is None:
                problems.append(Diagnostic(r.id, "semantic-supervision record has no degradation spec"))
            groups[r.semantic_id].append(r)
        for sid in sorted(groups):
            texts = {m.degradation.to_json() for m in groups[sid] if m.degradation is not None}
            if len(texts) > 1:
                problems.append(Diagnostic(groups[sid][0].id, f"group {sid!r} members carry different specs"))
    return problems


# --- DPO preference pairs ---------------------------------------------------


@dataclass(frozen=True)
class PreferencePair:
    image_id: str
    prompt: str
    chosen: str
    rejected: str
    image: str | None = None

    def __post_init__(self):
        synth = self.chosen.startswith(SYNTHETIC_PREFIX) and self.rejected.startswith(REAL_PREFIX)
        real = self.chosen.startswith(REAL_PREFIX) and self.rejected.startswith(SYNTHETIC_PREFIX)
        if not (synth or real):
            raise InvalidParameter(f"pair {self.image_id!r}: chosen/rejected must start with opposite verdict prefixes")


class PairList(list):
    """Pairs plus the ids whose responder call failed."""

    def __init__(self, pairs=(), failures=()):
        super().__init__(pairs)
        self.failures = list(failures)


Responder = Callable[[PixelBuffer, str, str], "str | None"]


def _compose(prefix: str, continuation: str | None) -> str:
    if not continuation:
        return prefix
    text = continuation.strip()
    if text.startswith(prefix):
        text = text[len(prefix):].strip()
    return f"{prefix} {text}" if text else prefix


def build_dpo_pairs(manifest: CorpusManifest, responder: Responder | None = None, prompt: str = DPO_PROMPT) -> PairList:
    """One preference pair per record: chosen opens with the true verdict, rejected with the wrong one.

    ``responder(image, prompt, prefix)`` may return a continuation written
    after ``prefix``; it is asked once under each prefix. Records whose
    responder call raises are skipped and listed in ``.failures``.
    """
    if manifest.kind is not ManifestKind.SEMANTIC_SUPERVISION:
        raise InvalidParameter(f"DPO pairs are built from semantic supervision, got {manifest.kind.value}")
    pairs, failures = [], []
    for r in manifest.records:
        good, bad = verdict_prefix(r.label), verdict_prefix(r.label.opposite)
        good_text, bad_text = None, None
        if responder is not None:
            try:
                img = manifest.load_image(r)
                good_text = responder(img, prompt, good)
                bad_text = responder(img, prompt, bad)
            except Exception as exc:
                log.warning("%s", ResponderFailure(r.id, exc))
                failures.append(r.id)
                continue
        pairs.append(
            PreferencePair(
                image_id=r.id,
                prompt=prompt,
                chosen=_compose(good, good_text),
                rejected=_compose(bad, bad_text),
                image=str(manifest.resolve(r)),
            )
        )
    return PairList(pairs, failures)


def export_dpo_jsonl(pairs, path) -> Path:
    """Write pairs sorted by image id; ``image`` paths are relative to the export file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent.resolve()
    lines = []
    for p in sorted(pairs, key=lambda p: p.image_id):
        image = p.image if p.image is not None else p.image_id
        if p.image is not None and os.path.isabs(image):
            image = Path(os.path.relpath(image, base)).as_posix()
        row = {"image_id": p.image_id, "image": image, "prompt": p.prompt, "chosen": p.chosen, "rejected": p.rejected}
        lines.append(json.dumps(row, ensure_ascii=False))
    path.write_bytes("".join(line + "\n" for line in lines).encode("utf-8"))
    return path


def load_dpo_jsonl(path) -> list:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            pairs.append(
                PreferencePair(
                    image_id=row["image_id"], prompt=row["prompt"], chosen=row["chosen"], rejected=row["rejected"], image=row["image"]
                )
            )
        except (json.JSONDecodeError, KeyError, InvalidParameter) as exc:
            raise ParseError(f"bad DPO row: {exc}", line=lineno) from exc
    return pairs


# --- AIGI-Now benchmark assembly ---------------------------------------------


@dataclass(frozen=True)
class Caption:
    image_id: str
    caption: str
    surreal_caption: str

    @property
    def key(self) -> str:
        return caption_hash(self.caption)


def load_captions(path) -> dict:
    """Caption metadata from CSV or JSONL with columns image_id, caption, surreal_caption."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    else:
        rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    out = {}
    for i, row in enumerate(rows, start=1):
        try:
            cap = Caption(str(row["image_id"]), row["caption"], row["surreal_caption"])
        except KeyError as exc:
            raise ParseError(f"caption row is missing {exc}", line=i) from exc
        out[cap.image_id] = cap
    return out


def build_aigi_now(
    reals,
    captions: dict,
    faithful_fakes,
    surreal_fakes,
    profile: PipelineProfile = DEFAULT_HEAVY_PROFILE,
    seed: int = 0,
    out_dir=".",
    *,
    name: str = "aigi-now",
    per_generator: int | None = AIGI_NOW_PER_GENERATOR,
) -> tuple:
    """Assemble the pixel- and semantic-discriminative benchmark subsets.

    Every fake must carry its generator and a ``semantic_id`` equal to the
    caption hash of a real image. Per generator, up to ``per_generator``
    caption groups are sampled with the seed. The semantic subset is
    degraded with one spec per caption group, shared by the real and all its
    surreal counterparts. Writes ``pixel.jsonl`` and ``semantic.jsonl``.
    """
    out_dir = Path(out_dir)
    reals = _absolute(reals)
    faithful, surreal = _absolute(faithful_fakes), _absolute(surreal_fakes)
    overlap = {f.id for f in faithful} & {f.id for f in surreal}
    if overlap:
        raise InvalidParameter(f"fake ids appear in both subsets: {sorted(overlap)[:5]}")

    real_by_key = {}
    for r in reals:
        if r.id not in captions:
            raise UnmatchedCaption(r.id)
        real_by_key[captions[r.id].key] = _with(r, semantic_id=captions[r.id].key)

    def pick(fakes):
        by_gen = defaultdict(list)
        for f in fakes:
            if f.label is not Label.SYNTHETIC or f.generator is None:
                raise InvalidParameter(f"fake {f.id!r} must be synthetic and name its generator")
            if f.semantic_id not in real_by_key:
                raise UnmatchedCaption(f.id)
            by_gen[f.generator].append(f)
        chosen = []
        for gen in sorted(by_gen):
            groups = sorted({f.semantic_id for f in by_gen[gen]})
            keep = set(seeded_sample(groups, per_generator, derive_seed(seed, gen), key=lambda g: g))
            chosen.extend(f for f in by_gen[gen] if f.semantic_id in keep)
        return chosen

    faithful, surreal = pick(faithful), pick(surreal)

    pixel_reals = [real_by_key[k] for k in sorted({f.semantic_id for f in faithful})]
    pixel_records = [_with(r, subset=Subset.PIXEL_SET, degradation=None) for r in pixel_reals + faithful]
    pixel = CorpusManifest(name=f"{name}-pixel", seed=seed, kind=ManifestKind.BENCHMARK, records=pixel_records, root=out_dir)

    sem_reals = [real_by_key[k] for k in sorted({f.semantic_id for f in surreal})]
    sem_records = _degrade_records(
        sem_reals + surreal, lambda r: r.semantic_id, profile, seed, out_dir / "semantic", Subset.SEMANTIC_SET
    )
    sem_records = [_with(r, source_path=f"semantic/{r.source_path}") for r in sem_records]
    semantic = CorpusManifest(name=f"{name}-semantic", seed=seed, kind=ManifestKind.BENCHMARK, records=sem_records, root=out_dir)

    save_manifest(pixel, out_dir / "pixel.jsonl")
    save_manifest(semantic, out_dir / "semantic.jsonl")
    return pixel, semantic
