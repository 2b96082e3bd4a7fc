"""Domain types and the JSONL manifest format shared across aligndet."""

from __future__ import annotations

import enum
import json
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path

from .degrade import DegradationSpec
from .errors import InvalidParameter, InvariantViolation, ParseError
from .pixels import PixelBuffer, load_image
from .seeding import check_seed

SCHEMA_VERSION = 1


class Label(str, enum.Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"

    @property
    def opposite(self) -> "Label":
        return Label.SYNTHETIC if self is Label.REAL else Label.REAL


class Subset(str, enum.Enum):
    PIXEL_SET = "pixel_set"
    SEMANTIC_SET = "semantic_set"
    UNASSIGNED = "unassigned"


class ManifestKind(str, enum.Enum):
    PIXEL_SUPERVISION = "pixel_supervision"
    SEMANTIC_SUPERVISION = "semantic_supervision"
    MIXED_SUPERVISION = "mixed_supervision"
    BENCHMARK = "benchmark"


class Branch(str, enum.Enum):
    SEMANTIC = "semantic"
    PIXEL_EXPERT = "pixel_expert"


@dataclass(frozen=True)
class ImageRecord:
    id: str
    source_path: str
    label: Label
    semantic_id: str
    subset: Subset = Subset.UNASSIGNED
    generator: str | None = None
    degradation: DegradationSpec | None = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise InvalidParameter("record id must be a non-empty string")
        object.__setattr__(self, "source_path", os.fspath(self.source_path))
        object.__setattr__(self, "label", Label(self.label))
        object.__setattr__(self, "subset", Subset(self.subset))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source_path": self.source_path,
            "label": self.label.value,
            "semantic_id": self.semantic_id,
            "subset": self.subset.value,
            "generator": self.generator,
            "degradation": None if self.degradation is None else self.degradation.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImageRecord":
        deg = d.get("degradation")
        return cls(
            id=d["id"],
            source_path=d["source_path"],
            label=Label(d["label"]),
            semantic_id=d["semantic_id"],
            subset=Subset(d.get("subset", Subset.UNASSIGNED.value)),
            generator=d.get("generator"),
            degradation=None if deg is None else DegradationSpec.from_dict(deg),
        )


@dataclass(frozen=True)
class CorpusManifest:
    """A named, seeded collection of records.

    ``root`` is the directory relative ``source_path`` values resolve
    against; it is not serialized and not part of equality.
    """

    name: str
    seed: int
    kind: ManifestKind
    records: tuple = ()
    root: Path | None = field(default=None, compare=False, repr=False)
    missing: frozenset = field(default=frozenset(), compare=False, repr=False)

    def __post_init__(self):
        check_seed(self.seed)
        object.__setattr__(self, "kind", ManifestKind(self.kind))
        object.__setattr__(self, "records", tuple(sorted(self.records, key=lambda r: r.id)))
        if self.root is not None:
            object.__setattr__(self, "root", Path(self.root))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self) -> dict:
        return {r.id: r for r in self.records}

    def with_label(self, label: Label) -> list:
        return [r for r in self.records if r.label is Label(label)]

    def resolve(self, record: ImageRecord) -> Path:
        path = Path(record.source_path)
        if not path.is_absolute() and self.root is not None:
            path = self.root / path
        return path

    def load_image(self, record: ImageRecord) -> PixelBuffer:
        return load_image(self.resolve(record))

    def replace(self, **changes) -> "CorpusManifest":
        return replace(self, **changes)

    def header(self) -> dict:
        return {"name": self.name, "seed": self.seed, "kind": self.kind.value, "schema_version": SCHEMA_VERSION}


@dataclass(frozen=True)
class Diagnostic:
    record_id: str | None
    message: str

    def __str__(self):
        return f"{self.record_id}: {self.message}" if self.record_id else self.message


@dataclass(frozen=True)
class BranchVerdict:
    """One branch's output; ``threshold`` is the cut the decision was made at."""

    branch: Branch
    score: float
    decision: Label
    rationale: str | None = None
    threshold: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "branch", Branch(self.branch))
        object.__setattr__(self, "decision", Label(self.decision))
        score = float(self.score)
        if not 0.0 <= score <= 1.0:
            raise InvalidParameter(f"branch score must lie in [0, 1], got {score}")
        object.__setattr__(self, "score", score)
        if self.threshold is not None:
            expected = Label.SYNTHETIC if score >= self.threshold else Label.REAL
            if expected is not self.decision:
                raise InvalidParameter(
                    f"decision {self.decision.value} disagrees with score {score} at threshold {self.threshold}"
                )

    @property
    def flags_synthetic(self) -> bool:
        return self.decision is Label.SYNTHETIC

    def to_dict(self) -> dict:
        return {
            "branch": self.branch.value,
            "score": self.score,
            "decision": self.decision.value,
            "rationale": self.rationale,
            "threshold": self.threshold,
        }


def decide(score: float, threshold: float) -> Label:
    """Ties go to Synthetic."""
    return Label.SYNTHETIC if score >= threshold else Label.REAL


def validate_manifest(manifest: CorpusManifest) -> list:
    """Check every manifest invariant; returns located diagnostics (empty when valid)."""
    problems = []
    counts = Counter(r.id for r in manifest.records)
    for rid, n in sorted(counts.items()):
        if n > 1:
            problems.append(Diagnostic(rid, f"id appears {n} times"))

    for r in manifest.records:
        if r.subset is Subset.SEMANTIC_SET and r.degradation is None:
            problems.append(Diagnostic(r.id, "semantic-set record has no degradation log"))

    if manifest.kind is ManifestKind.PIXEL_SUPERVISION:
        real_groups = Counter(r.semantic_id for r in manifest.records if r.label is Label.REAL)
        for r in manifest.records:
            if r.label is not Label.SYNTHETIC:
                continue
            n = real_groups.get(r.semantic_id, 0)
            if n != 1:
                problems.append(
                    Diagnostic(r.id, f"synthetic record's semantic_id {r.semantic_id!r} matches {n} real records, expected 1")
                )

    if manifest.kind is ManifestKind.SEMANTIC_SUPERVISION:
        groups = defaultdict(list)
        for r in manifest.records:
            groups[r.semantic_id].append(r)
        for sid in sorted(groups):
            members = groups[sid]
            if {m.label for m in members} != {Label.REAL, Label.SYNTHETIC}:
                continue
            texts = {None if m.degradation is None else m.degradation.to_json() for m in members}
            if len(texts) != 1:
                ids = ", ".join(m.id for m in members)
                problems.append(Diagnostic(members[0].id, f"pair {sid!r} ({ids}) carries differing degradation specs"))
    return problems


def check_manifest(manifest: CorpusManifest) -> CorpusManifest:
    problems = validate_manifest(manifest)
    if problems:
        raise InvariantViolation(problems)
    return manifest


def manifest_lines(manifest: CorpusManifest) -> list:
    lines = [json.dumps(manifest.header(), ensure_ascii=False)]
    lines.extend(json.dumps(r.to_dict(), ensure_ascii=False) for r in manifest.records)
    return lines


def save_manifest(manifest: CorpusManifest, path) -> Path:
    """Write the manifest as JSONL: a header line, then records sorted by id."""
    check_manifest(manifest)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = "\n".join(manifest_lines(manifest)) + "\n"
    path.write_bytes(text.encode("utf-8"))
    return path


def load_manifest(path) -> CorpusManifest:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    header = None
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", line=lineno)
        if header is None:
            header = _parse_header(obj, lineno)
            continue
        try:
            records.append(ImageRecord.from_dict(obj))
        except ParseError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(f"bad record: {exc!r}", line=lineno) from exc

    if header is None:
        # an empty file is the empty manifest
        header = {"name": path.stem, "seed": 0, "kind": ManifestKind.BENCHMARK}
    manifest = CorpusManifest(
        name=header["name"], seed=header["seed"], kind=header["kind"], records=tuple(records), root=path.parent
    )
    problems = validate_manifest(manifest)
    if problems:
        raise InvariantViolation(problems)
    missing = frozenset(r.id for r in manifest.records if not manifest.resolve(r).exists())
    return manifest.replace(missing=missing)


def _parse_header(obj: dict, lineno: int) -> dict:
    for key in ("name", "seed", "kind", "schema_version"):
        if key not in obj:
            raise ParseError(f"header is missing {key!r}", line=lineno)
    if obj["schema_version"] != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {obj['schema_version']!r}", line=lineno)
    try:
        kind = ManifestKind(obj["kind"])
        seed = check_seed(obj["seed"])
    except ValueError as exc:
        raise ParseError(str(exc), line=lineno) from exc
    return {"name": obj["name"], "seed": seed, "kind": kind}
