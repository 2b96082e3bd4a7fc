"""Dual-perspective OR fusion: synthetic if any branch flags it, real only when all agree."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .core import Branch, BranchVerdict, Label
from .corpus import DPO_PROMPT
from .errors import AlignDetError, DetectionError, RoleMismatch
from .semantic import UnknownPolicy, semantic_verdict

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FusedVerdict:
    final: Label
    semantic: BranchVerdict | None
    pixel: BranchVerdict | None
    extra_pixel: tuple = ()
    audit: tuple = field(default=())

    @property
    def branches(self) -> list:
        return [v for v in (self.semantic, self.pixel, *self.extra_pixel) if v is not None]

    def to_dict(self) -> dict:
        return {
            "final": self.final.value,
            "semantic": None if self.semantic is None else self.semantic.to_dict(),
            "pixel": None if self.pixel is None else self.pixel.to_dict(),
            "extra_pixel": [v.to_dict() for v in self.extra_pixel],
            "audit": list(self.audit),
        }


def fuse(semantic: BranchVerdict, pixel, *, audit=()) -> FusedVerdict:
    """OR over branch decisions. ``pixel`` may be one verdict or several experts' verdicts."""
    pixels = list(pixel) if isinstance(pixel, (list, tuple)) else [pixel]
    if not pixels:
        raise RoleMismatch("at least one pixel-expert verdict is required")
    if semantic.branch is not Branch.SEMANTIC:
        raise RoleMismatch(f"first verdict must come from the semantic branch, got {semantic.branch.value}")
    for v in pixels:
        if v.branch is not Branch.PIXEL_EXPERT:
            raise RoleMismatch(f"pixel verdicts must come from a pixel expert, got {v.branch.value}")
    flagged = semantic.flags_synthetic or any(v.flags_synthetic for v in pixels)
    final = Label.SYNTHETIC if flagged else Label.REAL
    return FusedVerdict(final, semantic, pixels[0], tuple(pixels[1:]), tuple(audit))


def detect(
    img,
    semantic_backend,
    expert,
    prompt: str = DPO_PROMPT,
    *,
    image_id: str | None = None,
    unknown_policy: UnknownPolicy = UnknownPolicy.REAL,
    degraded_ok: bool = False,
    concurrent: bool = True,
) -> FusedVerdict:
    """Run both branches and fuse.

    ``expert`` is any object with ``score(img)`` or a list of them. With
    ``degraded_ok`` a failed branch is dropped and noted in the audit trail;
    otherwise any branch error propagates. Both branches failing is always
    an error.
    """
    experts = list(expert) if isinstance(expert, (list, tuple)) else [expert]

    def run_semantic():
        return semantic_verdict(semantic_backend, img, prompt, image_id=image_id, unknown_policy=unknown_policy)

    jobs = [run_semantic] + [lambda e=e: e.score(img) for e in experts]
    if concurrent:
        with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
            outcomes = [f.result() for f in [pool.submit(_settle, j) for j in jobs]]
    else:
        outcomes = [_settle(j) for j in jobs]

    sem, pix = outcomes[0], outcomes[1:]
    errors = [o for o in outcomes if isinstance(o, Exception)]
    if len(errors) == len(outcomes):
        raise DetectionError(f"every branch failed: {'; '.join(repr(e) for e in errors)}")
    if errors and not degraded_ok:
        raise errors[0]

    audit = []
    if isinstance(sem, Exception):
        audit.append(f"degraded: semantic branch unavailable ({type(sem).__name__}: {sem})")
        sem = None
    live_pix = []
    for i, p in enumerate(pix):
        if isinstance(p, Exception):
            audit.append(f"degraded: pixel expert {i} unavailable ({type(p).__name__}: {p})")
        else:
            live_pix.append(p)
    if audit:
        log.warning("; ".join(audit))

    if sem is None:
        final = Label.SYNTHETIC if any(p.flags_synthetic for p in live_pix) else Label.REAL
        return FusedVerdict(final, None, live_pix[0], tuple(live_pix[1:]), tuple(audit))
    if not live_pix:
        return FusedVerdict(sem.decision, sem, None, (), tuple(audit))
    return fuse(sem, live_pix, audit=audit)


def _settle(fn):
    try:
        return fn()
    except (AlignDetError, OSError) as exc:
        return exc
