"""Semantic branch: DPO objective, verdict parsing, and VLM backends.

Fine-tuning the VLM happens outside this package. What lives here is
everything needed to feed and check it: the DPO loss as a pure function,
the prefix parser that turns free text into a label, a deterministic stub
backend, and an HTTP client for a served model.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy.special import expit

from . import _http
from .core import Branch, BranchVerdict, CorpusManifest, Label
from .corpus import DPO_PROMPT, REAL_PREFIX, SYNTHETIC_PREFIX
from .errors import EmptyBatch, InvalidParameter, MalformedResponse, ParseError, UnknownVerdict
from .expert import ExpertTrainConfig, fit_standardized
from .pixels import PixelBuffer


@dataclass(frozen=True)
class DpoConfig:
    """Hyperparameters recorded alongside DPO exports for the external trainer."""

    beta: float = 0.05
    lora_rank: int = 16
    lora_alpha: float = 32.0
    learning_rate: float = 1e-6
    batch_size: int = 8
    epochs: int = 1
    prompt: str = DPO_PROMPT

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DpoBatchItem:
    logp_chosen: float
    logp_rejected: float
    ref_logp_chosen: float
    ref_logp_rejected: float

    def margin(self) -> float:
        return (self.logp_chosen - self.ref_logp_chosen) - (self.logp_rejected - self.ref_logp_rejected)


def dpo_loss(batch, beta: float = 0.05):
    """Mean of ``-log sigmoid(beta * margin)`` over the batch.

    Returns ``(loss, grads)`` where ``grads[i]`` holds the derivatives with
    respect to item ``i``'s ``(logp_chosen, logp_rejected, ref_logp_chosen,
    ref_logp_rejected)``.
    """
    items = list(batch)
    if not items:
        raise EmptyBatch("DPO loss needs at least one item")
    if not beta > 0:
        raise InvalidParameter(f"beta must be positive, got {beta}")
    lp = np.array(
        [(it.logp_chosen, it.logp_rejected, it.ref_logp_chosen, it.ref_logp_rejected) for it in items],
        dtype=np.float64,
    )
    if not np.all(np.isfinite(lp)):
        raise InvalidParameter("log-probabilities must be finite")
    margin = (lp[:, 0] - lp[:, 2]) - (lp[:, 1] - lp[:, 3])
    z = beta * margin
    loss = float(np.mean(np.logaddexp(0.0, -z)))
    dmargin = -beta * expit(-z) / len(items)
    grads = np.outer(dmargin, [1.0, -1.0, -1.0, 1.0])
    return loss, grads


class Verdict(str, enum.Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"
    UNKNOWN = "unknown"


def _prefix_pattern(prefix: str) -> re.Pattern:
    words = prefix.rstrip(".").split()
    body = r"\s+".join(re.escape(w).replace(r"\-", r"[\s-]?") for w in words)
    return re.compile(body + r"\.?", re.IGNORECASE)


_SYNTH_RE = _prefix_pattern(SYNTHETIC_PREFIX)
_REAL_RE = _prefix_pattern(REAL_PREFIX)
_TOKEN_RE = re.compile(r"\b(?:(not|isn't|is\s+not)\s+)?(ai[\s-]?generated|authentic)\b", re.IGNORECASE)
_SENTENCE_END = re.compile(r"[.!?\n]")


def parse_verdict(text) -> Verdict:
    """Reduce free text to a verdict; the earliest verdict prefix wins.

    Without a full prefix, the first sentence's ``ai-generated`` /
    ``authentic`` token decides (a directly preceding ``not`` flips it).
    """
    if not isinstance(text, str) or not text:
        return Verdict.UNKNOWN
    hits = []
    for pattern, verdict in ((_SYNTH_RE, Verdict.SYNTHETIC), (_REAL_RE, Verdict.REAL)):
        m = pattern.search(text)
        if m:
            hits.append((m.start(), verdict))
    if hits:
        return min(hits)[1]

    first = _SENTENCE_END.split(text.strip(), maxsplit=1)[0]
    m = _TOKEN_RE.search(first)
    if not m:
        return Verdict.UNKNOWN
    verdict = Verdict.SYNTHETIC if m.group(2).lower().startswith("ai") else Verdict.REAL
    if m.group(1):
        verdict = Verdict.REAL if verdict is Verdict.SYNTHETIC else Verdict.SYNTHETIC
    return verdict


class UnknownPolicy(str, enum.Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"
    ERROR = "error"


_VERDICT_SCORE = {Verdict.SYNTHETIC: 1.0, Verdict.REAL: 0.0, Verdict.UNKNOWN: 0.5}


def semantic_threshold(policy: UnknownPolicy) -> float:
    # Unknown scores 0.5: a cut at 0.5 flags it, a cut at 1.0 lets it through
    return 0.5 if UnknownPolicy(policy) is UnknownPolicy.SYNTHETIC else 1.0


class SemanticBackend(Protocol):
    name: str

    def verdict(self, image: PixelBuffer, prompt: str, image_id: str | None = None) -> str: ...


def semantic_verdict(
    backend: SemanticBackend,
    img: PixelBuffer,
    prompt: str = DPO_PROMPT,
    *,
    image_id: str | None = None,
    unknown_policy: UnknownPolicy = UnknownPolicy.REAL,
) -> BranchVerdict:
    policy = UnknownPolicy(unknown_policy)
    text = backend.verdict(img, prompt, image_id=image_id)
    parsed = parse_verdict(text)
    if parsed is Verdict.UNKNOWN and policy is UnknownPolicy.ERROR:
        raise UnknownVerdict(f"backend {backend.name!r} gave no verdict: {text!r}")
    score = _VERDICT_SCORE[parsed]
    threshold = semantic_threshold(policy)
    decision = Label.SYNTHETIC if score >= threshold else Label.REAL
    return BranchVerdict(Branch.SEMANTIC, score, decision, rationale=text, threshold=threshold)


class StubBackend:
    """Pure table lookup by image id."""

    def __init__(self, table: dict, default: str = "", name: str = "stub"):
        self.table = dict(table)
        self.default = default
        self.name = name

    def verdict(self, image, prompt, image_id=None) -> str:
        return self.table.get(image_id, self.default)


def stub_backend(table: dict, default: str = "") -> StubBackend:
    return StubBackend(table, default)


def load_stub_fixture(path, default: str = "") -> StubBackend:
    """Stub from a JSONL file of ``{"image_id": ..., "text": ...}`` rows."""
    table = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            table[str(row["image_id"])] = row["text"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"bad fixture row: {exc}", line=lineno) from exc
    return StubBackend(table, default, name=f"stub:{Path(path).name}")


class HttpVlmBackend:
    """Client for a served VLM exposing ``POST /verdict``."""

    def __init__(self, endpoint: str, model_name: str, *, timeout: float = 60.0, retries: int = 3, backoff: float = 0.5):
        self.endpoint = endpoint.rstrip("/")
        self.model_name = model_name
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.name = f"http:{model_name}"

    def verdict(self, image, prompt, image_id=None) -> str:
        payload = {"image_b64": _http.image_payload(image)["image_b64"], "prompt": prompt, "model": self.model_name}
        body = _http.post_json(
            f"{self.endpoint}/verdict", payload, timeout=self.timeout, retries=self.retries, backoff=self.backoff
        )
        text = body.get("text")
        if not isinstance(text, str):
            raise MalformedResponse(f"/verdict response lacks a string 'text' field: {sorted(body)}")
        return text


def http_vlm_backend(endpoint: str, model_name: str, timeout: float = 60.0, **kwargs) -> HttpVlmBackend:
    return HttpVlmBackend(endpoint, model_name, timeout=timeout, **kwargs)


# --- desk-scale semantic surrogate -------------------------------------------

LAYOUT_GRID = 8


def layout_features(img: PixelBuffer, grid: int = LAYOUT_GRID) -> np.ndarray:
    """Mean colour of each cell in a ``grid x grid`` partition, on [0, 1].

    Coarse block means survive compression, blur, noise and resizing almost
    unchanged, so a model over them sees scene layout and not pixel traces.
    """
    x = img.as_float() / 255.0
    rows = np.array_split(np.arange(img.height), grid)
    cols = np.array_split(np.arange(img.width), grid)
    return np.array([x[np.ix_(r, c)].mean(axis=(0, 1)) for r in rows for c in cols]).ravel()


class LayoutSemanticModel:
    """Logistic model over coarse layout, answering with verdict-prefix text.

    A trainable stand-in for the fine-tuned VLM: it can learn scene-level
    implausibility but is blind to pixel-level artifacts.
    """

    name = "layout-surrogate"

    def __init__(self, weights, bias: float):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)

    def probability(self, img: PixelBuffer) -> float:
        return float(expit(layout_features(img) @ self.weights + self.bias))

    def verdict(self, image, prompt=DPO_PROMPT, image_id=None) -> str:
        return SYNTHETIC_PREFIX if self.probability(image) >= 0.5 else REAL_PREFIX


def train_layout_model(manifest: CorpusManifest, config: ExpertTrainConfig = ExpertTrainConfig(learning_rate=0.1, epochs=200)) -> LayoutSemanticModel:
    X = np.array([layout_features(manifest.load_image(r)) for r in manifest.records])
    w, b, _ = fit_standardized(X, [r.label for r in manifest.records], config)
    return LayoutSemanticModel(w, b)
