"""Pixel-artifact branch: residual features, a logistic head, and an HTTP adapter.

The reference expert is a linear head over twelve neighbour-difference
statistics. Deep experts (e.g. a LoRA-tuned ViT) plug in through
:class:`HttpExpertBackend`, which exposes the same ``score(img)`` method.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import _http
from .core import Branch, BranchVerdict, CorpusManifest, Label, ManifestKind, decide
from .errors import DegenerateCorpus, InvalidParameter, MalformedResponse, NonFiniteLoss
from .pixels import PixelBuffer

N_FEATURES = 12
FEATURE_NAMES = tuple(
    f"{c}_{axis}_{stat}" for c in "rgb" for axis in ("h", "v") for stat in ("mean", "var")
)


def extract_residual_features(img: PixelBuffer) -> np.ndarray:
    """Per channel: mean and variance of |horizontal| then |vertical| neighbour differences on [0, 1]."""
    x = img.as_float() / 255.0
    dh = np.abs(np.diff(x, axis=1))
    dv = np.abs(np.diff(x, axis=0))
    feats = np.empty(N_FEATURES)
    for c in range(3):
        h = dh[:, :, c] if dh.shape[1] else np.zeros(1)
        v = dv[:, :, c] if dv.shape[0] else np.zeros(1)
        feats[4 * c : 4 * c + 4] = (h.mean(), h.var(), v.mean(), v.var())
    return feats


def extract_many(images, workers: int = 1) -> np.ndarray:
    images = list(images)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(extract_residual_features, images))
    else:
        rows = [extract_residual_features(im) for im in images]
    return np.array(rows).reshape(len(rows), N_FEATURES)


@dataclass(frozen=True)
class ExpertTrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    epochs: int = 5
    lora_rank: int = 8  # forwarded to external backends only
    lora_alpha: float = 1.0  # forwarded to external backends only
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidParameter("learning_rate must be positive")
        if self.batch_size < 1:
            raise InvalidParameter("batch_size must be at least 1")
        if self.epochs < 0:
            raise InvalidParameter("epochs must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExpertModel:
    weights: np.ndarray
    bias: float = 0.0
    threshold: float = 0.5
    training_config: ExpertTrainConfig = field(default_factory=ExpertTrainConfig)
    loss_trace: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(N_FEATURES)
        self.bias = float(self.bias)
        if not 0.0 < self.threshold < 1.0:
            raise InvalidParameter(f"threshold must lie in (0, 1), got {self.threshold}")

    @classmethod
    def zero(cls, threshold: float = 0.5) -> "ExpertModel":
        return cls(np.zeros(N_FEATURES), 0.0, threshold)

    def probability(self, features: np.ndarray) -> np.ndarray:
        return expit(np.asarray(features) @ self.weights + self.bias)

    def score(self, img: PixelBuffer) -> BranchVerdict:
        p = float(self.probability(extract_residual_features(img)))
        return BranchVerdict(Branch.PIXEL_EXPERT, p, decide(p, self.threshold), threshold=self.threshold)

    def to_dict(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "bias": self.bias,
            "threshold": self.threshold,
            "training_config": self.training_config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExpertModel":
        return cls(
            weights=d["weights"],
            bias=d["bias"],
            threshold=d.get("threshold", 0.5),
            training_config=ExpertTrainConfig(**d.get("training_config", {})),
        )


def score(model, img: PixelBuffer) -> BranchVerdict:
    return model.score(img)


def save_model(model: ExpertModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def load_model(path) -> ExpertModel:
    return ExpertModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --- training ---------------------------------------------------------------


def logistic_loss_and_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray):
    """Mean logistic loss and its gradient with respect to ``(w, b)``."""
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    r = expit(z) - y
    return loss, X.T @ r / len(y), float(r.mean())


def fit_logistic(X, y, config: ExpertTrainConfig):
    """Mini-batch gradient descent from zero init; one full shuffle per epoch.

    Returns ``(weights, bias, per-epoch full-data loss)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    w = np.zeros(X.shape[1])
    b = 0.0
    trace = []
    n = len(y)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is caught below
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                _, gw, gb = logistic_loss_and_grad(w, b, X[idx], y[idx])
                w = w - config.learning_rate * gw
                b = b - config.learning_rate * gb
            loss, _, _ = logistic_loss_and_grad(w, b, X, y)
        if not math.isfinite(loss) or not np.all(np.isfinite(w)):
            raise NonFiniteLoss(f"loss diverged at epoch {epoch}: {loss} (|w|={np.linalg.norm(w):.3g})")
        trace.append(loss)
    return w, b, trace


def fit_standardized(X, labels, config: ExpertTrainConfig):
    """Train on standardized features, then fold the scaling back into raw-feature weights."""
    X = np.asarray(X, dtype=np.float64)
    y = np.array([1.0 if Label(l) is Label.SYNTHETIC else 0.0 for l in labels])
    if min(int(y.sum()), int(len(y) - y.sum())) < 2:
        raise DegenerateCorpus("training needs at least two records of each label")
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    w_std, b_std, trace = fit_logistic((X - mu) / sd, y, config)
    return w_std / sd, b_std - float(np.dot(w_std, mu / sd)), trace


def fit_expert(features: np.ndarray, labels, config: ExpertTrainConfig, threshold: float = 0.5) -> ExpertModel:
    w, b, trace = fit_standardized(features, labels, config)
    return ExpertModel(w, b, threshold, config, trace)


def manifest_features(manifest: CorpusManifest, workers: int = 1) -> np.ndarray:
    return extract_many((manifest.load_image(r) for r in manifest.records), workers=workers)


def train_expert(manifest: CorpusManifest, config: ExpertTrainConfig = ExpertTrainConfig(), *, workers: int = 1) -> ExpertModel:
    if manifest.kind is not ManifestKind.PIXEL_SUPERVISION:
        raise InvalidParameter(f"the expert trains on pixel supervision only, got {manifest.kind.value}")
    return fit_expert(manifest_features(manifest, workers), [r.label for r in manifest.records], config)


class HttpExpertBackend:
    """Adapter for an external expert serving ``POST /score``."""

    def __init__(
        self,
        endpoint: str,
        *,
        threshold: float = 0.5,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.5,
        name: str = "http-expert",
    ):
        self.endpoint = endpoint.rstrip("/")
        self.threshold = threshold
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.name = name

    def health(self) -> bool:
        return _http.get_ok(f"{self.endpoint}/health", timeout=self.timeout)

    def score(self, img: PixelBuffer) -> BranchVerdict:
        body = _http.post_json(
            f"{self.endpoint}/score",
            _http.image_payload(img),
            timeout=self.timeout,
            retries=self.retries,
            backoff=self.backoff,
        )
        s = body.get("score")
        if isinstance(s, bool) or not isinstance(s, (int, float)) or not 0.0 <= float(s) <= 1.0:
            raise MalformedResponse(f"expert score must be a number in [0, 1], got {s!r}")
        s = float(s)
        return BranchVerdict(Branch.PIXEL_EXPERT, s, decide(s, self.threshold), threshold=self.threshold)


def external_expert_backend(endpoint: str, **kwargs) -> HttpExpertBackend:
    return HttpExpertBackend(endpoint, **kwargs)
