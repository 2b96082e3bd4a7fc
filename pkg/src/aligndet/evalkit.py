"""Balanced-accuracy evaluation, robustness sweeps and the alignment probe."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import degrade
from .core import BranchVerdict, CorpusManifest, ImageRecord, Label
from .corpus import combine_mixed
from .errors import AlignDetError, EmptyResults, FailureBudgetExceeded, InvalidParameter, SingleClassInput
from .fusion import FusedVerdict, detect
from .pixels import PixelBuffer
from .seeding import derive_seed
from .semantic import UnknownPolicy, Verdict, semantic_verdict

log = logging.getLogger(__name__)

STD_CONVENTION = "population"
SPLITS = ("semantic_val", "semantic_test", "pixel_val", "pixel_test")
SUPERVISION_KINDS = ("semantic", "pixel", "mixed")

Detector = Callable[[PixelBuffer, ImageRecord], Any]


@dataclass(frozen=True)
class EvalResult:
    benchmark: str
    sub_source: str
    n_real: int
    n_fake: int
    tpr: float
    tnr: float
    balanced_accuracy: float
    n_failed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def balanced_accuracy(decisions, benchmark: str = "", sub_source: str = "all", n_failed: int = 0) -> EvalResult:
    """Mean of fake recall and real recall over ``(predicted, truth)`` pairs."""
    counts = {Label.REAL: [0, 0], Label.SYNTHETIC: [0, 0]}  # [correct, total]
    for predicted, truth in decisions:
        c = counts[Label(truth)]
        c[1] += 1
        c[0] += Label(predicted) is Label(truth)
    if counts[Label.REAL][1] == 0 or counts[Label.SYNTHETIC][1] == 0:
        raise SingleClassInput(f"{benchmark}/{sub_source}: balanced accuracy needs both real and synthetic samples")
    tpr = counts[Label.SYNTHETIC][0] / counts[Label.SYNTHETIC][1]
    tnr = counts[Label.REAL][0] / counts[Label.REAL][1]
    return EvalResult(
        benchmark, sub_source, counts[Label.REAL][1], counts[Label.SYNTHETIC][1], tpr, tnr, (tpr + tnr) / 2, n_failed
    )


def aggregate(results) -> tuple:
    """Unweighted mean and population std of balanced accuracies (or plain numbers)."""
    values = [r.balanced_accuracy if isinstance(r, EvalResult) else float(r) for r in results]
    if not values:
        raise EmptyResults("nothing to aggregate")
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def as_label(output) -> Label:
    if isinstance(output, FusedVerdict):
        return output.final
    if isinstance(output, BranchVerdict):
        return output.decision
    if isinstance(output, Verdict):
        if output is Verdict.UNKNOWN:
            raise InvalidParameter("an unknown verdict is not a label")
        return Label(output.value)
    return Label(output)


# --- detectors ---------------------------------------------------------------


def oracle_detector(img, record):
    return record.label


def anti_oracle_detector(img, record):
    return record.label.opposite


def expert_detector(expert) -> Detector:
    return lambda img, record: expert.score(img)


def semantic_detector(backend, prompt=None, unknown_policy=UnknownPolicy.REAL) -> Detector:
    kwargs = {} if prompt is None else {"prompt": prompt}
    return lambda img, record: semantic_verdict(backend, img, image_id=record.id, unknown_policy=unknown_policy, **kwargs)


def fused_detector(backend, expert, prompt=None, unknown_policy=UnknownPolicy.REAL, degraded_ok=False) -> Detector:
    kwargs = {} if prompt is None else {"prompt": prompt}

    def run(img, record):
        return detect(img, backend, expert, image_id=record.id, unknown_policy=unknown_policy, degraded_ok=degraded_ok, **kwargs)

    return run


# --- evaluation --------------------------------------------------------------


def _predict_all(detector, manifest, transform, failure_budget, workers):
    def one(record):
        try:
            img = manifest.load_image(record)
            if transform is not None:
                img = transform(img, record)
            return as_label(detector(img, record))
        except (AlignDetError, OSError) as exc:
            return exc

    records = list(manifest.records)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, records))
    else:
        outcomes = [one(r) for r in records]
    failures = [o for o in outcomes if isinstance(o, Exception)]
    if len(failures) > failure_budget:
        if failure_budget == 0:
            raise failures[0]
        raise FailureBudgetExceeded(f"{len(failures)} detector failures exceed the budget of {failure_budget}") from failures[0]
    return dict(zip((r.id for r in records), outcomes))


def _groups(manifest: CorpusManifest, group_by: str | None) -> dict:
    """Group value -> records; records lacking the field join every group."""
    if group_by is None:
        return {"all": list(manifest.records)}
    if group_by not in ImageRecord.__dataclass_fields__:
        raise InvalidParameter(f"cannot group by unknown field {group_by!r}")

    def value(r):
        v = getattr(r, group_by)
        return v.value if hasattr(v, "value") else v

    keys = sorted({value(r) for r in manifest.records if value(r) is not None})
    if not keys:
        return {"all": list(manifest.records)}
    shared = [r for r in manifest.records if value(r) is None]
    return {k: shared + [r for r in manifest.records if value(r) == k] for k in keys}


def evaluate_detector(
    detector: Detector,
    manifest: CorpusManifest,
    group_by: str | None = "generator",
    *,
    transform=None,
    failure_budget: int = 0,
    workers: int = 1,
    benchmark: str | None = None,
) -> list:
    """One result per group, ordered by group value.

    Failed records are excluded from the rates and counted in ``n_failed``;
    more than ``failure_budget`` failures re-raises.
    """
    name = benchmark or manifest.name
    preds = _predict_all(detector, manifest, transform, failure_budget, workers)
    results = []
    for key, members in _groups(manifest, group_by).items():
        ok = [(preds[r.id], r.label) for r in members if not isinstance(preds[r.id], Exception)]
        failed = sum(isinstance(preds[r.id], Exception) for r in members)
        results.append(balanced_accuracy(ok, benchmark=name, sub_source=str(key), n_failed=failed))
    return results


@dataclass(frozen=True)
class RobustnessCurve:
    op_family: str
    grid: tuple
    points: tuple

    def __post_init__(self):
        if len(self.grid) != len(self.points):
            raise InvalidParameter("a curve needs one point per grid value")

    def series(self) -> list:
        return [[g, p] for g, p in zip(self.grid, self.points)]

    def to_dict(self) -> dict:
        return {"op_family": self.op_family, "grid": list(self.grid), "points": list(self.points), "series": self.series()}


def family_transform(family: str, value, kernel=degrade.Kernel.BILINEAR, seed: int = 0):
    """``transform(img, record)`` applying one op of ``family`` at ``value``."""
    if family == "jpeg":
        op = degrade.Jpeg(int(value))
    elif family == "double_jpeg":
        op = degrade.DoubleJpeg(int(value))
    elif family == "resize":
        op = degrade.Resize(float(value), kernel)
    elif family == "double_resize":
        op = degrade.DoubleResize(float(value), kernel)
    elif family == "gaussian_blur":
        op = degrade.GaussianBlur(float(value))
    elif family == "gaussian_noise":
        sigma = float(value)
        return lambda img, record: degrade.gaussian_noise(img, sigma, derive_seed(seed, record.id))
    else:
        raise InvalidParameter(f"unknown op family {family!r}")
    return lambda img, record: op.apply(img)


def robustness_sweep(
    detector: Detector,
    manifest: CorpusManifest,
    family: str,
    grid,
    *,
    kernel=degrade.Kernel.BILINEAR,
    group_by: str | None = None,
    failure_budget: int = 0,
    workers: int = 1,
) -> RobustnessCurve:
    """Balanced accuracy with the op applied to every image, real and fake alike.

    The first point is always the untouched manifest (grid value ``"identity"``).
    With ``group_by`` each point is the mean over groups.
    """
    grid = [g for g in grid if g != "identity"]
    if not grid:
        raise InvalidParameter("robustness grid is empty")
    labels, points = ["identity"], []
    transforms = [None] + [family_transform(family, g, kernel, manifest.seed) for g in grid]
    labels.extend(grid)
    for t in transforms:
        res = evaluate_detector(
            detector, manifest, group_by, transform=t, failure_budget=failure_budget, workers=workers
        )
        points.append(res[0].balanced_accuracy if len(res) == 1 else aggregate(res)[0])
    return RobustnessCurve(family, tuple(labels), tuple(points))


# --- alignment probe ---------------------------------------------------------


@dataclass
class AlignmentProbeMatrix:
    rows: list
    cols: tuple = SUPERVISION_KINDS
    cells: dict = field(default_factory=dict)  # (row, col) -> {split: ba} or None
    errors: dict = field(default_factory=dict)

    def cell(self, row: str, col: str):
        return self.cells.get((row, col))

    def dilution(self) -> dict:
        """Mixed-supervision accuracy minus the matching pure-supervision accuracy."""
        out = {}
        for row in self.rows:
            mixed = self.cell(row, "mixed")
            d = {}
            for split in SPLITS:
                pure = self.cell(row, split.split("_")[0])
                if mixed is None or pure is None:
                    d[split] = None
                else:
                    d[split] = mixed[split] - pure[split]
            out[row] = d
        return out

    def to_dict(self) -> dict:
        return {
            "rows": list(self.rows),
            "cols": list(self.cols),
            "splits": list(SPLITS),
            "cells": [
                {"model": r, "supervision": c, "accuracy": self.cells.get((r, c))} for r in self.rows for c in self.cols
            ],
            "dilution": self.dilution(),
            "errors": {f"{r}/{c}": msg for (r, c), msg in sorted(self.errors.items())},
        }


def _paths(manifest: CorpusManifest) -> set:
    return {str(manifest.resolve(r).resolve()) for r in manifest.records}


def alignment_probe(trainers: dict, sets: dict, eval_splits: dict, *, workers: int = 1) -> AlignmentProbeMatrix:
    """Train each model on each supervision set and score it on all four splits.

    ``trainers`` maps a model name to ``train(manifest) -> detector``. A
    missing ``sets["mixed"]`` is the union of the two pure sets, ids namespaced by set name.
    """
    sets = dict(sets)
    if "mixed" not in sets:
        sets["mixed"] = combine_mixed([sets["semantic"], sets["pixel"]], namespace=True)
    missing = [s for s in SPLITS if s not in eval_splits]
    if missing:
        raise InvalidParameter(f"missing evaluation splits: {missing}")
    train_paths = set().union(*(_paths(sets[k]) for k in SUPERVISION_KINDS))
    for split in SPLITS:
        if _paths(eval_splits[split]) & train_paths:
            raise InvalidParameter(f"evaluation split {split!r} overlaps the training sets")

    matrix = AlignmentProbeMatrix(rows=list(trainers))
    for name, train in trainers.items():
        for kind in SUPERVISION_KINDS:
            try:
                detector = train(sets[kind])
            except Exception as exc:  # a broken trainer leaves a hole, the probe continues
                log.warning("trainer %s failed on %s: %s", name, kind, exc)
                matrix.cells[(name, kind)] = None
                matrix.errors[(name, kind)] = f"{type(exc).__name__}: {exc}"
                continue
            matrix.cells[(name, kind)] = {
                split: evaluate_detector(detector, eval_splits[split], None, workers=workers)[0].balanced_accuracy
                for split in SPLITS
            }
    return matrix


# --- reports -----------------------------------------------------------------


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def emit_report(results=(), curves=(), matrix: AlignmentProbeMatrix | None = None, path=".", metadata: dict | None = None) -> Path:
    """Write ``report.json`` plus CSV mirrors into directory ``path``; bytes are deterministic."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    results, curves = list(results), list(curves)
    by_bench = defaultdict(list)
    for r in results:
        by_bench[r.benchmark].append(r)
    summary = []
    for bench in sorted(by_bench):
        mean, std = aggregate(by_bench[bench])
        summary.append({"benchmark": bench, "mean": mean, "std": std, "n_sub_sources": len(by_bench[bench])})
    meta = {"std_convention": STD_CONVENTION, "seeds": {}, "config_hash": None}
    meta.update(metadata or {})
    report = {
        "results": [r.to_dict() for r in results],
        "summary": summary,
        "curves": [c.to_dict() for c in curves],
        "metadata": meta,
    }
    if matrix is not None:
        report["probe_matrix"] = matrix.to_dict()
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    fields = list(EvalResult.__dataclass_fields__)
    (out / "results.csv").write_text(
        _csv([[getattr(r, f) for f in fields] for r in results], fields), encoding="utf-8"
    )
    (out / "curves.csv").write_text(
        _csv([[c.op_family, g, p] for c in curves for g, p in zip(c.grid, c.points)], ["op_family", "grid_value", "balanced_accuracy"]),
        encoding="utf-8",
    )
    if matrix is not None:
        rows = []
        for r in matrix.rows:
            for c in matrix.cols:
                cell = matrix.cell(r, c)
                rows.append([r, c] + [None if cell is None else cell[s] for s in SPLITS])
        (out / "probe.csv").write_text(_csv(rows, ["model", "supervision", *SPLITS]), encoding="utf-8")
    return out / "report.json"
