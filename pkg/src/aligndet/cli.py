"""``aligndet`` command line.

Every command resolves the config, prints its hash, and writes under
``<out>/run-<hash12>/``. Later commands default their inputs to what
earlier commands wrote in the same run directory.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .core import ImageRecord, Label, load_manifest
from .corpus import (
    IMAGE_SUFFIXES,
    PseudoReconstructor,
    build_aigi_now,
    build_dpo_pairs,
    build_pixel_set,
    build_semantic_set,
    export_dpo_jsonl,
    load_captions,
    records_from_dir,
)
from .errors import AlignDetError, ConfigError
from .evalkit import (
    alignment_probe,
    anti_oracle_detector,
    emit_report,
    evaluate_detector,
    expert_detector,
    fused_detector,
    oracle_detector,
    robustness_sweep,
    semantic_detector,
)
from .expert import ExpertTrainConfig, HttpExpertBackend, fit_expert, load_model, manifest_features, save_model, train_expert
from .fusion import detect
from .pixels import load_image
from .semantic import DpoConfig, HttpVlmBackend, UnknownPolicy, load_stub_fixture, train_layout_model

log = logging.getLogger("aligndet")

DETECTORS = ("fused", "expert", "semantic", "oracle", "anti-oracle")


class UsageError(Exception):
    pass


class Run:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.hash = cfgmod.config_hash(cfg)
        self.dir = cfgmod.run_dir(cfg)

    def path(self, *parts) -> Path:
        return self.dir.joinpath(*parts)

    def start(self) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        doc = {"config": cfgmod.hashed_view(self.cfg), "config_hash": self.hash}
        self.path("run.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"config hash: {self.hash}")
        print(f"run dir: {self.dir}")

    def metadata(self, **extra) -> dict:
        return {"config_hash": self.hash, "seeds": {"global": self.cfg["seed"]}, **extra}


# --- input helpers -----------------------------------------------------------


def _need(path, what: str, hint: str = "") -> Path:
    if path is None:
        raise UsageError(f"no {what} given{hint}")
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{what} not found: {path}{hint}")
    return path


def _records(path, label: Label) -> list:
    """Records from an image directory, or the ``label`` records of a manifest file (paths made absolute)."""
    path = Path(path)
    if path.is_dir():
        return records_from_dir(path, label)
    m = load_manifest(path)
    return [ImageRecord.from_dict({**r.to_dict(), "source_path": str(m.resolve(r))}) for r in m.records if r.label is label]


def _load_pairing(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        obj = None
    if isinstance(obj, dict):
        return {str(k): str(v) for k, v in obj.items()}
    rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    return {str(r["fake_id"]): str(r["real_id"]) for r in rows}


def _generator_fakes(root, captions: dict, kind: str) -> list:
    """Fakes laid out as ``root/<generator>/<real id>[__tag].<ext>``."""
    out = []
    for gen_dir in sorted(p for p in Path(root).iterdir() if p.is_dir()):
        for f in sorted(p for p in gen_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES):
            real_id = f.stem.split("__")[0]
            cap = captions.get(real_id)
            out.append(
                ImageRecord(
                    id=f"{gen_dir.name}__{kind}__{f.stem}",
                    source_path=str(f.resolve()),
                    label=Label.SYNTHETIC,
                    semantic_id=cap.key if cap else real_id,
                    generator=gen_dir.name,
                )
            )
    return out


def _manifest_arg(arg, *defaults, what="manifest") -> Path:
    if arg is not None:
        return _need(arg, what)
    for d in defaults:
        if d is not None and Path(d).exists():
            return Path(d)
    raise UsageError(f"no {what} given and none found at {', '.join(str(d) for d in defaults if d)}")


def _expert(run: Run, model_arg=None):
    b = run.cfg["backends"]
    if model_arg is None and b["expert_url"]:
        return HttpExpertBackend(b["expert_url"], timeout=b["timeout"], retries=b["retries"], backoff=b["backoff"])
    path = _manifest_arg(model_arg, run.path("expert", "model.json"), what="expert model")
    return load_model(path)


def _semantic_backend(run: Run):
    b = run.cfg["backends"]
    if b["semantic_url"]:
        return HttpVlmBackend(
            b["semantic_url"], b["semantic_model"], timeout=b["timeout"], retries=b["retries"], backoff=b["backoff"]
        )
    if b["semantic_stub"]:
        return load_stub_fixture(_need(b["semantic_stub"], "semantic stub fixture"), default=b["stub_default"])
    raise UsageError("the semantic branch needs backends.semantic_url (--backend-url) or backends.semantic_stub")


def _detector(name: str, run: Run, model_arg=None):
    fusion = run.cfg["fusion"]
    policy = UnknownPolicy(fusion["unknown_policy"])
    prompt = run.cfg["dpo"]["prompt"]
    if name == "oracle":
        return oracle_detector
    if name == "anti-oracle":
        return anti_oracle_detector
    if name == "expert":
        return expert_detector(_expert(run, model_arg))
    if name == "semantic":
        return semantic_detector(_semantic_backend(run), prompt, policy)
    return fused_detector(_semantic_backend(run), _expert(run, model_arg), prompt, policy, fusion["degraded_ok"])


def _summary(manifest, path) -> None:
    n_real = sum(r.label is Label.REAL for r in manifest.records)
    print(f"{manifest.name}: {len(manifest)} records ({n_real} real, {len(manifest) - n_real} synthetic), seed {manifest.seed} -> {path}")


# --- commands ----------------------------------------------------------------


def cmd_build(args, run: Run) -> None:
    cfg, data, corpus = run.cfg, run.cfg["data"], run.cfg["corpus"]
    seed = cfg["seed"]
    if args.kind == "pixel":
        reals = _records(_need(data["reals"], "real image directory (data.reals)"), Label.REAL)
        out = run.path("pixel")
        m = build_pixel_set(
            reals, PseudoReconstructor(corpus["reconstructor_strength"]), out, seed=seed, n_real=corpus["pixel_reals"]
        )
        _summary(m, out / "manifest.jsonl")
    elif args.kind == "semantic":
        reals = _records(_need(data["reals"], "real image directory (data.reals)"), Label.REAL)
        fakes = _records(_need(data["fakes"], "fake image directory (data.fakes)"), Label.SYNTHETIC)
        pairing = _load_pairing(_need(data["pairing"], "pairing file")) if data["pairing"] else None
        counts = {} if pairing else {"n_real": corpus["semantic_reals"], "n_fake": corpus["semantic_fakes"]}
        out = run.path("semantic")
        m = build_semantic_set(reals, fakes, pairing, cfgmod.profile(cfg), seed, out, **counts)
        _summary(m, out / "manifest.jsonl")
    else:
        reals = _records(
            _need(data["benchmark_reals"] or data["reals"], "benchmark real directory (data.benchmark_reals)"), Label.REAL
        )
        captions = load_captions(_need(data["captions"], "caption file (data.captions)"))
        faithful = _generator_fakes(_need(data["faithful_fakes"], "faithful fake directory"), captions, "faithful")
        surreal = _generator_fakes(_need(data["surreal_fakes"], "surreal fake directory"), captions, "surreal")
        out = run.path("aigi-now")
        pixel, semantic = build_aigi_now(
            reals, captions, faithful, surreal, cfgmod.profile(cfg), seed, out, per_generator=corpus["aigi_now_per_generator"]
        )
        _summary(pixel, out / "pixel.jsonl")
        _summary(semantic, out / "semantic.jsonl")


def cmd_train_expert(args, run: Run) -> None:
    path = _manifest_arg(args.manifest, run.path("pixel", "manifest.jsonl"), what="pixel-supervision manifest")
    model = train_expert(load_manifest(path), ExpertTrainConfig(**run.cfg["expert"]), workers=run.cfg["workers"])
    out = save_model(model, run.path("expert", "model.json"))
    print(f"trained on {path}; final loss {model.loss_trace[-1] if model.loss_trace else float('nan'):.6f} -> {out}")


def cmd_export_dpo(args, run: Run) -> None:
    path = _manifest_arg(args.manifest, run.path("semantic", "manifest.jsonl"), what="semantic-supervision manifest")
    dpo = {k: v for k, v in run.cfg["dpo"].items() if k != "elicit"}
    dcfg = DpoConfig(**dpo)
    responder = None
    if run.cfg["dpo"]["elicit"]:
        backend = _semantic_backend(run)

        def responder(img, prompt, prefix):
            return backend.verdict(img, f"{prompt}\nBegin your answer with: {prefix}")

    pairs = build_dpo_pairs(load_manifest(path), responder, dcfg.prompt)
    out = export_dpo_jsonl(pairs, run.path("dpo", "pairs.jsonl"))
    meta = {"dpo_config": dcfg.to_dict(), "config_hash": run.hash, "n_pairs": len(pairs), "failures": sorted(pairs.failures)}
    run.path("dpo", "dpo_config.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{len(pairs)} preference pairs ({len(pairs.failures)} failures) -> {out}")


def cmd_detect(args, run: Run) -> None:
    target = _need(args.target, "image or directory")
    files = sorted(p for p in target.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES) if target.is_dir() else [target]
    backend, expert = _semantic_backend(run), _expert(run, args.model)
    fusion = run.cfg["fusion"]
    lines = []
    for f in files:
        verdict = detect(
            load_image(f),
            backend,
            expert,
            run.cfg["dpo"]["prompt"],
            image_id=f.stem,
            unknown_policy=UnknownPolicy(fusion["unknown_policy"]),
            degraded_ok=fusion["degraded_ok"],
        )
        line = json.dumps({"image_id": f.stem, **verdict.to_dict()}, sort_keys=True)
        print(line)
        lines.append(line)
    out = run.path("detect", "verdicts.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _benchmarks(args, run: Run) -> list:
    if args.manifest:
        return [_need(p, "benchmark manifest") for p in args.manifest]
    if run.cfg["data"]["benchmark"]:
        return [_need(run.cfg["data"]["benchmark"], "benchmark manifest (data.benchmark)")]
    found = [p for p in (run.path("aigi-now", "pixel.jsonl"), run.path("aigi-now", "semantic.jsonl")) if p.exists()]
    if not found:
        raise UsageError("no benchmark manifest given; run 'build --kind aigi-now' or set data.benchmark")
    return found


def cmd_eval(args, run: Run) -> None:
    ev = run.cfg["eval"]
    name = args.detector or ev["detector"]
    detector = _detector(name, run, args.model)
    results = []
    for path in _benchmarks(args, run):
        m = load_manifest(path)
        results.extend(
            evaluate_detector(
                detector, m, ev["group_by"], failure_budget=ev["failure_budget"], workers=run.cfg["workers"]
            )
        )
    out = emit_report(results, path=run.path("eval", name), metadata=run.metadata(detector=name))
    for r in results:
        print(f"{r.benchmark}/{r.sub_source}: balanced accuracy {r.balanced_accuracy:.4f} (n_real {r.n_real}, n_fake {r.n_fake})")
    print(f"report -> {out}")


def cmd_robustness(args, run: Run) -> None:
    ev = run.cfg["eval"]
    rb = ev["robustness"]
    name = args.detector or ev["detector"]
    family = args.family or rb["family"]
    grid = args.grid or rb["grid"]
    detector = _detector(name, run, args.model)
    curves = []
    for path in _benchmarks(args, run):
        m = load_manifest(path)
        curve = robustness_sweep(
            detector, m, family, grid, kernel=rb["kernel"], failure_budget=ev["failure_budget"], workers=run.cfg["workers"]
        )
        curves.append(curve)
        print(f"{m.name} {family}: " + ", ".join(f"{g}={p:.4f}" for g, p in curve.series()))
    out = emit_report(curves=curves, path=run.path("robustness", name), metadata=run.metadata(detector=name, family=family))
    print(f"report -> {out}")


def cmd_probe(args, run: Run) -> None:
    probe = run.cfg["probe"]
    fallback = {"semantic": run.path("semantic", "manifest.jsonl"), "pixel": run.path("pixel", "manifest.jsonl")}
    sets = {}
    for kind in ("semantic", "pixel", "mixed"):
        p = probe["sets"][kind] or fallback.get(kind)
        if p is None:
            continue
        sets[kind] = load_manifest(_need(p, f"{kind} supervision manifest (probe.sets.{kind})"))
    splits = {
        s: load_manifest(_need(p, f"evaluation split probe.splits.{s}")) for s, p in probe["splits"].items()
    }
    ecfg = ExpertTrainConfig(**{**run.cfg["expert"], **probe["expert"]})
    policy = UnknownPolicy(run.cfg["fusion"]["unknown_policy"])
    available = {
        "expert": lambda m: expert_detector(fit_expert(manifest_features(m), [r.label for r in m.records], ecfg)),
        "layout": lambda m: semantic_detector(train_layout_model(m), unknown_policy=policy),
    }
    unknown = [t for t in probe["trainers"] if t not in available]
    if unknown:
        raise UsageError(f"unknown probe trainers {unknown}; choose from {sorted(available)}")
    matrix = alignment_probe({t: available[t] for t in probe["trainers"]}, sets, splits, workers=run.cfg["workers"])
    out = emit_report(matrix=matrix, path=run.path("probe"), metadata=run.metadata())
    for (row, col), cell in sorted(matrix.cells.items()):
        shown = "failed" if cell is None else ", ".join(f"{k}={v:.3f}" for k, v in cell.items())
        print(f"{row} trained on {col}: {shown}")
    print(f"report -> {out}")


# --- parser ------------------------------------------------------------------


def _common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="YAML run config")
    parser.add_argument("--seed", type=int, default=d, help="global seed")
    parser.add_argument("--workers", type=int, default=d, help="worker threads (outputs do not depend on it)")
    parser.add_argument("--out", default=d, help="output root; runs go to <out>/run-<hash>")
    parser.add_argument("--backend-url", default=d, help="semantic VLM endpoint")
    parser.add_argument("--degraded-ok", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="keep going with one branch if the other fails")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aligndet", description="Dual-branch AI-generated image detection toolkit.")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        _common(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("build", cmd_build, "build a supervision set or the benchmark")
    p.add_argument("--kind", required=True, choices=("pixel", "semantic", "aigi-now"))

    p = add("train-expert", cmd_train_expert, "train the reference pixel expert")
    p.add_argument("--manifest")

    p = add("export-dpo", cmd_export_dpo, "export DPO preference pairs")
    p.add_argument("--manifest")

    p = add("detect", cmd_detect, "fused verdicts for an image or a directory")
    p.add_argument("target")
    p.add_argument("--model", help="expert model file")

    for name, func, help_ in (
        ("eval", cmd_eval, "balanced accuracy per sub-source"),
        ("robustness", cmd_robustness, "accuracy under a degradation sweep"),
    ):
        p = add(name, func, help_)
        p.add_argument("manifest", nargs="*")
        p.add_argument("--detector", choices=DETECTORS)
        p.add_argument("--model", help="expert model file")
        if name == "robustness":
            p.add_argument("--family")
            p.add_argument("--grid", type=float, nargs="+")

    add("probe", cmd_probe, "alignment probe matrix")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {
        "seed": args.seed,
        "workers": args.workers,
        "out": args.out,
        "backends.semantic_url": args.backend_url,
        "fusion.degraded_ok": True if args.degraded_ok else None,
    }
    try:
        config_path = args.config or os.environ.get(cfgmod.ENV_PREFIX + "CONFIG")
        run = Run(cfgmod.load_config(config_path, overrides))
        run.start()
        args.func(args, run)
    except (UsageError, ConfigError) as exc:
        print(f"aligndet: error: {exc}", file=sys.stderr)
        return 2
    except (AlignDetError, OSError, ValueError) as exc:
        print(f"aligndet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
