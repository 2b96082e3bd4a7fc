"""Run configuration: YAML file, environment overrides, command-line overrides.

Later sources win: built-in defaults, then the config file, then
``ALIGNDET_*`` environment variables, then flags. The config hash covers
everything that can change an output, which excludes ``out`` and
``workers``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

import yaml

from .corpus import AIGI_NOW_PER_GENERATOR, PIXEL_SET_REALS, SEMANTIC_SET_FAKES, SEMANTIC_SET_REALS
from .degrade import DEFAULT_HEAVY_PROFILE, PipelineProfile
from .errors import ConfigError
from .expert import ExpertTrainConfig
from .semantic import DpoConfig, UnknownPolicy

ENV_PREFIX = "ALIGNDET_"
UNHASHED = ("out", "workers")
DATA_PATHS = ("reals", "fakes", "pairing", "benchmark_reals", "captions", "faithful_fakes", "surreal_fakes", "benchmark")

DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "out": "runs",
    "data": {key: None for key in DATA_PATHS},
    "corpus": {
        "pixel_reals": PIXEL_SET_REALS,
        "semantic_reals": SEMANTIC_SET_REALS,
        "semantic_fakes": SEMANTIC_SET_FAKES,
        "aigi_now_per_generator": AIGI_NOW_PER_GENERATOR,
        "reconstructor_strength": 1.0,
        "profile": "heavy",
    },
    "profiles": {"heavy": DEFAULT_HEAVY_PROFILE.to_dict()},
    "expert": ExpertTrainConfig().to_dict(),
    "dpo": {**DpoConfig().to_dict(), "elicit": False},
    "backends": {
        "semantic_url": None,
        "semantic_model": "qwen2.5-vl-7b-dpo",
        "semantic_stub": None,
        "stub_default": "",
        "expert_url": None,
        "timeout": 60.0,
        "retries": 3,
        "backoff": 0.5,
    },
    "fusion": {"unknown_policy": UnknownPolicy.REAL.value, "degraded_ok": False, "threshold": 0.5},
    "eval": {
        "detector": "fused",
        "group_by": "generator",
        "failure_budget": 0,
        "robustness": {"family": "double_resize", "grid": [0.8, 0.6, 0.4], "kernel": "bilinear"},
    },
    "probe": {
        "trainers": ["expert", "layout"],
        "sets": {"semantic": None, "pixel": None, "mixed": None},
        "splits": {"semantic_val": None, "semantic_test": None, "pixel_val": None, "pixel_test": None},
        "expert": {"learning_rate": 0.05, "epochs": 20},
    },
}

_ENV = {
    "SEED": ("seed", int),
    "WORKERS": ("workers", int),
    "OUT": ("out", str),
    "BACKEND_URL": ("backends.semantic_url", str),
    "DEGRADED_OK": ("fusion.degraded_ok", lambda v: v.strip().lower() in ("1", "true", "yes", "on")),
}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where + key!r}")
        if isinstance(base[key], dict) and key not in ("profiles",):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where + key!r} must be a mapping")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def set_path(cfg: dict, dotted: str, value) -> None:
    node = cfg
    *parents, leaf = dotted.split(".")
    for p in parents:
        node = node[p]
    node[leaf] = value


def _anchor(value, base: Path):
    if value is None:
        return None
    p = Path(os.path.expanduser(str(value)))
    return str(p if p.is_absolute() else (base / p).resolve())


def load_config(path=None, overrides: dict | None = None, env=None) -> dict:
    """Resolve the full config. Relative data paths are anchored at the config file's directory."""
    env = os.environ if env is None else env
    cfg = copy.deepcopy(DEFAULTS)
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        cfg = _merge(cfg, loaded)
        base = path.resolve().parent

    for suffix, (dotted, conv) in _ENV.items():
        raw = env.get(ENV_PREFIX + suffix)
        if raw is not None:
            try:
                set_path(cfg, dotted, conv(raw))
            except ValueError as exc:
                raise ConfigError(f"bad value for {ENV_PREFIX + suffix}: {raw!r}") from exc
    for dotted, value in (overrides or {}).items():
        if value is not None:
            set_path(cfg, dotted, value)

    for key in DATA_PATHS:
        cfg["data"][key] = _anchor(cfg["data"][key], base)
    for group in ("sets", "splits"):
        for key, value in cfg["probe"][group].items():
            cfg["probe"][group][key] = _anchor(value, base)
    cfg["backends"]["semantic_stub"] = _anchor(cfg["backends"]["semantic_stub"], base)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    try:
        from .seeding import check_seed

        check_seed(cfg["seed"])
        ExpertTrainConfig(**cfg["expert"])
        UnknownPolicy(cfg["fusion"]["unknown_policy"])
        profile(cfg)
        if cfg["workers"] < 1:
            raise ValueError("workers must be at least 1")
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def profile(cfg: dict, name: str | None = None) -> PipelineProfile:
    name = name or cfg["corpus"]["profile"]
    if name not in cfg["profiles"]:
        raise ConfigError(f"unknown degradation profile {name!r}")
    return PipelineProfile.from_dict(cfg["profiles"][name])


def hashed_view(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in UNHASHED}


def config_hash(cfg: dict) -> str:
    text = json.dumps(hashed_view(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def run_dir(cfg: dict) -> Path:
    return Path(cfg["out"]) / f"run-{config_hash(cfg)[:12]}"
