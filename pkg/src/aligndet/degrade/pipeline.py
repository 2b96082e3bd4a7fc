"""Seeded degradation specs, randomized heavy-pipeline profiles, and replay."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyPool, InvalidParameter, ParseError
from ..pixels import PixelBuffer
from ..seeding import check_seed
from .ops import OP_TYPES, op_from_dict, op_to_dict

MAX_SPEC_LENGTH = 8

# parameters drawn as inclusive integers rather than uniform reals
_INTEGER_PARAMS = {"quality"}


@dataclass(frozen=True)
class DegradationSpec:
    """An ordered, seeded list of ops; replaying it is bit-exact."""

    seed: int
    ops: tuple = ()

    def __post_init__(self):
        check_seed(self.seed)
        ops = tuple(self.ops)
        if len(ops) > MAX_SPEC_LENGTH:
            raise InvalidParameter(f"a spec holds at most {MAX_SPEC_LENGTH} ops, got {len(ops)}")
        object.__setattr__(self, "ops", ops)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "ops": [op_to_dict(op) for op in self.ops]}

    def to_json(self) -> str:
        """Canonical JSON text; equal specs give equal bytes."""
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationSpec":
        if not isinstance(d, dict) or "seed" not in d or "ops" not in d:
            raise ParseError("degradation spec must be an object with 'seed' and 'ops'")
        return cls(seed=int(d["seed"]), ops=tuple(op_from_dict(o) for o in d["ops"]))

    def apply(self, img: PixelBuffer) -> PixelBuffer:
        return apply_spec(self, img)


def apply_spec(spec: DegradationSpec, img: PixelBuffer) -> PixelBuffer:
    for op in spec.ops:
        img = op.apply(img)
    return img


@dataclass(frozen=True)
class OpRange:
    """One pool entry: an op kind plus fixed values or ``(lo, hi)`` ranges per parameter."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in OP_TYPES:
            raise InvalidParameter(f"unknown op kind {self.kind!r}")
        params = {}
        for name, value in self.params.items():
            if isinstance(value, (list, tuple)):
                lo, hi = value
                if lo > hi:
                    raise InvalidParameter(f"{self.kind}.{name}: empty range [{lo}, {hi}]")
                value = (lo, hi)
            params[name] = value
        object.__setattr__(self, "params", params)

    def sample(self, rng: np.random.Generator):
        values = {}
        for name in sorted(self.params):
            value = self.params[name]
            if isinstance(value, tuple):
                lo, hi = value
                if name in _INTEGER_PARAMS:
                    value = int(rng.integers(int(lo), int(hi), endpoint=True))
                else:
                    value = float(rng.uniform(float(lo), float(hi)))
            values[name] = value
        if self.kind == "gaussian_noise":
            values["seed"] = int(rng.integers(0, 2**63))
        return OP_TYPES[self.kind](**values)

    def harshest(self):
        """The op at the end of each range that degrades most (lowest quality/scale, highest sigma)."""
        values = {}
        for name, value in self.params.items():
            if isinstance(value, tuple):
                value = value[1] if name == "sigma" else value[0]
            values[name] = value
        if self.kind == "gaussian_noise":
            values.setdefault("seed", 0)
        return OP_TYPES[self.kind](**values)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for name, value in self.params.items():
            d[name] = list(value) if isinstance(value, tuple) else value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OpRange":
        d = dict(d)
        return cls(kind=d.pop("kind"), params=d)


@dataclass(frozen=True)
class PipelineProfile:
    pool: tuple
    min_length: int = 2
    max_length: int = 4

    def __post_init__(self):
        object.__setattr__(self, "pool", tuple(self.pool))
        if not 0 <= self.min_length <= self.max_length <= MAX_SPEC_LENGTH:
            raise InvalidParameter(f"bad length range [{self.min_length}, {self.max_length}]")

    def to_dict(self) -> dict:
        return {"length": [self.min_length, self.max_length], "pool": [r.to_dict() for r in self.pool]}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineProfile":
        lo, hi = d.get("length", (2, 4))
        return cls(pool=tuple(OpRange.from_dict(r) for r in d.get("pool", ())), min_length=int(lo), max_length=int(hi))


DEFAULT_HEAVY_PROFILE = PipelineProfile(
    pool=(
        OpRange("jpeg", {"quality": (30, 75)}),
        OpRange("double_jpeg", {"quality": (30, 75)}),
        OpRange("double_resize", {"scale": (0.3, 0.7), "kernel": "bilinear"}),
        OpRange("gaussian_blur", {"sigma": (0.8, 2.0)}),
        OpRange("gaussian_noise", {"sigma": (2.0, 8.0)}),
    ),
    min_length=2,
    max_length=4,
)


def sample_heavy_pipeline(seed: int, profile: PipelineProfile = DEFAULT_HEAVY_PROFILE) -> DegradationSpec:
    """Draw a spec: length uniform in the profile range, ops without replacement."""
    check_seed(seed)
    if not profile.pool:
        raise EmptyPool("degradation profile has an empty op pool")
    rng = np.random.default_rng(seed)
    hi = min(profile.max_length, len(profile.pool))
    lo = min(profile.min_length, hi)
    length = int(rng.integers(lo, hi, endpoint=True))
    picks = rng.permutation(len(profile.pool))[:length]
    return DegradationSpec(seed=seed, ops=tuple(profile.pool[int(i)].sample(rng) for i in picks))
