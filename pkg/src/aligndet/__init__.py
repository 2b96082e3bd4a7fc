"""Dual-branch detection of AI-generated images.

A semantic branch (a VLM behind a backend interface, trained with DPO on
degraded surreal pairs) and a pixel-artifact expert (trained on
reconstruction pairs) vote under an OR rule.
"""

from .core import (
    Branch,
    BranchVerdict,
    CorpusManifest,
    ImageRecord,
    Label,
    ManifestKind,
    Subset,
    load_manifest,
    save_manifest,
    validate_manifest,
)
from .errors import AlignDetError
from .fusion import FusedVerdict, detect, fuse
from .pixels import PixelBuffer, load_image, save_png

__version__ = "0.1.0"

__all__ = [
    "AlignDetError",
    "Branch",
    "BranchVerdict",
    "CorpusManifest",
    "FusedVerdict",
    "ImageRecord",
    "Label",
    "ManifestKind",
    "PixelBuffer",
    "Subset",
    "detect",
    "fuse",
    "load_image",
    "load_manifest",
    "save_manifest",
    "save_png",
    "validate_manifest",
]
