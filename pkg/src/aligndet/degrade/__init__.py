from .ops import (
    DoubleJpeg,
    DoubleResize,
    GaussianBlur,
    GaussianNoise,
    Jpeg,
    Resize,
    double_jpeg,
    double_resize,
    gaussian_blur,
    gaussian_kernel,
    gaussian_noise,
    jpeg_compress,
    op_from_dict,
    op_to_dict,
    resize,
)
from .pipeline import (
    DEFAULT_HEAVY_PROFILE,
    DegradationSpec,
    OpRange,
    PipelineProfile,
    apply_spec,
    sample_heavy_pipeline,
)
from .resample import Kernel

__all__ = [
    "DEFAULT_HEAVY_PROFILE",
    "DegradationSpec",
    "DoubleJpeg",
    "DoubleResize",
    "GaussianBlur",
    "GaussianNoise",
    "Jpeg",
    "Kernel",
    "OpRange",
    "PipelineProfile",
    "Resize",
    "apply_spec",
    "double_jpeg",
    "double_resize",
    "gaussian_blur",
    "gaussian_kernel",
    "gaussian_noise",
    "jpeg_compress",
    "op_from_dict",
    "op_to_dict",
    "resize",
    "sample_heavy_pipeline",
]
