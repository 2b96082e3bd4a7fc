import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from aligndet import degrade as dg
from aligndet.errors import DegenerateOutput, EmptyPool, InvalidParameter, ParseError
from aligndet.pixels import PixelBuffer
from helpers import random_image


def mad(a, b):
    return float(np.abs(a.as_float() - b.as_float()).mean())


def pil_jpeg(img, quality, subsampling):
    out = io.BytesIO()
    Image.fromarray(img.data).save(out, format="JPEG", quality=quality, subsampling=subsampling)
    return np.asarray(Image.open(io.BytesIO(out.getvalue())).convert("RGB"))


# --- jpeg ---------------------------------------------------------------------


def test_jpeg_constant_q100_within_one_lsb():
    img = PixelBuffer.constant(64, 64, (200, 30, 90))
    assert np.abs(dg.jpeg_compress(img, 100).as_float() - img.as_float()).max() <= 1


def test_jpeg_q10_worse_than_q95(photo):
    # frozen from the committed photo: q10 -> 10.5408, q95 -> 1.7969
    lo, hi = mad(photo, dg.jpeg_compress(photo, 10)), mad(photo, dg.jpeg_compress(photo, 95))
    assert lo == pytest.approx(10.54079861111111, abs=1e-9)
    assert hi == pytest.approx(1.7969111689814814, abs=1e-9)
    assert lo > hi


def test_jpeg_preserves_odd_dimensions(rng):
    assert dg.jpeg_compress(random_image(rng, 37, 53), 50).shape == (53, 37, 3)


def test_jpeg_chroma_subsampling_switches_at_95(photo):
    assert np.array_equal(dg.jpeg_compress(photo, 94).data, pil_jpeg(photo, 94, 2))
    assert np.array_equal(dg.jpeg_compress(photo, 95).data, pil_jpeg(photo, 95, 0))
    assert not np.array_equal(dg.jpeg_compress(photo, 95).data, pil_jpeg(photo, 95, 2))


@pytest.mark.parametrize("q", [0, 101, 50.0, True])
def test_jpeg_rejects_quality(q):
    with pytest.raises(InvalidParameter):
        dg.jpeg_compress(PixelBuffer.constant(8, 8), q)


def test_double_jpeg_is_two_passes(photo):
    assert dg.double_jpeg(photo, 60) == dg.jpeg_compress(dg.jpeg_compress(photo, 60), 60)


def test_double_jpeg_stable_hash(photo):
    assert dg.double_jpeg(photo, 60).digest() == "42c9960c6401a8d21a8e9349316245e5a3004e91bcfe10e763c1fcdc5a5e24ca"


def test_double_jpeg_constant_q100():
    img = PixelBuffer.constant(16, 16, (10, 250, 128))
    assert np.abs(dg.double_jpeg(img, 100).as_float() - img.as_float()).max() <= 1


# --- resize -------------------------------------------------------------------


@pytest.mark.parametrize("kernel", list(dg.Kernel))
def test_resize_identity_short_circuits(photo, kernel):
    assert dg.resize(photo, 1.0, kernel) is photo
    assert dg.double_resize(photo, 1.0, kernel) is photo


def test_resize_2x2_nearest():
    out = dg.resize(PixelBuffer.constant(2, 2, (9, 8, 7)), 0.5, dg.Kernel.NEAREST)
    assert out.shape == (1, 1, 3) and tuple(out.data[0, 0]) == (9, 8, 7)


def test_resize_rounding():
    assert dg.resize(PixelBuffer.constant(100, 100), 0.4).shape == (40, 40, 3)
    assert dg.resize(PixelBuffer.constant(10, 6), 2.5).shape == (15, 25, 3)


def test_resize_degenerate():
    with pytest.raises(DegenerateOutput):
        dg.resize(PixelBuffer.constant(2, 2), 0.1)


@pytest.mark.parametrize("scale", [0.0, -1.0, 4.5])
def test_resize_scale_range(scale):
    with pytest.raises(InvalidParameter):
        dg.resize(PixelBuffer.constant(8, 8), scale)


def test_double_resize_rejects_upscale():
    with pytest.raises(InvalidParameter):
        dg.double_resize(PixelBuffer.constant(8, 8), 1.5)


def test_double_resize_dims_333x217(rng):
    assert dg.double_resize(random_image(rng, 333, 217), 0.4).shape == (217, 333, 3)


@pytest.mark.parametrize("kernel", list(dg.Kernel))
@pytest.mark.parametrize("scale", [0.3, 0.4, 0.77])
def test_double_resize_constant(kernel, scale):
    img = PixelBuffer.constant(41, 29, (17, 128, 250))
    out = dg.double_resize(img, scale, kernel)
    assert np.abs(out.as_float() - img.as_float()).max() <= 1


# --- blur and noise ------------------------------------------------------------


def naive_blur(img, sigma):
    """Direct 2D convolution with a truncated kernel and mirrored borders."""
    r = int(np.ceil(3 * sigma))
    x = np.arange(-r, r + 1)
    k1 = np.exp(-0.5 * (x / sigma) ** 2)
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    src = np.pad(img.as_float(), ((r, r), (r, r), (0, 0)), mode="symmetric")
    h, w = img.height, img.width
    out = np.zeros((h, w, 3))
    for dy in range(2 * r + 1):
        for dx in range(2 * r + 1):
            out += k2[dy, dx] * src[dy : dy + h, dx : dx + w]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


@pytest.mark.parametrize("sigma", [0.5, 1.3, 2.0])
def test_blur_matches_direct_convolution(sigma, rng):
    img = random_image(rng, 23, 17)
    ours = dg.gaussian_blur(img, sigma).data.astype(int)
    assert np.abs(ours - naive_blur(img, sigma).astype(int)).max() <= 1


def test_blur_kernel_radius():
    assert len(dg.gaussian_kernel(1.0)) == 7
    assert len(dg.gaussian_kernel(0.8)) == 7  # ceil(2.4) = 3
    assert len(dg.gaussian_kernel(2.0)) == 13
    assert dg.gaussian_kernel(1.7).sum() == pytest.approx(1.0, abs=1e-15)


def test_blur_constant_is_exact():
    img = PixelBuffer.constant(30, 20, (3, 99, 254))
    assert dg.gaussian_blur(img, 2.0) == img


def test_noise_same_seed_identical(photo):
    assert dg.gaussian_noise(photo, 5.0, 42) == dg.gaussian_noise(photo, 5.0, 42)
    assert dg.gaussian_noise(photo, 5.0, 42) != dg.gaussian_noise(photo, 5.0, 43)


def test_noise_matches_formula(photo):
    rng = np.random.default_rng(9)
    expect = np.clip(np.rint(photo.as_float() + 3.0 * rng.standard_normal(photo.shape)), 0, 255)
    assert np.array_equal(dg.gaussian_noise(photo, 3.0, 9).data, expect.astype(np.uint8))


@pytest.mark.parametrize("sigma", [2.0, 8.0])
def test_noise_mean_law_of_large_numbers(sigma):
    img = PixelBuffer.constant(256, 256, (128, 128, 128))
    mean = dg.gaussian_noise(img, sigma, 7).as_float().mean()
    assert abs(mean - 128) <= 3 * sigma / 256


def test_noise_clamps():
    out = dg.gaussian_noise(PixelBuffer.constant(32, 32, (0, 255, 0)), 50.0, 1)
    assert out.data.min() >= 0 and out.data.max() <= 255


@pytest.mark.parametrize("sigma", [0.0, -1.0, float("inf"), float("nan")])
def test_sigma_validation(sigma):
    with pytest.raises(InvalidParameter):
        dg.gaussian_blur(PixelBuffer.constant(8, 8), sigma)


# --- specs and sampling --------------------------------------------------------


def test_empty_spec_is_identity(photo):
    assert dg.apply_spec(dg.DegradationSpec(seed=0), photo) is photo


def test_resize1_jpeg100_constant():
    img = PixelBuffer.constant(32, 32, (50, 60, 70))
    spec = dg.DegradationSpec(seed=1, ops=(dg.Resize(1.0), dg.Jpeg(100)))
    assert np.abs(spec.apply(img).as_float() - img.as_float()).max() <= 1


def test_spec_replay_bit_identical(photo):
    spec = dg.sample_heavy_pipeline(123)
    assert spec.apply(photo).digest() == spec.apply(photo).digest()


def test_spec_json_roundtrip_and_canonical():
    spec = dg.sample_heavy_pipeline(0)
    text = spec.to_json()
    assert text == (
        '{"seed":0,"ops":[{"kind":"double_resize","scale":0.3066110542114116,"kernel":"bilinear"},'
        '{"kind":"gaussian_noise","sigma":6.879621435201635,"seed":8418684267946577447},'
        '{"kind":"gaussian_blur","sigma":1.5279629309206157},{"kind":"jpeg","quality":74}]}'
    )
    back = dg.DegradationSpec.from_dict(json.loads(text))
    assert back == spec and back.to_json() == text


def test_spec_length_cap():
    with pytest.raises(InvalidParameter):
        dg.DegradationSpec(seed=0, ops=(dg.Jpeg(50),) * 9)


@pytest.mark.parametrize("bad", [{"kind": "sharpen"}, {"kind": "jpeg", "q": 3}])
def test_op_from_dict_errors(bad):
    with pytest.raises(ParseError):
        dg.op_from_dict(bad)


def test_all_op_kinds_roundtrip():
    ops = [dg.Jpeg(40), dg.DoubleJpeg(41), dg.Resize(0.5, "bicubic"), dg.DoubleResize(0.6, "nearest"),
           dg.GaussianBlur(1.1), dg.GaussianNoise(3.0, 77)]
    for op in ops:
        assert dg.op_from_dict(json.loads(json.dumps(dg.op_to_dict(op)))) == op


def test_sampler_determinism_and_bounds():
    assert dg.sample_heavy_pipeline(77) == dg.sample_heavy_pipeline(77)
    for seed in range(300):
        spec = dg.sample_heavy_pipeline(seed)
        assert 2 <= len(spec.ops) <= 4
        kinds = [op.kind for op in spec.ops]
        assert len(set(kinds)) == len(kinds)  # without replacement
        for op in spec.ops:
            if op.kind in ("jpeg", "double_jpeg"):
                assert 30 <= op.quality <= 75
            elif op.kind == "double_resize":
                assert 0.3 <= op.scale <= 0.7 and op.kernel is dg.Kernel.BILINEAR
            elif op.kind == "gaussian_blur":
                assert 0.8 <= op.sigma <= 2.0
            else:
                assert 2.0 <= op.sigma <= 8.0


def test_every_pool_kind_appears_in_10000_specs():
    from collections import Counter

    counts = Counter(op.kind for s in range(10_000) for op in dg.sample_heavy_pipeline(s).ops)
    assert set(counts) == {r.kind for r in dg.DEFAULT_HEAVY_PROFILE.pool}
    # frozen: each kind drawn about 6,000 times
    assert counts == {"gaussian_noise": 6023, "gaussian_blur": 6023, "double_resize": 6018, "jpeg": 6008, "double_jpeg": 6006}


def test_empty_pool():
    with pytest.raises(EmptyPool):
        dg.sample_heavy_pipeline(0, dg.PipelineProfile(pool=()))


def test_profile_dict_roundtrip():
    d = dg.DEFAULT_HEAVY_PROFILE.to_dict()
    assert dg.PipelineProfile.from_dict(json.loads(json.dumps(d))) == dg.DEFAULT_HEAVY_PROFILE
    assert d["length"] == [2, 4]


def test_fixed_parameter_in_pool():
    prof = dg.PipelineProfile(pool=(dg.OpRange("jpeg", {"quality": 55}),), min_length=1, max_length=1)
    assert dg.sample_heavy_pipeline(3, prof).ops == (dg.Jpeg(55),)


def _energy(img):
    x = img.as_float() / 255.0
    return ((np.diff(x, axis=1) ** 2).mean() + (np.diff(x, axis=0) ** 2).mean()) / 2


def test_harshest_ops_perturb_residual_energy(photo):
    # frozen relative changes on the committed photo: jpeg -15.6%, double_jpeg -15.6%,
    # double_resize -81.7%, blur -83.6%, noise +29.6%
    e0 = _energy(photo)
    for r in dg.DEFAULT_HEAVY_PROFILE.pool:
        change = abs(_energy(r.harshest().apply(photo)) - e0) / e0
        assert change > 0.05, r.kind


@given(st.integers(8, 64), st.integers(8, 64), st.integers(0, 2**32))
@settings(max_examples=25, deadline=None)
def test_dimension_contracts_property(w, h, seed):
    img = random_image(np.random.default_rng(seed), w, h)
    for op in (dg.Jpeg(50), dg.DoubleJpeg(50), dg.DoubleResize(0.5), dg.GaussianBlur(1.0), dg.GaussianNoise(2.0, seed)):
        assert op.apply(img).shape == img.shape
