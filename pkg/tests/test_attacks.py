import io

import numpy as np
import pytest
import pywt
from PIL import Image as PILImage

from grswatermark.attacks import (
    JPEG_LUMINANCE,
    AttackSpec,
    _lift_forward,
    apply_attack,
    cdf97_forward,
    cdf97_inverse,
    deadzone_dequantize,
    deadzone_quantize,
    find_step,
    first_order_entropy,
    jpeg2000_like_attack,
    jpeg_like_attack,
    quality_scale,
    quantization_table,
)
from grswatermark.errors import CalibrationError, DimensionError
from grswatermark.image_io import Image, quantize
from grswatermark.metrics import mse, uqi

Q_GRID = (10, 30, 50, 70, 90)
BPP_GRID = (0.25, 0.5, 1.0, 2.0)


def test_quality_mapping_by_hand():
    assert quality_scale(10) == 500.0
    assert quality_scale(50) == 100.0
    assert quality_scale(90) == 20.0
    assert quality_scale(100) == 0.0
    np.testing.assert_array_equal(quantization_table(50), JPEG_LUMINANCE)
    # 16 * 500 / 100 = 80; 121 * 5 = 605 -> clamped
    t10 = quantization_table(10)
    assert t10[0, 0] == 80 and t10.max() == 255
    assert np.all(quantization_table(100) == 1)
    # 11 * 20 / 100 = 2.2 -> 2; 16 * 0.2 = 3.2 -> 3
    assert quantization_table(90)[0, 1] == 2 and quantization_table(90)[0, 0] == 3
    with pytest.raises(ValueError):
        quality_scale(0)


def _pil_jpeg(img, q):
    buf = io.BytesIO()
    PILImage.fromarray(img.samples.astype(np.uint8), "L").save(buf, "JPEG", quality=q)
    return np.asarray(PILImage.open(io.BytesIO(buf.getvalue())), dtype=np.float64)


@pytest.mark.parametrize("q", [10, 50, 90])
def test_jpeg_close_to_libjpeg(fixture_images, q):
    # libjpeg uses integer DCTs, so agreement is close but not exact
    for img in fixture_images.values():
        d = np.abs(_pil_jpeg(img, q) - jpeg_like_attack(img, q).samples)
        assert d.mean() < 0.5


def test_jpeg_q100_near_identity(rng):
    img = Image(rng.uniform(0, 255, size=(32, 40)))
    out = jpeg_like_attack(img, 100)
    assert np.max(np.abs(out.samples - quantize(img).samples)) <= 1


def test_jpeg_constant_image():
    img = Image(np.full((16, 16), 77.0))
    for q in (50, 70, 95, 100):
        assert np.max(np.abs(jpeg_like_attack(img, q).samples - 77.0)) <= 1


@pytest.mark.parametrize("q, expected", [(1, 64.0), (10, 78.0), (25, 76.0)])
def test_jpeg_constant_image_coarse_dc(q, expected):
    # DC = 8 (77 - 128) = -408; steps 255, 80, 32 give -510, -400, -416
    out = jpeg_like_attack(Image(np.full((16, 16), 77.0)), q)
    assert np.all(out.samples == expected)


def test_jpeg_pads_and_crops(rng):
    img = Image(rng.uniform(0, 255, size=(18, 22)))
    out = jpeg_like_attack(img, 50)
    assert out.shape == img.shape
    assert np.all(out.samples == np.round(out.samples))
    assert out.samples.min() >= 0 and out.samples.max() <= 255


def test_monotone_distortion(fixture_images):
    for img in fixture_images.values():
        jm = [mse(img, jpeg_like_attack(img, q)) for q in Q_GRID]
        assert all(a >= b for a, b in zip(jm, jm[1:]))
        bm = [mse(img, jpeg2000_like_attack(img, b)) for b in BPP_GRID]
        assert all(a >= b for a, b in zip(bm, bm[1:]))


def test_uqi_orders_attack_strength(fixture_images):
    for name in ("bandlimited_noise", "blobs"):
        img = fixture_images[name]
        assert uqi(img, jpeg_like_attack(img, 10)) < uqi(img, jpeg_like_attack(img, 90))
        assert uqi(img, jpeg2000_like_attack(img, 0.25)) < uqi(img, jpeg2000_like_attack(img, 2.0))


def test_lifting_matches_filter_bank(rng):
    # away from the borders the lifting steps equal the CDF 9/7 filter bank
    x = rng.normal(size=64)
    s, d = _lift_forward(x[:, None])
    a, b = pywt.dwt(x, "bior4.4", mode="periodization")
    np.testing.assert_allclose(s[2:-2, 0], a[2:-2], atol=1e-8)
    np.testing.assert_allclose(d[2:-2, 0], -b[2:-2], atol=1e-8)


def test_cdf97_perfect_reconstruction(rng):
    x = rng.normal(size=(64, 48))
    c = cdf97_forward(x)
    np.testing.assert_allclose(cdf97_inverse(c), x, atol=1e-9)
    # close to orthonormal: energy changes only slightly
    assert 0.8 < np.sum(c * c) / np.sum(x * x) < 1.25


def test_deadzone_quantizer():
    c = np.array([-7.9, -2.0, -0.5, 0.0, 0.9, 1.0, 5.5])
    idx = deadzone_quantize(c, 2.0)
    np.testing.assert_array_equal(idx, [-3, -1, 0, 0, 0, 0, 2])
    np.testing.assert_array_equal(deadzone_dequantize(idx, 2.0), [-7, -3, 0, 0, 0, 0, 5])


def test_entropy():
    assert first_order_entropy(np.zeros(10)) == 0.0
    assert first_order_entropy(np.arange(8)) == pytest.approx(3.0)
    assert first_order_entropy([0, 0, 1, 1]) == pytest.approx(1.0)


@pytest.mark.parametrize("bpp", BPP_GRID)
def test_rate_control_hits_target(fixture_images, bpp):
    img = fixture_images["blobs"]
    c = cdf97_forward(img.samples - 128.0)
    delta, achieved = find_step(c, bpp)
    assert abs(achieved - bpp) <= 0.02
    assert first_order_entropy(deadzone_quantize(c, delta)) == pytest.approx(achieved)


def test_high_rate_near_lossless(fixture_images):
    for img in fixture_images.values():
        assert np.max(np.abs(jpeg2000_like_attack(img, 8.0).samples - img.samples)) <= 2


def test_constant_image_rate_unreachable():
    img = Image(np.full((32, 32), 90.0))
    with pytest.raises(CalibrationError):
        jpeg2000_like_attack(img, 1.0, strict=True)
    assert np.max(np.abs(jpeg2000_like_attack(img, 1.0).samples - 90.0)) <= 1


def test_jpeg2000_preconditions():
    with pytest.raises(DimensionError):
        jpeg2000_like_attack(Image(np.zeros((16, 16))), 1.0)
    with pytest.raises(ValueError):
        jpeg2000_like_attack(Image(np.zeros((32, 32))), 0.0)


def test_deterministic(fixture_images):
    img = fixture_images["bandlimited_noise"]
    assert jpeg_like_attack(img, 30) == jpeg_like_attack(img, 30)
    assert jpeg2000_like_attack(img, 0.5) == jpeg2000_like_attack(img, 0.5)


def test_attack_noise_zero_mean(fixture_images):
    for img in fixture_images.values():
        for q in (30, 50, 70, 90):
            v = jpeg_like_attack(img, q).samples - img.samples
            assert abs(v.mean()) <= 0.5


def test_attack_spec():
    assert AttackSpec("jpeg_like", quality=10).kind == "jpeg"
    assert AttackSpec("j2k", bitrate=1).label == "jpeg2000@1bpp"
    with pytest.raises(ValueError):
        AttackSpec("jpeg", quality=0)
    with pytest.raises(ValueError):
        AttackSpec("jpeg2000", bitrate=-1)
    with pytest.raises(ValueError):
        AttackSpec("gzip")
    img = Image(np.full((8, 8), 3.3))
    assert apply_attack(img, AttackSpec()) is img
