import numpy as np
import pytest
import pywt

from grswatermark.filterbank import (
    STANDARD_NAMES,
    FilterPair,
    WaveletSpec,
    derive_highpass,
    frequency_response,
    grs_kernel,
    grs_wavelet,
    is_complementary,
    standard_wavelet,
    verify_perfect_reconstruction,
)


def brute_force_complementary(a, b):
    """Sum of aperiodic autocorrelations by explicit double loop."""
    l = len(a)
    out = {}
    for k in range(-(l - 1), l):
        s = 0
        for i in range(l):
            j = i + k
            if 0 <= j < l:
                s += a[i] * a[j] + b[i] * b[j]
        out[k] = s
    return out


def test_is_complementary_examples():
    assert is_complementary(FilterPair((1, 1), (1, -1))) == (True, 0.0)
    ok, res = is_complementary(FilterPair((1, 1), (1, 1)))
    assert not ok and res == 2.0
    assert is_complementary(FilterPair((1,), (1,)))[0]


def test_is_complementary_length_mismatch():
    with pytest.raises(ValueError):
        FilterPair((1, 1), (1,))


@pytest.mark.parametrize("level", range(1, 7))
def test_grs_kernel_complementary(level):
    pair = grs_kernel(level)
    assert len(pair) == 2**level
    assert set(pair.h00) | set(pair.h01) <= {1, -1}
    ok, res = is_complementary(pair)
    assert ok and res <= 1e-12
    acf = brute_force_complementary(pair.h00, pair.h01)
    assert acf[0] == 2 * len(pair)
    assert all(v == 0 for k, v in acf.items() if k)


def test_grs_kernel_small_levels():
    assert grs_kernel(1) == FilterPair((1, 1), (1, -1))
    assert grs_kernel(2) == FilterPair((1, 1, 1, -1), (1, 1, -1, 1))
    with pytest.raises(ValueError):
        grs_kernel(0)


def test_grs4_pair():
    spec = grs_wavelet(1)
    assert spec.name == "GRS4"
    np.testing.assert_array_equal(spec.raw_h0, [1, 1, 1, -1])
    np.testing.assert_array_equal(spec.raw_h1, [-1, -1, 1, -1])
    np.testing.assert_allclose(spec.h0, [0.5, 0.5, 0.5, -0.5])
    assert np.linalg.norm(spec.h0) == pytest.approx(1.0, abs=1e-15)
    assert spec.kind == "orthogonal"


@pytest.mark.parametrize("level", range(1, 5))
def test_grs_wavelet_properties(level):
    spec = grs_wavelet(level)
    assert set(spec.raw_h0) <= {1.0, -1.0} and set(spec.raw_h1) <= {1.0, -1.0}
    assert np.linalg.norm(spec.h0) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(spec.h1) == pytest.approx(1.0, abs=1e-12)
    assert abs(np.dot(spec.h0, spec.h1)) <= 1e-12
    np.testing.assert_array_equal(spec.g0, spec.h0[::-1])
    np.testing.assert_array_equal(spec.g1, spec.h1[::-1])
    assert verify_perfect_reconstruction(spec) <= 1e-12


def test_derive_highpass():
    np.testing.assert_array_equal(derive_highpass([1, 1, 1, -1], 3), [-1, -1, 1, -1])
    np.testing.assert_array_equal(derive_highpass([1], 0), [-1])
    with pytest.raises(ValueError):
        derive_highpass([1, 1], 3)
    h0 = standard_wavelet("daubechies4").h0
    h1 = derive_highpass(h0, 3)
    assert abs(h1.sum()) <= 1e-12
    assert abs(np.dot(h0, h1)) <= 1e-12


# Independent coefficient source: PyWavelets names these db2, db4, coif1.
PYWT_NAMES = {"daubechies4": "db2", "daubechies8": "db4", "coiflet6": "coif1"}


@pytest.mark.parametrize("name", sorted(PYWT_NAMES))
def test_regular_tables_match_pywavelets(name):
    spec = standard_wavelet(name)
    ref = pywt.Wavelet(PYWT_NAMES[name])
    # pywt stores analysis filters time-reversed relative to h[n]
    lo = np.array(ref.dec_lo[::-1])
    np.testing.assert_allclose(spec.h0, lo, atol=1e-10)
    assert spec.h0.sum() == pytest.approx(np.sqrt(2), abs=1e-10)
    assert verify_perfect_reconstruction(spec) <= 1e-10


def test_biorthogonal_6_2():
    spec = standard_wavelet("biorthogonal6.2")
    assert spec.kind == "biorthogonal"
    assert len(spec.h0) == 6 and len(spec.h1) == 2
    assert verify_perfect_reconstruction(spec) <= 1e-10
    # spline 1.3 analysis lowpass, up to time reversal
    np.testing.assert_allclose(
        np.sort(np.abs(spec.h0)), np.sort(np.abs(pywt.Wavelet("bior1.3").dec_lo)), atol=1e-10
    )


def test_standard_lookup():
    assert standard_wavelet("grs4").h0.tolist() == grs_wavelet(1).h0.tolist()
    assert standard_wavelet("GRS4").name == "grs4"
    with pytest.raises(KeyError) as info:
        standard_wavelet("haar9")
    for n in STANDARD_NAMES:
        assert n in str(info.value)


def test_degenerate_spec_fails_pr():
    s = standard_wavelet("daubechies4")
    bad = WaveletSpec("bad", s.h0, s.h0, s.g0, s.g0, s.delay, "biorthogonal")
    assert verify_perfect_reconstruction(bad) >= 1.0


@pytest.mark.parametrize("name", ["daubechies8", "grs4"])
def test_pr_residual_small(name):
    assert verify_perfect_reconstruction(standard_wavelet(name)) <= 1e-10


def test_frequency_response():
    np.testing.assert_array_equal(frequency_response([1.0], 5), np.ones(5))
    g = standard_wavelet("grs4")
    assert frequency_response(g.h0, 2)[0] == pytest.approx(1.0)
    # raw coefficients: DC sum 2
    assert frequency_response(g.raw_h0, 2)[0] == pytest.approx(2.0)
    with pytest.raises(ValueError):
        frequency_response([1.0], 1)


@pytest.mark.parametrize("name", ["grs4", "daubechies4", "daubechies8", "coiflet6"])
def test_power_complementary(name):
    s = standard_wavelet(name)
    total = frequency_response(s.h0, 257) ** 2 + frequency_response(s.h1, 257) ** 2
    np.testing.assert_allclose(total, 2.0, atol=1e-10)


def test_power_complementary_raw_grs4():
    s = standard_wavelet("grs4")
    total = frequency_response(s.raw_h0, 65) ** 2 + frequency_response(s.raw_h1, 65) ** 2
    np.testing.assert_allclose(total, 8.0, atol=1e-10)


def test_regularity_marker():
    for name in ("daubechies4", "daubechies8", "coiflet6"):
        assert frequency_response(standard_wavelet(name).h0, 2)[-1] <= 1e-10
    assert frequency_response(grs_wavelet(1).h0, 2)[-1] >= 0.1


@pytest.mark.parametrize("level", range(1, 7))
def test_grs_response_at_pi_alternates(level):
    # H0(-1) = sum(h00) - sum(h01); the doubling gives sums (2,0), (2,2), (4,0), (4,4), ...
    pair = grs_kernel(level)
    expected = abs(sum(pair.h00) - sum(pair.h01)) / np.sqrt(2 * len(pair))
    got = frequency_response(grs_wavelet(level).h0, 2)[-1]
    assert got == pytest.approx(expected, abs=1e-12)
    assert (expected > 0.1) == (level % 2 == 1)
