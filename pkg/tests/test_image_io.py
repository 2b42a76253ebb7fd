import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from grswatermark.errors import DimensionError, PGMParseError, UnsupportedFormatError
from grswatermark.image_io import Image, load, quantize, read_pgm, round_half_away, save, write_pgm


def test_read_simple():
    img = read_pgm(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    assert img.shape == (2, 2)
    np.testing.assert_array_equal(img.samples, [[0, 255], [128, 64]])


def test_comments_are_whitespace():
    plain = read_pgm(b"P5 2 2 255\n" + bytes([1, 2, 3, 4]))
    commented = read_pgm(b"P5\n# made by hand\n2 # width\n2\n# maxval next\n255\n" + bytes([1, 2, 3, 4]))
    assert plain == commented


def test_odd_dimensions_rejected():
    with pytest.raises(DimensionError):
        read_pgm(b"P5\n3 3\n255\n" + bytes(9))


def test_maxval_over_255_unsupported():
    with pytest.raises(UnsupportedFormatError):
        read_pgm(b"P5\n2 2\n65535\n" + bytes(8))


@pytest.mark.parametrize(
    "data, offset",
    [
        (b"P2\n2 2\n255\n", 0),
        (b"P5\nx 2\n255\n", 3),
        (b"P5\n2 2\n255\n\x00\x01", None),
    ],
)
def test_malformed_header_reports_offset(data, offset):
    with pytest.raises(PGMParseError) as info:
        read_pgm(data)
    if offset is not None:
        assert info.value.offset == offset


def test_write_exact_bytes():
    data = write_pgm(Image(np.array([[0.0, 255.0], [128.0, 64.0]])))
    assert data == b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64])


def test_write_clamps_and_rounds_half_away():
    data = write_pgm(Image(np.array([[-3.2, 127.5], [300.0, 0.49]])))
    assert list(data[-4:]) == [0, 128, 255, 0]


def test_round_half_away_differs_from_numpy():
    x = np.array([0.5, 1.5, 2.5, -0.5, -2.5])
    np.testing.assert_array_equal(round_half_away(x), [1, 2, 3, -1, -3])


def test_image_invariants():
    with pytest.raises(DimensionError):
        Image(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        Image(np.full((2, 2), np.nan))
    img = Image(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        img.samples[0, 0] = 1.0


def test_non_square_layout():
    # width 4, height 2: rows are stored consecutively
    img = read_pgm(b"P5\n4 2\n255\n" + bytes(range(8)))
    assert img.rows == 2 and img.cols == 4
    np.testing.assert_array_equal(img.samples[1], [4, 5, 6, 7])
    assert write_pgm(img).startswith(b"P5\n4 2\n")


def test_file_round_trip(tmp_path, fixture_images):
    img = fixture_images["blobs"]
    save(img, tmp_path / "b.pgm")
    assert load(tmp_path / "b.pgm") == img


even = st.integers(1, 8).map(lambda k: 2 * k)


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_round_trip_integer_images(data):
    r, c = data.draw(even), data.draw(even)
    a = data.draw(arrays(np.uint8, (r, c)))
    img = Image(a.astype(np.float64))
    assert read_pgm(write_pgm(img)) == img


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (4, 6), elements=st.floats(-1000, 1000)))
def test_clamp_idempotent(a):
    once = write_pgm(Image(a))
    assert write_pgm(read_pgm(once)) == once
    assert read_pgm(once) == quantize(Image(a))
