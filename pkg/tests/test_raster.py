import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from meaningful_boundaries.raster import (DegenerateHistogramError, GradientField, ImageReadError,
                                          NotGrayscaleError, PGMHeaderError, RasterImage,
                                          TailHistogram, build_contrast_histogram,
                                          compute_gradient_field, load_image,
                                          quantization_levels, save_pgm)


def write(path, data: bytes):
    path.write_bytes(data)
    return path


# ---------------------------------------------------------------- images
def test_raster_image_validation():
    with pytest.raises(ValueError):
        RasterImage(np.zeros(5))
    with pytest.raises(ValueError):
        RasterImage(np.zeros((1, 5)))
    with pytest.raises(ValueError):
        RasterImage(np.array([[0, 1], [np.nan, 2]]))
    with pytest.raises(ValueError):
        RasterImage(np.zeros((3, 3)), quantization_step=0)
    img = RasterImage(np.arange(6).reshape(2, 3))
    assert (img.width, img.height) == (3, 2)
    assert not img.values.flags.writeable


def test_constant_image_has_no_levels(tmp_path):
    p = write(tmp_path / "c.pgm", b"P5\n2 2\n255\n" + bytes([0, 0, 0, 0]))
    assert load_image(p).levels.size == 0


def test_two_valued_image_levels(tmp_path):
    p = write(tmp_path / "s.pgm", b"P5\n2 2\n255\n" + bytes([0, 0, 255, 255]))
    lv = load_image(p).levels
    assert lv.size == 255
    assert lv[0] == 0.5 and lv[-1] == 254.5


def test_ramp_levels_match_enumeration():
    u = np.tile(np.arange(16) * 16.0, (16, 1))
    expected = []
    j = -10
    while j * 1 + 0.5 < 400:
        lam = j + 0.5
        if u.min() < lam < u.max():
            expected.append(lam)
        j += 1
    np.testing.assert_array_equal(quantization_levels(u, 1.0), expected)


def test_levels_with_step():
    lv = quantization_levels(np.array([[10.0, 20.0]]), 4.0)
    assert list(lv) == [14.0, 18.0]  # 2 + 4j strictly inside (10, 20)


def test_quantized_values():
    img = RasterImage(np.array([[0.0, 1.4], [1.6, 3.0]]), 2.0)
    np.testing.assert_array_equal(img.quantized(), [[0, 2], [2, 4]])


# ---------------------------------------------------------------- PGM
def test_pgm_roundtrip_binary_and_ascii(tmp_path, rng):
    vals = rng.integers(0, 256, (5, 7))
    for binary in (True, False):
        p = tmp_path / f"r{binary}.pgm"
        save_pgm(p, vals, binary=binary)
        np.testing.assert_array_equal(load_image(p).values, vals)


def test_pgm_header_comments(tmp_path):
    p = write(tmp_path / "c.pgm", b"P2\n# a comment\n3 2 # width height\n255\n1 2 3\n4 5 6\n")
    np.testing.assert_array_equal(load_image(p).values, [[1, 2, 3], [4, 5, 6]])


@pytest.mark.parametrize("payload, error", [
    (b"P6\n1 1\n255\n\x00\x00\x00", NotGrayscaleError),
    (b"P3\n1 1\n255\n0 0 0\n", NotGrayscaleError),
    (b"P4\n8 1\n\x00", NotGrayscaleError),
    (b"P5\n2 2\n65535\n" + bytes(8), NotGrayscaleError),
    (b"P5\n2 2\n255\n\x00", PGMHeaderError),
    (b"P2\n2 2\n255\n1 2 3\n", PGMHeaderError),
    (b"P5\n2 x\n255\n\x00\x00", PGMHeaderError),
    (b"JUNK", PGMHeaderError),
    (b"P2\n2 1\n10\n5 11\n", PGMHeaderError),
])
def test_pgm_errors(tmp_path, payload, error):
    p = write(tmp_path / "bad.pgm", payload)
    with pytest.raises(error):
        load_image(p)


def test_missing_file(tmp_path):
    with pytest.raises(ImageReadError):
        load_image(tmp_path / "nope.pgm")


# ---------------------------------------------------------------- gradient
def test_gradient_constant_and_ramp():
    assert compute_gradient_field(RasterImage(np.full((4, 5), 7.0))).max_magnitude == 0
    ramp = RasterImage(np.tile(np.arange(6.0), (4, 1)))
    f = compute_gradient_field(ramp)
    assert f.magnitudes.shape == (3, 5)
    np.testing.assert_array_equal(f.magnitudes, 1.0)


def test_gradient_of_plane_is_exact():
    yy, xx = np.mgrid[0:6, 0:7]
    f = compute_gradient_field(RasterImage(3.0 * xx - 4.0 * yy + 2.0))
    np.testing.assert_array_equal(f.magnitudes, 5.0)


def test_gradient_hand_computed_3x3():
    u = np.array([[1, 5, 2],
                  [0, 3, 7],
                  [4, 4, 9]], dtype=float)
    # cell (i=0, j=0): corners u(0,0)=1, u(1,0)=5, u(0,1)=0, u(1,1)=3
    #   Dx = (5 + 3 - 1 - 0)/2 = 3.5, Dy = (0 + 3 - 1 - 5)/2 = -1.5
    # cell (1,0): 5, 2, 3, 7 -> Dx = (2+7-5-3)/2 = 0.5, Dy = (3+7-5-2)/2 = 1.5
    # cell (0,1): 0, 3, 4, 4 -> Dx = (3+4-0-4)/2 = 1.5, Dy = (4+4-0-3)/2 = 2.5
    # cell (1,1): 3, 7, 4, 9 -> Dx = (7+9-3-4)/2 = 4.5, Dy = (4+9-3-7)/2 = 1.5
    expected = np.sqrt([[3.5 ** 2 + 1.5 ** 2, 0.5 ** 2 + 1.5 ** 2],
                        [1.5 ** 2 + 2.5 ** 2, 4.5 ** 2 + 1.5 ** 2]])
    np.testing.assert_allclose(compute_gradient_field(RasterImage(u)).magnitudes, expected, rtol=0, atol=1e-15)


def test_at_cells_pairs_take_smaller_valid_value():
    f = GradientField(np.array([[1.0, 4.0], [2.0, 3.0]]))
    np.testing.assert_array_equal(f.at_cells(np.array([[1, 2], [3, -1], [0, 3]])), [2.0, 3.0, 1.0])


# ---------------------------------------------------------------- H_c
def test_contrast_histogram_counting_example():
    h = build_contrast_histogram(GradientField(np.array([[0.0, 1.0], [2.0, 2.0]])))
    assert h(0.0) == 1.0
    assert h(1.0) == pytest.approx(2 / 3, abs=0)
    assert h(2.0) == 0.0


def test_contrast_histogram_endpoints(rng):
    f = GradientField(rng.gamma(2.0, 3.0, (20, 30)))
    h = build_contrast_histogram(f)
    assert h(f.magnitudes.min()) == 1.0
    assert h(f.max_magnitude) == 0.0
    assert h(f.max_magnitude + 1) == 0.0
    assert h(f.magnitudes.min() - 1) == 1.0
    assert h.num_bins == 1024


def test_contrast_histogram_degenerate():
    with pytest.raises(DegenerateHistogramError):
        build_contrast_histogram(GradientField(np.full((3, 3), 2.0)))


def test_affine_contrast_histogram(rng):
    u = rng.integers(0, 256, (24, 24)).astype(float)
    h1 = build_contrast_histogram(compute_gradient_field(RasterImage(u)))
    h2 = build_contrast_histogram(compute_gradient_field(RasterImage(3 * u + 7)))
    np.testing.assert_allclose(h2.bin_edges, 3 * h1.bin_edges, rtol=1e-12)
    np.testing.assert_array_equal(h2.tail_values, h1.tail_values)
    centres = 0.5 * (h1.bin_edges[1:] + h1.bin_edges[:-1])
    np.testing.assert_array_equal(h2(3 * centres), h1(centres))


def test_tail_histogram_rejects_bad_input():
    with pytest.raises(ValueError):
        TailHistogram(np.array([0, 1, 1]), np.array([1, 0.5, 0]))
    with pytest.raises(ValueError):
        TailHistogram(np.array([0, 1, 2]), np.array([1, 0.5, 0.7]))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(2, 300), elements=st.floats(0, 1e3).map(lambda v: round(v, 3))),
       st.integers(2, 64), st.floats(-10, 1100))
def test_tail_histogram_monotone_bounded(samples, bins, probe):
    if samples.max() - samples.min() < 1e-3:
        return
    h = TailHistogram.from_samples(samples, bins, samples.min(), samples.max(), above_min_only=True)
    assert np.all(np.diff(h.tail_values) <= 0)
    assert 0.0 <= h(probe) <= 1.0
    assert h(probe) >= h(probe + 1.0)
    # the staircase never understates the exact tail
    exact = np.count_nonzero(samples > probe) / np.count_nonzero(samples > samples.min())
    assert h(probe) >= min(exact, 1.0) - 1e-12 or probe > samples.max()
