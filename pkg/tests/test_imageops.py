import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierzoom.errors import BoundsError, ConfigurationError, FormatError
from hierzoom.imageops import (
    Image,
    Region,
    crop,
    grid_split,
    read_pgm,
    read_pgm_array,
    resize_array,
    resize_bilinear,
    write_pgm,
    write_pgm_array,
)


@pytest.fixture
def img():
    return Image(np.random.default_rng(0).random((12, 10)))


# -------------------------------------------------------------------- types


def test_image_rejects_out_of_range():
    with pytest.raises(ConfigurationError):
        Image([[0.5, 1.5]])
    with pytest.raises(ConfigurationError):
        Image(np.zeros((0, 3)))


def test_region_rejects_empty():
    with pytest.raises(ConfigurationError):
        Region(0, 0, 0, 4)


# --------------------------------------------------------------------- crop


def test_full_crop_is_identity(img):
    assert crop(img, img.full_region()) == img


def test_point_crop(img):
    out = crop(img, Region(5, 3, 1, 1))
    assert out.shape == (1, 1) and out.pixels[0, 0] == img.pixels[3, 5]


def test_nested_crop_composes(img):
    a = Region(2, 3, 6, 7)
    b = Region(1, 2, 3, 4)
    assert crop(crop(img, a), b) == crop(img, a.compose(b))


def test_crop_out_of_bounds_names_coordinates(img):
    with pytest.raises(BoundsError, match="x0=8 y0=1 w=3"):
        crop(img, Region(8, 1, 3, 2))


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_compose_property(data):
    h, w = data.draw(st.integers(2, 20)), data.draw(st.integers(2, 20))
    pix = np.random.default_rng(data.draw(st.integers(0, 999))).random((h, w))
    x0, y0 = data.draw(st.integers(0, w - 1)), data.draw(st.integers(0, h - 1))
    aw, ah = data.draw(st.integers(1, w - x0)), data.draw(st.integers(1, h - y0))
    bx, by = data.draw(st.integers(0, aw - 1)), data.draw(st.integers(0, ah - 1))
    b = Region(bx, by, data.draw(st.integers(1, aw - bx)), data.draw(st.integers(1, ah - by)))
    a = Region(x0, y0, aw, ah)
    image = Image(pix)
    assert crop(crop(image, a), b) == crop(image, a.compose(b))


# ------------------------------------------------------------------- resize


@pytest.mark.parametrize("shape", [(1, 1), (3, 7), (20, 5)])
def test_resize_constant(shape):
    out = resize_bilinear(Image(np.full((4, 6), 0.7)), *shape)
    assert out.shape == shape
    assert np.max(np.abs(out.pixels - 0.7)) <= 1e-15


def test_resize_identity(img):
    out = resize_bilinear(img, img.height, img.width)
    assert np.max(np.abs(out.pixels - img.pixels)) <= 1e-12


def test_resize_hand_evaluated_upsample():
    # half-pixel centres: source coordinates -0.25, 0.25, 0.75, 1.25 clamp to 0, .25, .75, 1
    expected = np.array(
        [
            [0.0, 0.25, 0.75, 1.0],
            [0.25, 0.375, 0.625, 0.75],
            [0.75, 0.625, 0.375, 0.25],
            [1.0, 0.75, 0.25, 0.0],
        ]
    )
    out = resize_bilinear(Image([[0.0, 1.0], [1.0, 0.0]]), 4, 4)
    assert np.max(np.abs(out.pixels - expected)) <= 1e-12


def _reference_bilinear(a, oh, ow):
    ih, iw = a.shape
    out = np.empty((oh, ow))
    for i in range(oh):
        sy = min(max((i + 0.5) * ih / oh - 0.5, 0.0), ih - 1)
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, ih - 1)
        fy = sy - y0
        for j in range(ow):
            sx = min(max((j + 0.5) * iw / ow - 0.5, 0.0), iw - 1)
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, iw - 1)
            fx = sx - x0
            top = a[y0, x0] * (1 - fx) + a[y0, x1] * fx
            bot = a[y1, x0] * (1 - fx) + a[y1, x1] * fx
            out[i, j] = top * (1 - fy) + bot * fy
    return out


@pytest.mark.parametrize("src,dst", [((5, 7), (11, 3)), ((9, 9), (4, 4)), ((3, 8), (8, 3)), ((1, 4), (3, 9))])
def test_resize_matches_scalar_reference(src, dst):
    a = np.random.default_rng(1).random(src)
    assert np.max(np.abs(resize_array(a, *dst) - _reference_bilinear(a, *dst))) <= 1e-12


def test_resize_rejects_empty_target(img):
    with pytest.raises(ConfigurationError):
        resize_bilinear(img, 0, 3)


@settings(max_examples=100, deadline=None)
@given(
    st.integers(1, 12), st.integers(1, 12), st.integers(1, 20), st.integers(1, 20), st.integers(0, 10_000)
)
def test_resize_stays_within_input_range(h, w, oh, ow, seed):
    a = np.random.default_rng(seed).random((h, w))
    out = resize_array(a, oh, ow)
    assert out.min() >= a.min() and out.max() <= a.max()


# --------------------------------------------------------------- grid split


def test_grid_exact_division():
    cells = grid_split(Region(0, 0, 300, 300), 3)
    assert len(cells) == 9 and all(c.width == 100 and c.height == 100 for c in cells)


def test_grid_identity():
    r = Region(4, 5, 17, 9)
    assert grid_split(r, 1) == [r]


def test_grid_uneven_extent():
    cells = grid_split(Region(0, 0, 100, 100), 3)
    assert sorted(c.width for c in cells[:3]) == [33, 33, 34]
    assert sum(c.area for c in cells) == 10_000
    assert [(c.x0, c.width) for c in cells[:3]] == [(0, 33), (33, 34), (67, 33)]


def test_grid_row_major():
    cells = grid_split(Region(10, 20, 6, 4), 2)
    assert [(c.x0, c.y0) for c in cells] == [(10, 20), (13, 20), (10, 22), (13, 22)]


def test_grid_too_small():
    with pytest.raises(ConfigurationError):
        grid_split(Region(0, 0, 2, 5), 3)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(1, 120), st.integers(1, 120), st.integers(1, 6))
def test_grid_partition_properties(x0, y0, w, h, s):
    r = Region(x0, y0, w, h)
    if w < s or h < s:
        with pytest.raises(ConfigurationError):
            grid_split(r, s)
        return
    cells = grid_split(r, s)
    assert len(cells) == s * s
    cover = np.zeros((h, w), dtype=int)
    for c in cells:
        assert r.contains(c)
        cover[c.y0 - y0 : c.y1 - y0, c.x0 - x0 : c.x1 - x0] += 1
    assert np.all(cover == 1)
    widths = {c.width for c in cells}
    heights = {c.height for c in cells}
    assert max(widths) - min(widths) <= 1 and max(heights) - min(heights) <= 1
    # boundaries sit at round(i * extent / s), halves rounded up
    for j in range(s):
        assert cells[j].x0 - x0 == int(np.floor(j * w / s + 0.5))


# ---------------------------------------------------------------------- PGM


def test_pgm_roundtrip_16bit(tmp_path):
    image = Image(np.random.default_rng(2).random((16, 16)))
    write_pgm(image, tmp_path / "a.pgm", 65535)
    back = read_pgm(tmp_path / "a.pgm")
    assert np.max(np.abs(back.pixels - image.pixels)) <= 1 / 65535


def test_pgm_roundtrip_8bit(tmp_path):
    image = Image(np.random.default_rng(3).random((5, 9)))
    write_pgm(image, tmp_path / "a.pgm")
    assert np.max(np.abs(read_pgm(tmp_path / "a.pgm").pixels - image.pixels)) <= 0.5 / 255 + 1e-15


def test_pgm_black_payload(tmp_path):
    write_pgm(Image(np.zeros((3, 4))), tmp_path / "b.pgm")
    data = (tmp_path / "b.pgm").read_bytes()
    header = b"P5\n4 3\n255\n"
    assert data.startswith(header) and data[len(header) :] == bytes(12)


def test_pgm_decode_by_hand(tmp_path):
    payload = bytes([0, 51, 102, 255, 1, 2, 3, 4])
    (tmp_path / "c.pgm").write_bytes(b"P5 4 2 255\n" + payload)
    image = read_pgm(tmp_path / "c.pgm")
    assert image.shape == (2, 4)
    assert np.array_equal(image.pixels, np.array(list(payload)).reshape(2, 4) / 255)


def test_pgm_header_comment(tmp_path):
    (tmp_path / "d.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    assert read_pgm(tmp_path / "d.pgm").pixels.tolist() == [[0.0, 1.0]]


def test_pgm_16bit_is_big_endian(tmp_path):
    write_pgm_array(np.array([[1, 256]]), tmp_path / "e.pgm", 65535)
    assert (tmp_path / "e.pgm").read_bytes().endswith(b"\x00\x01\x01\x00")
    samples, maxval = read_pgm_array(tmp_path / "e.pgm")
    assert samples.tolist() == [[1, 256]] and maxval == 65535


@pytest.mark.parametrize(
    "blob,where",
    [
        (b"P6\n1 1\n255\n\x00", "byte offset 0"),
        (b"P5\n1 x\n255\n\x00", "byte offset 5"),
        (b"P5\n2 2\n255\n\x00\x00", "byte offset 11"),
        (b"P5\n1 1\n70000\n\x00\x00", "byte offset"),
    ],
)
def test_pgm_format_errors_carry_offset(tmp_path, blob, where):
    (tmp_path / "bad.pgm").write_bytes(blob)
    with pytest.raises(FormatError, match=where):
        read_pgm(tmp_path / "bad.pgm")


def test_pgm_sample_above_maxval(tmp_path):
    (tmp_path / "m.pgm").write_bytes(b"P5\n1 1\n4\n\x07")
    with pytest.raises(FormatError):
        read_pgm_array(tmp_path / "m.pgm")


def test_crop_resize_pipeline_deterministic(img):
    cells = grid_split(img.full_region(), 2)
    a = [resize_bilinear(crop(img, c), 8, 8).pixels for c in cells]
    b = [resize_bilinear(crop(img, c), 8, 8).pixels for c in cells]
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))
