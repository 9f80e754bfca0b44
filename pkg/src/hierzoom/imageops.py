"""Grayscale images, rectangular regions, and binary PGM files."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels as _k
from .errors import BoundsError, ConfigurationError, FormatError


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle in original-image pixel coordinates."""

    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigurationError(f"region extents must be >= 1, got {self.width}x{self.height}")

    @property
    def x1(self):
        return self.x0 + self.width

    @property
    def y1(self):
        return self.y0 + self.height

    @property
    def area(self):
        return self.width * self.height

    def contains(self, other):
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )

    def compose(self, inner):
        """``inner`` is relative to this region; return it in parent coordinates."""
        return Region(self.x0 + inner.x0, self.y0 + inner.y0, inner.width, inner.height)

    def as_tuple(self):
        return (self.x0, self.y0, self.width, self.height)


class Image:
    """Row-major grayscale image with pixel values in [0, 1]."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.array(pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ConfigurationError(f"image must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise ConfigurationError("image pixels must lie in [0, 1]")
        self.pixels = arr

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def shape(self):
        return self.pixels.shape

    def full_region(self):
        return Region(0, 0, self.width, self.height)

    def __eq__(self, other):
        return isinstance(other, Image) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"Image({self.height}x{self.width})"


def check_region(r, height, width):
    if r.x0 < 0 or r.y0 < 0 or r.x1 > width or r.y1 > height:
        raise BoundsError(
            f"region x0={r.x0} y0={r.y0} w={r.width} h={r.height} "
            f"outside {width}x{height} image"
        )


def crop(img, r):
    check_region(r, img.height, img.width)
    return Image(img.pixels[r.y0 : r.y1, r.x0 : r.x1])


def crop_array(arr, r):
    """Crop a raw 2-D array; used where wrapping in Image is not needed."""
    check_region(r, arr.shape[0], arr.shape[1])
    return arr[r.y0 : r.y1, r.x0 : r.x1]


def resize_array(arr, out_h, out_w):
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(f"resize target must be >= 1x1, got {out_h}x{out_w}")
    return _k.resize_bilinear(np.ascontiguousarray(arr, dtype=np.float64), int(out_h), int(out_w))


def resize_bilinear(img, out_h, out_w):
    """Bilinear resampling with half-pixel-centre alignment and edge clamping."""
    return Image(resize_array(img.pixels, out_h, out_w))


def _cuts(extent, s):
    # round half up, in exact integer arithmetic
    return [(2 * i * extent + s) // (2 * s) for i in range(s + 1)]


def grid_split(r, s):
    """Split ``r`` into ``s*s`` cells, row-major, boundaries at round(i*extent/s)."""
    if s < 1:
        raise ConfigurationError(f"grid size must be >= 1, got {s}")
    if r.width < s or r.height < s:
        raise ConfigurationError(f"region {r.width}x{r.height} smaller than {s}x{s} grid")
    xs = _cuts(r.width, s)
    ys = _cuts(r.height, s)
    return [
        Region(r.x0 + xs[j], r.y0 + ys[i], xs[j + 1] - xs[j], ys[i + 1] - ys[i])
        for i in range(s)
        for j in range(s)
    ]


# ------------------------------------------------------------------ PGM


def _header_tokens(data):
    """Parse the three numeric header fields after the P5 magic.

    Returns ``(width, height, maxval, payload_offset)``.
    """
    if data[:2] != b"P5":
        raise FormatError(f"bad magic {data[:2]!r} at byte offset 0, expected b'P5'")
    pos = 2
    values = []
    n = len(data)
    while len(values) < 3:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError(f"malformed PGM header at byte offset {start}")
        values.append(int(data[start:pos]))
    if pos >= n or not data[pos : pos + 1].isspace():
        raise FormatError(f"missing whitespace after maxval at byte offset {pos}")
    return values[0], values[1], values[2], pos + 1


def read_pgm_array(path):
    """Raw integer samples and maxval of a binary PGM file."""
    data = Path(path).read_bytes()
    width, height, maxval, offset = _header_tokens(data)
    if width < 1 or height < 1:
        raise FormatError(f"non-positive PGM dimensions {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise FormatError(f"maxval {maxval} out of range at byte offset {offset - 1}")
    itemsize = 1 if maxval <= 255 else 2
    need = width * height * itemsize
    have = len(data) - offset
    if have < need:
        raise FormatError(
            f"truncated PGM payload: expected {need} bytes from byte offset {offset}, got {have}"
        )
    dtype = np.uint8 if itemsize == 1 else np.dtype(">u2")
    samples = np.frombuffer(data, dtype=dtype, count=width * height, offset=offset)
    samples = samples.reshape(height, width).astype(np.int64)
    if samples.max(initial=0) > maxval:
        raise FormatError(f"sample exceeds maxval {maxval} in payload starting at byte offset {offset}")
    return samples, maxval


def write_pgm_array(samples, path, maxval):
    samples = np.asarray(samples)
    if samples.ndim != 2:
        raise ConfigurationError(f"PGM samples must be 2-D, got shape {samples.shape}")
    if not 1 <= maxval <= 65535:
        raise ConfigurationError(f"maxval must be in [1, 65535], got {maxval}")
    if samples.min(initial=0) < 0 or samples.max(initial=0) > maxval:
        raise ConfigurationError(f"samples must lie in [0, {maxval}]")
    height, width = samples.shape
    dtype = np.uint8 if maxval <= 255 else np.dtype(">u2")
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + samples.astype(dtype).tobytes())


def read_pgm(path):
    samples, maxval = read_pgm_array(path)
    return Image(samples / maxval)


def write_pgm(img, path, maxval=255):
    """Quantize to ``maxval`` levels (round to nearest) and write as P5."""
    write_pgm_array(np.rint(img.pixels * maxval).astype(np.int64), path, maxval)
