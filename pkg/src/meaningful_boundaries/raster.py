"""Gray-level rasters, the 2x2 gradient and tail histograms."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ImageError",
    "ImageReadError",
    "PGMHeaderError",
    "NotGrayscaleError",
    "DegenerateHistogramError",
    "RasterImage",
    "GradientField",
    "TailHistogram",
    "load_image",
    "save_pgm",
    "quantization_levels",
    "compute_gradient_field",
    "build_contrast_histogram",
]

DEFAULT_NUM_BINS = 1024


class ImageError(Exception):
    """Base class for image input problems."""


class ImageReadError(ImageError):
    """The file could not be read."""


class PGMHeaderError(ImageError):
    """The PGM header or pixel payload is malformed."""


class NotGrayscaleError(ImageError):
    """The file holds a color (or otherwise non 8-bit gray) image."""


class DegenerateHistogramError(ValueError):
    """All samples are equal, so the tail histogram is undefined."""


def quantization_levels(values: np.ndarray, step: float) -> np.ndarray:
    """Levels ``j*step + step/2`` lying strictly between min and max."""
    if not step > 0:
        raise ValueError("quantization step must be positive")
    lo = float(np.min(values))
    hi = float(np.max(values))
    j0 = math.floor((lo - step / 2) / step)
    j1 = math.ceil((hi - step / 2) / step)
    levels = np.arange(j0, j1 + 1, dtype=np.float64) * step + step / 2
    return levels[(levels > lo) & (levels < hi)]


@dataclass(frozen=True)
class RasterImage:
    """A gray-level image sampled on the pixel grid.

    ``values[y, x]`` is the gray level of the pixel centred at ``(x, y)``.
    """

    values: np.ndarray
    quantization_step: float = 1.0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {v.shape}")
        if v.shape[0] < 2 or v.shape[1] < 2:
            raise ValueError("image must be at least 2x2")
        if not np.all(np.isfinite(v)):
            raise ValueError("image values must be finite")
        if not self.quantization_step > 0:
            raise ValueError("quantization step must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "quantization_step", float(self.quantization_step))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def levels(self) -> np.ndarray:
        return quantization_levels(self.values, self.quantization_step)

    def quantized(self) -> np.ndarray:
        """Representative value of each pixel's quantization interval."""
        step = self.quantization_step
        return np.floor(self.values / step + 0.5) * step


# ----------------------------------------------------------------------
# PGM input/output
# ----------------------------------------------------------------------
def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise PGMHeaderError("truncated header")
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def load_image(path: str | os.PathLike, quantization_step: float = 1.0) -> RasterImage:
    """Read an 8-bit grayscale PGM file (binary P5 or ASCII P2)."""
    if not quantization_step > 0:
        raise ValueError("quantization step must be positive")
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageReadError(f"cannot read {path}: {exc}") from exc
    magic = data[:2]
    if magic in (b"P3", b"P6"):
        raise NotGrayscaleError(f"{path}: color PPM ({magic.decode()}) is not supported")
    if magic in (b"P1", b"P4"):
        raise NotGrayscaleError(f"{path}: bitmap PBM ({magic.decode()}) is not supported")
    if magic not in (b"P2", b"P5"):
        raise PGMHeaderError(f"{path}: not a PGM file")
    tokens, pos = _header_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise PGMHeaderError(f"{path}: non-numeric header field") from exc
    if width < 1 or height < 1:
        raise PGMHeaderError(f"{path}: bad dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise NotGrayscaleError(f"{path}: maxval {maxval} is not 8-bit")
    npix = width * height
    if magic == b"P5":
        payload = data[pos + 1:pos + 1 + npix]
        if len(payload) != npix:
            raise PGMHeaderError(f"{path}: expected {npix} bytes, found {len(payload)}")
        values = np.frombuffer(payload, dtype=np.uint8)
    else:
        body = data[pos:].split()
        if len(body) < npix:
            raise PGMHeaderError(f"{path}: expected {npix} samples, found {len(body)}")
        try:
            values = np.array([int(t) for t in body[:npix]], dtype=np.int64)
        except ValueError as exc:
            raise PGMHeaderError(f"{path}: non-numeric sample") from exc
    if values.max(initial=0) > maxval:
        raise PGMHeaderError(f"{path}: sample exceeds maxval")
    return RasterImage(values.reshape(height, width).astype(np.float64), quantization_step)


def save_pgm(path: str | os.PathLike, values: np.ndarray, binary: bool = True) -> None:
    """Write an array as an 8-bit PGM, clipping to [0, 255]."""
    arr = np.clip(np.rint(np.asarray(values, dtype=np.float64)), 0, 255).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        if binary:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(arr.tobytes())
        else:
            fh.write(f"P2\n{w} {h}\n255\n".encode("ascii"))
            for row in arr:
                fh.write((" ".join(str(int(v)) for v in row) + "\n").encode("ascii"))


# ----------------------------------------------------------------------
# Gradient and tail histograms
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class GradientField:
    """|Du| on the dual grid; ``magnitudes[j, i]`` sits at ``(i+1/2, j+1/2)``."""

    magnitudes: np.ndarray

    @property
    def max_magnitude(self) -> float:
        return float(self.magnitudes.max())

    def at_cells(self, cells: np.ndarray) -> np.ndarray:
        """|Du| at cell indices; with a second axis, the smallest valid entry per row.

        Negative indices mark missing cells and are skipped.
        """
        cells = np.asarray(cells, dtype=np.int64)
        flat = self.magnitudes.ravel()
        if cells.ndim == 1:
            return flat[cells]
        vals = np.where(cells >= 0, flat[np.maximum(cells, 0)], np.inf)
        return vals.min(axis=1)


def compute_gradient_field(image: RasterImage) -> GradientField:
    u = image.values
    a = u[:-1, :-1]
    b = u[:-1, 1:]
    c = u[1:, 1:]
    d = u[1:, :-1]
    dx = (b + c - a - d) / 2
    dy = (d + c - a - b) / 2
    mag = np.sqrt(dx * dx + dy * dy)
    mag.setflags(write=False)
    return GradientField(mag)


@dataclass(frozen=True, eq=False)
class TailHistogram:
    """Binned empirical tail ``P(X > t)`` read as a right-continuous staircase.

    ``tail_values[i]`` is the tail at ``bin_edges[i]``; a query uses the edge
    at the left of the bin that contains it.
    """

    bin_edges: np.ndarray
    tail_values: np.ndarray
    sample_count: int = 0
    _scale: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        tails = np.asarray(self.tail_values, dtype=np.float64)
        if edges.shape != tails.shape or edges.size < 3:
            raise ValueError("need matching edges and tail values, at least 2 bins")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly ascending")
        if np.any(np.diff(tails) > 0) or tails.min() < 0 or tails.max() > 1:
            raise ValueError("tail values must be non-increasing within [0, 1]")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "tail_values", tails)
        object.__setattr__(self, "_scale", (edges.size - 1) / (edges[-1] - edges[0]))

    def __eq__(self, other):
        if not isinstance(other, TailHistogram):
            return NotImplemented
        return (self.sample_count == other.sample_count
                and np.array_equal(self.bin_edges, other.bin_edges)
                and np.array_equal(self.tail_values, other.tail_values))

    __hash__ = None

    @property
    def num_bins(self) -> int:
        return self.bin_edges.size - 1

    @property
    def support_min(self) -> float:
        return float(self.bin_edges[0])

    @property
    def support_max(self) -> float:
        return float(self.bin_edges[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        idx = np.floor((t - self.bin_edges[0]) * self._scale)
        idx = np.clip(np.nan_to_num(idx, nan=0.0), -1, self.num_bins).astype(np.int64)
        out = self.tail_values[np.clip(idx, 0, self.num_bins)]
        out = np.where(idx < 0, 1.0, out)
        out = np.where(t > self.bin_edges[-1], 0.0, out)
        return out if out.ndim else float(out)

    @classmethod
    def from_samples(cls, samples, num_bins: int, lo: float, hi: float, *,
                     above_min_only: bool = False, top_atom: bool = False) -> "TailHistogram":
        """Tail of ``samples`` on ``num_bins`` uniform bins over ``[lo, hi]``.

        With ``above_min_only`` the denominator counts only samples above the
        smallest one.  With ``top_atom`` the tail at ``hi`` reports the mass
        sitting exactly at ``hi`` instead of zero.
        """
        if num_bins < 2:
            raise ValueError("num_bins must be >= 2")
        x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
        if x.size == 0:
            raise DegenerateHistogramError("no samples")
        if not hi > lo:
            raise DegenerateHistogramError("empty support")
        edges = lo + (hi - lo) * np.arange(num_bins + 1) / num_bins
        above = x.size - np.searchsorted(x, edges, side="right")
        if above_min_only:
            denom = x.size - np.searchsorted(x, x[0], side="right")
        else:
            denom = x.size
        if denom == 0:
            raise DegenerateHistogramError("all samples are equal")
        tails = above / denom
        if top_atom:
            tails[-1] = (x.size - np.searchsorted(x, hi, side="left")) / denom
        tails = np.minimum(tails, 1.0)
        return cls(edges, tails, int(x.size))


def build_contrast_histogram(field: GradientField, num_bins: int = DEFAULT_NUM_BINS) -> TailHistogram:
    """H_c: fraction of dual points whose |Du| exceeds a threshold.

    Normalised by the number of points above the minimum magnitude, so the
    tail is 1 at the minimum and 0 at the maximum.
    """
    mags = np.asarray(field.magnitudes).ravel()
    if mags.size == 0:
        raise DegenerateHistogramError("empty gradient field")
    lo = float(mags.min())
    hi = float(mags.max())
    if hi <= lo:
        raise DegenerateHistogramError("all gradient magnitudes are equal")
    return TailHistogram.from_samples(mags, num_bins, lo, hi, above_min_only=True)
