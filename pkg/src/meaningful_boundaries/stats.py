"""Binomial tails, their incomplete-beta interpolation and the regularity model.

All probabilities leave this module as log10 values; ``-inf`` stands for an
exact zero.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .raster import RasterImage, TailHistogram
from .topo_map import extract_level_lines

__all__ = [
    "InsufficientStatisticsError",
    "RegularityModel",
    "binomial_tail_exact",
    "binomial_tail_interpolated",
    "log10_binomial_tail",
    "gaussian_noise_image",
    "regularity_samples",
    "estimate_regularity_model",
    "load_regularity_model",
    "save_regularity_model",
    "default_cache_dir",
]

logger = logging.getLogger(__name__)

CACHE_ENV = "MEANINGFUL_BOUNDARIES_CACHE"
CACHE_VERSION = "v1"
MIN_REGULARITY_SAMPLES = 10_000

DEFAULT_S = 5.0
DEFAULT_NOISE_SIZE = 512
DEFAULT_SIGMA = 50.0
DEFAULT_SEED = 42
DEFAULT_REGULARITY_BINS = 1000

_LN10 = math.log(10.0)


class InsufficientStatisticsError(RuntimeError):
    """Too few regularity samples to estimate H_s."""


# ----------------------------------------------------------------------
# Binomial tails
# ----------------------------------------------------------------------
def _log_comb(n: int, k: int) -> float:
    if n <= 5000:
        return math.log(math.comb(n, k))
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def binomial_tail_exact(N: int, k: int, p: float) -> float:
    """log10 of ``sum_{j>=k} C(N, j) p^j (1-p)^(N-j)``.

    Terms are accumulated in the log domain with a running maximum, starting
    from an exact binomial coefficient.
    """
    if int(N) != N or int(k) != k:
        raise ValueError("N and k must be integers")
    N, k = int(N), int(k)
    if not 0 <= k <= N:
        raise ValueError(f"need 0 <= k <= N, got k={k}, N={N}")
    if N > 10**6:
        raise ValueError("N above 10^6 is not supported")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if k == 0 or p == 1.0:
        return 0.0
    if p == 0.0:
        return -math.inf
    lp = math.log(p)
    lq = math.log1p(-p)
    mode = (N + 1) * p
    lt = _log_comb(N, k) + k * lp + (N - k) * lq
    top, acc = lt, 1.0
    for j in range(k, N):
        lt += math.log(N - j) - math.log(j + 1) + lp - lq
        if lt > top:
            acc = acc * math.exp(top - lt) + 1.0
            top = lt
        else:
            acc += math.exp(lt - top)
        if j + 1 > mode and lt < top - 45.0:
            break
    return min(0.0, (top + math.log(acc)) / _LN10)


def binomial_tail_interpolated(n: float, k: float, p: float) -> float:
    """log10 of ``I(p; k, n - k + 1)``, the continuous binomial tail.

    ``k = 0`` gives log10(1) = 0.  At integer arguments with ``k >= 1`` it
    agrees with :func:`binomial_tail_exact`.
    """
    n, k, p = float(n), float(k), float(p)
    if not (math.isfinite(n) and math.isfinite(k) and math.isfinite(p)):
        raise ValueError("arguments must be finite")
    if not 0.0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return float(_kernels.log10_binomial_tail_interp(n, k, p))


def log10_binomial_tail(n, k, p) -> np.ndarray:
    """Vectorised :func:`binomial_tail_interpolated` without argument checks."""
    n, k, p = np.broadcast_arrays(np.asarray(n, dtype=np.float64),
                                  np.asarray(k, dtype=np.float64),
                                  np.asarray(p, dtype=np.float64))
    shape = n.shape
    out = _kernels.log10_binomial_tail_interp_many(
        np.array(n).ravel(), np.array(k).ravel(), np.array(p).ravel())
    return out.reshape(shape)


# ----------------------------------------------------------------------
# Regularity model H_s
# ----------------------------------------------------------------------
def gaussian_noise_image(size: int, sigma: float, seed: int, quantization_step: float = 1.0) -> RasterImage:
    """8-bit Gaussian white noise, mean 128, clamped to [0, 255]."""
    rng = np.random.default_rng(seed)
    values = np.clip(np.rint(rng.normal(128.0, sigma, (size, size))), 0, 255)
    return RasterImage(values, quantization_step)


def regularity_samples(lines, s: float) -> np.ndarray:
    """R_s at every sampled point, NaN where the line is not longer than 2s."""
    if len(lines) == 0:
        return np.empty(0)
    return _kernels.regularity(
        np.ascontiguousarray(lines.points[:, 0]), np.ascontiguousarray(lines.points[:, 1]),
        lines.offsets, lines.sample_index, lines.sample_line, float(s))


@dataclass(frozen=True)
class RegularityModel:
    """Tail distribution H_s of the regularity on white-noise level lines."""

    s: float
    histogram: TailHistogram
    noise_size: int
    sigma: float
    seed: int
    sample_count: int | None = None

    @property
    def num_bins(self) -> int:
        return self.histogram.num_bins

    def __call__(self, r):
        return self.histogram(r)

    def header(self) -> str:
        return _header(self.s, self.noise_size, self.sigma, self.seed, self.num_bins)


def _fmt(x: float) -> str:
    return repr(float(x)) if int(x) != x else str(int(x))


def _header(s, size, sigma, seed, bins) -> str:
    return (f"HS {CACHE_VERSION} s={_fmt(s)} size={int(size)} sigma={_fmt(sigma)} "
            f"seed={int(seed)} bins={int(bins)}")


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "meaningful_boundaries"


def cache_path(s, noise_size, sigma, seed, num_bins, cache_dir=None) -> Path:
    d = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    name = (f"hs_{CACHE_VERSION}_s{_fmt(s)}_n{int(noise_size)}_sigma{_fmt(sigma)}"
            f"_seed{int(seed)}_b{int(num_bins)}.txt")
    return d / name


def save_regularity_model(model: RegularityModel, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = model.header()
    if model.sample_count is not None:
        head += f" samples={int(model.sample_count)}"
    lines = [head]
    lines += [f"{e!r} {t!r}" for e, t in zip(model.histogram.bin_edges.tolist(),
                                              model.histogram.tail_values.tolist())]
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def load_regularity_model(path) -> RegularityModel:
    """Read a cached H_s file; raises ``ValueError`` on malformed content."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith(f"HS {CACHE_VERSION} "):
        raise ValueError(f"{path}: not an H_s {CACHE_VERSION} cache file")
    fields = dict(tok.split("=", 1) for tok in text[0].split()[2:])
    try:
        s = float(fields["s"])
        size = int(fields["size"])
        sigma = float(fields["sigma"])
        seed = int(fields["seed"])
        bins = int(fields["bins"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: bad header {text[0]!r}") from exc
    pairs = np.array([[float(v) for v in row.split()] for row in text[1:] if row.strip()])
    if pairs.shape != (bins + 1, 2):
        raise ValueError(f"{path}: expected {bins + 1} rows, found {pairs.shape[0]}")
    count = int(fields["samples"]) if "samples" in fields else None
    hist = TailHistogram(pairs[:, 0], pairs[:, 1], count or 0)
    return RegularityModel(s, hist, size, sigma, seed, count)


def estimate_regularity_model(s: float = DEFAULT_S, noise_size: int = DEFAULT_NOISE_SIZE,
                              sigma: float = DEFAULT_SIGMA, seed: int = DEFAULT_SEED,
                              num_bins: int = DEFAULT_REGULARITY_BINS, *,
                              cache_dir=None, use_cache: bool = True) -> RegularityModel:
    """Learn H_s from the level lines of a Gaussian noise image.

    R_s is collected at every sampled point of every line longer than 2s and
    binned on [0, 1]; the tail at r = 1 keeps the mass of exactly straight
    windows.  Results are cached under a file keyed by all parameters.
    """
    if not s >= 1:
        raise ValueError("s must be >= 1")
    if noise_size < 64:
        raise ValueError("noise_size must be >= 64")
    path = cache_path(s, noise_size, sigma, seed, num_bins, cache_dir)
    expected = _header(s, noise_size, sigma, seed, num_bins)
    if use_cache and path.exists():
        try:
            model = load_regularity_model(path)
        except ValueError:
            logger.warning("ignoring unreadable H_s cache %s", path)
        else:
            if model.header() == expected:
                logger.info("H_s cache hit: %s", path)
                return model
            logger.warning("H_s cache %s has mismatched parameters; regenerating", path)

    image = gaussian_noise_image(noise_size, sigma, seed)
    counts = np.zeros(num_bins + 1, np.int64)
    edges = np.arange(num_bins + 1) / num_bins
    total = 0
    straight = 0
    # one level at a time keeps memory bounded on large noise images
    for lam in image.levels:
        lines = extract_level_lines(image, [lam])
        r = regularity_samples(lines, s)
        r = r[np.isfinite(r)]
        if r.size == 0:
            continue
        total += r.size
        straight += int(np.count_nonzero(r >= 1.0))
        r.sort()
        counts += r.size - np.searchsorted(r, edges, side="right")
    if total < MIN_REGULARITY_SAMPLES:
        raise InsufficientStatisticsError(
            f"only {total} regularity samples (need {MIN_REGULARITY_SAMPLES})")
    tails = counts / total
    tails[-1] = straight / total
    model = RegularityModel(float(s), TailHistogram(edges, tails, total), noise_size,
                            float(sigma), int(seed), total)
    if use_cache:
        save_regularity_model(model, path)
    return model
