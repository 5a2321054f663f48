"""Contrast and regularity profiles of level lines and the six NFA detectors.

Every score is a log10 number of false alarms.  ``-inf`` means the tail
probability is exactly zero and ``+inf`` marks a line the detector cannot
score (too short for the regularity scale, or without samples).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .raster import GradientField, TailHistogram
from .stats import RegularityModel, binomial_tail_interpolated, log10_binomial_tail
from .topo_map import LevelLine, LevelLines

__all__ = [
    "Detector",
    "CurveProfile",
    "Detection",
    "DetectionParams",
    "resolve_k",
    "parse_k",
    "curve_contrast_profile",
    "curve_regularity_profile",
    "curve_profile",
    "nfa_dmm_mcb",
    "nfa_tma_mcb",
    "nfa_dmm_mrb",
    "nfa_dmm_mcrb",
    "nfa_tma_mrb",
    "nfa_tma_mcrb",
    "score_lines",
    "detect_boundaries",
]

NOT_APPLICABLE = math.inf


class Detector(str, enum.Enum):
    DMM_MCB = "dmm-mcb"
    TMA_MCB = "tma-mcb"
    DMM_MRB = "dmm-mrb"
    DMM_MCRB = "dmm-mcrb"
    TMA_MRB = "tma-mrb"
    TMA_MCRB = "tma-mcrb"

    @classmethod
    def parse(cls, name) -> "Detector":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        for d in cls:
            if d.value == key:
                return d
        raise ValueError(f"unknown detector {name!r}; choose from "
                         + ", ".join(d.value for d in cls))

    @property
    def uses_contrast(self) -> bool:
        return self in (Detector.DMM_MCB, Detector.TMA_MCB, Detector.DMM_MCRB, Detector.TMA_MCRB)

    @property
    def uses_regularity(self) -> bool:
        return self in (Detector.DMM_MRB, Detector.TMA_MRB, Detector.DMM_MCRB, Detector.TMA_MCRB)

    @property
    def is_tma(self) -> bool:
        return self.value.startswith("tma")


def parse_k(value):
    """Turn ``"50%"``, ``"7"`` or ``7`` into a percentile string or an int."""
    if isinstance(value, str):
        v = value.strip()
        if v.endswith("%"):
            pct = float(v[:-1])
            if not 0 < pct <= 100:
                raise ValueError(f"percentile must lie in (0, 100], got {value!r}")
            return f"{pct:g}%"
        value = int(v)
    if isinstance(value, (bool, np.bool_)) or int(value) != value or value < 1:
        raise ValueError(f"K must be a positive integer or a percentile, got {value!r}")
    return int(value)


def resolve_k(K, n):
    """Number of smallest samples scanned by a TMA detector on a line of ``n`` samples.

    Percentiles are floor-rounded; both forms are clamped to ``[1, n]``.
    Works elementwise when ``n`` is an array.
    """
    K = parse_k(K)
    n = np.asarray(n, dtype=np.int64)
    if isinstance(K, str):
        pct = float(K[:-1])
        # small epsilon guards against 0.29999 style floor errors
        k = np.floor(n * pct / 100.0 + 1e-9).astype(np.int64)
    else:
        k = np.full(n.shape, K, np.int64)
    k = np.clip(k, 1, np.maximum(n, 1))
    return int(k) if k.ndim == 0 else k


@dataclass(frozen=True)
class DetectionParams:
    """Thresholds and scale shared by all detectors."""

    eps: float = 1.0
    K: object = "50%"
    K_c: object = "50%"
    K_s: object = "50%"
    s: float = 5.0
    literal_k: bool = False

    def __post_init__(self):
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ValueError("eps must be a finite non-negative number")
        if not self.s >= 1:
            raise ValueError("s must be >= 1")
        for name in ("K", "K_c", "K_s"):
            object.__setattr__(self, name, parse_k(getattr(self, name)))

    @property
    def log10_eps(self) -> float:
        return math.log10(self.eps) if self.eps > 0 else -math.inf


@dataclass(frozen=True)
class CurveProfile:
    """Sorted per-sample statistics of one level line."""

    line_id: int
    n: int
    l: float
    mu: np.ndarray = field(default_factory=lambda: np.empty(0))
    rho: np.ndarray = field(default_factory=lambda: np.empty(0))
    s: float | None = None

    @property
    def lsn2(self) -> float:
        return self.l / (2 * self.n)

    @property
    def lsn2s(self) -> float:
        return self.l / (2 * self.s * self.n)

    @property
    def has_regularity(self) -> bool:
        return self.rho.size > 0


@dataclass(frozen=True)
class Detection:
    line_id: int
    detector: Detector
    log10_nfa: float
    meaningful: bool
    maximal: bool = False

    def to_json(self) -> dict:
        out = {
            "line_id": int(self.line_id),
            "detector": Detector.parse(self.detector).value,
            "log10_nfa": _json_float(self.log10_nfa),
            "meaningful": bool(self.meaningful),
        }
        if self.maximal:
            out["maximal"] = True
        return out


def _json_float(x: float):
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)


# ----------------------------------------------------------------------
# Profiles
# ----------------------------------------------------------------------
def _midpoint_cells(line: LevelLine, width: int, height: int) -> np.ndarray:
    # dual cells of the chords leaving and entering each sampled point
    poly = line.polyline
    idx = np.array([int(np.flatnonzero((poly == p).all(axis=1))[0]) for p in line.sampled_points])
    out = []
    for other in (poly[(idx + 1) % len(poly)], poly[(idx - 1) % len(poly)]):
        mid = (line.sampled_points + other) / 2
        inside = ((mid[:, 0] > 0) & (mid[:, 0] < width - 1)
                  & (mid[:, 1] > 0) & (mid[:, 1] < height - 1))
        cell = np.floor(mid[:, 1]).astype(np.int64) * (width - 1) + np.floor(mid[:, 0]).astype(np.int64)
        out.append(np.where(inside, cell, -1))
    return np.column_stack(out)


def curve_contrast_profile(line: LevelLine, field: GradientField) -> CurveProfile:
    """|Du| at the nearest dual point of each sample, sorted ascending.

    A sample on a Qedgel is equally near the two cells on either side;
    the smaller magnitude of the two is used.
    """
    if line.n < 1:
        raise ValueError(f"line {line.id} has no sampled point")
    cells = line.sample_cells
    if cells is None:
        h, w = field.magnitudes.shape
        cells = _midpoint_cells(line, w + 1, h + 1)
    mu = np.sort(field.at_cells(np.asarray(cells)), kind="stable")
    return CurveProfile(line.id, line.n, line.euclidean_length, mu=mu)


def curve_regularity_profile(line: LevelLine, s: float) -> CurveProfile:
    """R_s at every sample, sorted ascending; empty when the line is not longer than 2s."""
    if not s >= 1:
        raise ValueError("s must be >= 1")
    poly = np.asarray(line.polyline, dtype=np.float64)
    if line.n < 1 or not line.euclidean_length > 2 * s:
        return CurveProfile(line.id, line.n, line.euclidean_length, s=float(s))
    idx = np.array([int(np.flatnonzero((poly == p).all(axis=1))[0]) for p in line.sampled_points],
                   dtype=np.int64)
    r = _kernels.regularity(np.ascontiguousarray(poly[:, 0]), np.ascontiguousarray(poly[:, 1]),
                            np.array([0, len(poly)], np.int64), idx,
                            np.zeros(len(idx), np.int64), float(s))
    rho = np.sort(r[np.isfinite(r)], kind="stable")
    return CurveProfile(line.id, line.n, line.euclidean_length, rho=rho, s=float(s))


def curve_profile(line: LevelLine, field: GradientField | None = None,
                  s: float | None = None) -> CurveProfile:
    """Both profiles of a line in one record."""
    mu = curve_contrast_profile(line, field).mu if field is not None else np.empty(0)
    rho = curve_regularity_profile(line, s).rho if s is not None else np.empty(0)
    return CurveProfile(line.id, line.n, line.euclidean_length, mu=mu, rho=rho, s=s)


# ----------------------------------------------------------------------
# Scalar detectors
# ----------------------------------------------------------------------
def _log10(x: float) -> float:
    return math.log10(x) if x > 0 else -math.inf


def _mul(c: float, logp: float) -> float:
    # c * log10 p with 0 * -inf read as 0
    return 0.0 if c == 0 else c * logp


def _finish(profile, detector, value, eps) -> Detection:
    log_eps = math.log10(eps) if eps > 0 else -math.inf
    return Detection(profile.line_id, detector, float(value), bool(value < log_eps))


def _require_contrast(profile: CurveProfile):
    if profile.mu.size == 0:
        raise ValueError(f"line {profile.line_id}: contrast profile missing")


def _tma_min(n_eff: float, lsn: float, n: int, tails: np.ndarray, K: int, literal_k: bool) -> float:
    best = math.inf
    for k in range(K):
        count = k * lsn if literal_k else (n - k) * lsn
        count = min(count, n_eff)
        best = min(best, binomial_tail_interpolated(n_eff, count, float(tails[k])))
    return best


def _check_k(K, n) -> int:
    K = parse_k(K)
    if isinstance(K, str):
        return resolve_k(K, n)
    if K > n:
        raise ValueError(f"K={K} exceeds the {n} samples of the line")
    return K


def nfa_dmm_mcb(profile: CurveProfile, H_c: TailHistogram, N_ll: int, *, eps: float = 1.0) -> Detection:
    """Whole-curve minimum contrast: ``N_ll * H_c(mu_0)^(l/2)``."""
    _require_contrast(profile)
    value = math.log10(N_ll) + _mul(profile.l / 2, _log10(H_c(profile.mu[0])))
    return _finish(profile, Detector.DMM_MCB, value, eps)


def nfa_tma_mcb(profile: CurveProfile, H_c: TailHistogram, N_ll: int, K=1, *,
                eps: float = 1.0, literal_k: bool = False) -> Detection:
    """Binomial tail over the K smallest contrasts."""
    _require_contrast(profile)
    K = _check_k(K, profile.n)
    tails = H_c(profile.mu[:K])
    m = _tma_min(profile.l / 2, profile.lsn2, profile.n, np.atleast_1d(tails), K, literal_k)
    return _finish(profile, Detector.TMA_MCB, math.log10(N_ll * K) + m, eps)


def _not_applicable(profile, detector) -> Detection:
    return Detection(profile.line_id, detector, NOT_APPLICABLE, False)


def nfa_dmm_mrb(profile: CurveProfile, model: RegularityModel, N_ll: int, *, eps: float = 1.0) -> Detection:
    """Whole-curve minimum regularity: ``N_ll * H_s(rho_0)^(l/2s)``."""
    if not profile.has_regularity:
        return _not_applicable(profile, Detector.DMM_MRB)
    value = math.log10(N_ll) + _mul(profile.l / (2 * model.s), _log10(model(profile.rho[0])))
    return _finish(profile, Detector.DMM_MRB, value, eps)


def nfa_dmm_mcrb(profile: CurveProfile, H_c: TailHistogram, model: RegularityModel, N_ll: int,
                 *, eps: float = 1.0) -> Detection:
    """``N_ll * max(H_c(mu_0)^l, H_s(rho_0)^(l/s))``."""
    _require_contrast(profile)
    if not profile.has_regularity:
        return _not_applicable(profile, Detector.DMM_MCRB)
    c = _mul(profile.l, _log10(H_c(profile.mu[0])))
    r = _mul(profile.l / model.s, _log10(model(profile.rho[0])))
    return _finish(profile, Detector.DMM_MCRB, math.log10(N_ll) + max(c, r), eps)


def nfa_tma_mrb(profile: CurveProfile, model: RegularityModel, N_ll: int, K_s=1, *,
                eps: float = 1.0, literal_k: bool = False) -> Detection:
    """Binomial tail over the K_s smallest regularities."""
    if not profile.has_regularity:
        return _not_applicable(profile, Detector.TMA_MRB)
    K = _check_k(K_s, profile.n)
    lsn = profile.l / (2 * model.s * profile.n)
    tails = np.atleast_1d(model(profile.rho[:K]))
    m = _tma_min(profile.l / (2 * model.s), lsn, profile.n, tails, K, literal_k)
    return _finish(profile, Detector.TMA_MRB, math.log10(N_ll * K) + m, eps)


def nfa_tma_mcrb(profile: CurveProfile, H_c: TailHistogram, model: RegularityModel, N_ll: int,
                 K_c=1, K_s=1, *, eps: float = 1.0, literal_k: bool = False) -> Detection:
    """Both binomial tails must be small: ``N_ll K_c K_s max(I_c, I_s)^2``."""
    _require_contrast(profile)
    if not profile.has_regularity:
        return _not_applicable(profile, Detector.TMA_MCRB)
    kc = _check_k(K_c, profile.n)
    ks = _check_k(K_s, profile.n)
    ic = _tma_min(profile.l / 2, profile.lsn2, profile.n,
                  np.atleast_1d(H_c(profile.mu[:kc])), kc, literal_k)
    lsn = profile.l / (2 * model.s * profile.n)
    is_ = _tma_min(profile.l / (2 * model.s), lsn, profile.n,
                   np.atleast_1d(model(profile.rho[:ks])), ks, literal_k)
    value = math.log10(N_ll * kc * ks) + 2 * max(ic, is_)
    return _finish(profile, Detector.TMA_MCRB, value, eps)


# ----------------------------------------------------------------------
# Batch scoring
# ----------------------------------------------------------------------
def _sorted_by_line(values: np.ndarray, owner: np.ndarray) -> np.ndarray:
    order = np.lexsort((values, owner))
    return values[order]


def _rank_in_line(offsets: np.ndarray, total: int) -> np.ndarray:
    counts = np.diff(offsets)
    return np.arange(total) - np.repeat(offsets[:-1], counts)


def _dmm_term(values, offsets, exponent, tail):
    # exponent * log10 tail(min value) per line, -inf on zero tails
    counts = np.diff(offsets)
    out = np.full(counts.shape[0], np.nan)
    has = counts > 0
    first = values[offsets[:-1][has]]
    p = np.atleast_1d(tail(first))
    with np.errstate(divide="ignore"):
        lp = np.log10(p)
    term = np.where(p >= 1.0, 0.0, exponent[has] * lp)
    out[has] = term
    return out


def _tma_term(values, offsets, n_eff, K, literal_k, tail):
    # min over k < K of log10 Itilde(n_eff, (n - k) n_eff / n, tail(v_k)) per line
    counts = np.diff(offsets)
    nlines = counts.shape[0]
    out = np.full(nlines, np.nan)
    rank = _rank_in_line(offsets, values.shape[0])
    line = np.repeat(np.arange(nlines), counts)
    keep = rank < K[line]
    if not keep.any():
        return out
    v = values[keep]
    r = rank[keep]
    ln = line[keep]
    n = counts[ln].astype(np.float64)
    lsn = n_eff[ln] / n
    cnt = r * lsn if literal_k else (n - r) * lsn
    cnt = np.minimum(cnt, n_eff[ln])
    terms = log10_binomial_tail(n_eff[ln], cnt, np.atleast_1d(tail(v)))
    starts = np.flatnonzero(np.r_[True, ln[1:] != ln[:-1]])
    out[ln[starts]] = np.minimum.reduceat(terms, starts)
    return out


def score_lines(lines: LevelLines, detector, *, field: GradientField | None = None,
                H_c: TailHistogram | None = None, model: RegularityModel | None = None,
                params: DetectionParams | None = None, rho: np.ndarray | None = None) -> np.ndarray:
    """log10 NFA of every line for one detector, in line order.

    ``rho`` may pass precomputed per-sample regularities (NaN on short
    lines) so several detectors share one evaluation.
    """
    detector = Detector.parse(detector)
    params = params or DetectionParams()
    nl = len(lines)
    if nl == 0:
        return np.empty(0)
    log_n = math.log10(nl)
    counts = lines.sample_counts
    offsets = lines.sample_offsets
    l = lines.lengths
    literal = params.literal_k

    mu = None
    if detector.uses_contrast:
        if field is None or H_c is None:
            raise ValueError(f"{detector.value} needs a gradient field and H_c")
        mu = _sorted_by_line(field.at_cells(lines.sample_cells), lines.sample_line)

    reg_ok = np.ones(nl, bool)
    rs = None
    if detector.uses_regularity:
        if model is None:
            raise ValueError(f"{detector.value} needs a regularity model")
        if abs(model.s - params.s) > 1e-12:
            raise ValueError(f"regularity model was learned at s={model.s}, params ask s={params.s}")
        if rho is None:
            from .stats import regularity_samples
            rho = regularity_samples(lines, model.s)
        reg_ok = l > 2 * model.s
        rho_line = np.where(np.isfinite(rho), rho, 2.0)
        rs = _sorted_by_line(rho_line, lines.sample_line)

    s = model.s if model is not None else params.s
    if detector is Detector.DMM_MCB:
        out = log_n + _dmm_term(mu, offsets, l / 2, H_c)
    elif detector is Detector.DMM_MRB:
        out = log_n + _dmm_term(rs, offsets, l / (2 * s), model)
    elif detector is Detector.DMM_MCRB:
        c = _dmm_term(mu, offsets, l, H_c)
        r = _dmm_term(rs, offsets, l / s, model)
        out = log_n + np.maximum(c, r)
    elif detector is Detector.TMA_MCB:
        K = resolve_k(params.K, counts)
        out = log_n + np.log10(K) + _tma_term(mu, offsets, l / 2, K, literal, H_c)
    elif detector is Detector.TMA_MRB:
        K = resolve_k(params.K_s, counts)
        out = log_n + np.log10(K) + _tma_term(rs, offsets, l / (2 * s), K, literal, model)
    else:
        kc = resolve_k(params.K_c, counts)
        ks = resolve_k(params.K_s, counts)
        ic = _tma_term(mu, offsets, l / 2, kc, literal, H_c)
        is_ = _tma_term(rs, offsets, l / (2 * s), ks, literal, model)
        out = log_n + np.log10(kc) + np.log10(ks) + 2 * np.maximum(ic, is_)
    out = np.where(counts > 0, out, NOT_APPLICABLE)
    if detector.uses_regularity:
        out = np.where(reg_ok, out, NOT_APPLICABLE)
    return np.where(np.isnan(out), NOT_APPLICABLE, out)


def detect_boundaries(lines: LevelLines, detector, params: DetectionParams | None = None, *,
                      field: GradientField | None = None, H_c: TailHistogram | None = None,
                      model: RegularityModel | None = None) -> list:
    """One :class:`Detection` per line, ordered by line id."""
    detector = Detector.parse(detector)
    params = params or DetectionParams()
    scores = score_lines(lines, detector, field=field, H_c=H_c, model=model, params=params)
    flags = scores < params.log10_eps
    return [Detection(i, detector, float(v), bool(f))
            for i, (v, f) in enumerate(zip(scores.tolist(), flags.tolist()))]
