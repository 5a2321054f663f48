"""Monte-Carlo checks of the false-alarm guarantees on white noise."""
from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .estimator import run_detection
from .raster import build_contrast_histogram, compute_gradient_field
from .saliency import DetectionParams, Detector
from .stats import RegularityModel, estimate_regularity_model, gaussian_noise_image, regularity_samples
from .topo_map import extract_level_lines

__all__ = [
    "TrialReport",
    "TrialError",
    "h0_bound",
    "run_h0_trial",
    "run_h0_trials",
    "estimate_empirical_nfa_bound",
    "uniform_tail_check",
    "reports_to_json",
    "format_table",
]

MIN_TRIALS = 10


class TrialError(RuntimeError):
    """A pipeline failure inside a Monte-Carlo trial."""

    def __init__(self, seed: int, cause: Exception):
        super().__init__(f"trial with seed {seed} failed: {cause}")
        self.seed = seed
        self.cause = cause


def h0_bound(eps: float, trials: int) -> float:
    """Largest acceptable mean count: eps plus three Poisson standard errors."""
    return eps + 3.0 * math.sqrt(eps / trials)


@dataclass(frozen=True)
class TrialReport:
    detector: Detector
    eps: float
    seeds: tuple
    counts: tuple
    n_lines: tuple
    size: int
    sigma: float
    wall_time: float = field(default=0.0, compare=False)

    @property
    def trials(self) -> int:
        return len(self.counts)

    @property
    def mean(self) -> float:
        return float(np.mean(self.counts)) if self.counts else 0.0

    @property
    def bound(self) -> float:
        return h0_bound(self.eps, self.trials)

    @property
    def passed(self) -> bool:
        return self.mean <= self.bound

    def to_dict(self) -> dict:
        return {
            "detector": self.detector.value,
            "eps": self.eps,
            "size": self.size,
            "sigma": self.sigma,
            "seeds": list(self.seeds),
            "counts": list(self.counts),
            "n_lines": list(self.n_lines),
            "mean": self.mean,
            "bound": self.bound,
            "passed": self.passed,
            "wall_time": round(self.wall_time, 3),
        }


def _params(params: DetectionParams | None, eps: float | None) -> DetectionParams:
    params = params or DetectionParams()
    if eps is not None:
        params = dataclasses.replace(params, eps=float(eps))
    return params


def _needs_model(detectors) -> bool:
    return any(d.uses_regularity for d in detectors)


def _one_seed(seed, size, sigma, detectors, params, model):
    image = gaussian_noise_image(size, sigma, seed)
    lines = extract_level_lines(image)
    H_c = None
    if len(lines) and any(d.uses_contrast for d in detectors):
        H_c = build_contrast_histogram(compute_gradient_field(image))
    rho = regularity_samples(lines, params.s) if _needs_model(detectors) and len(lines) else None
    counts = {}
    for d in detectors:
        res = run_detection(image, d, params, lines=lines, H_c=H_c, model=model, rho=rho)
        counts[d] = res.n_meaningful
    return counts, len(lines)


def run_h0_trial(seed: int, size: int = 128, sigma: float = 50.0, detector="tma-mcb",
                 params: DetectionParams | None = None, *, eps: float | None = None,
                 model: RegularityModel | None = None) -> int:
    """Meaningful (unpruned) detections on one Gaussian noise image."""
    if size < 64:
        raise ValueError("size must be >= 64")
    det = Detector.parse(detector)
    params = _params(params, eps)
    if det.uses_regularity and model is None:
        model = estimate_regularity_model(s=params.s)
    try:
        counts, _ = _one_seed(seed, size, sigma, [det], params, model)
    except Exception as exc:  # noqa: BLE001 - recorded with its seed
        raise TrialError(seed, exc) from exc
    return counts[det]


def run_h0_trials(trials: int, detectors, eps: float = 1.0, size: int = 128, sigma: float = 50.0,
                  base_seed: int = 1, params: DetectionParams | None = None, *,
                  model: RegularityModel | None = None, allow_few: bool = False) -> list:
    """One :class:`TrialReport` per detector; each noise image is shared by all detectors.

    Seeds are ``base_seed + i`` for ``i < trials``.
    """
    if trials < MIN_TRIALS and not allow_few:
        raise ValueError(f"need at least {MIN_TRIALS} trials")
    if trials < 1:
        raise ValueError("need at least one trial")
    if size < 64:
        raise ValueError("size must be >= 64")
    dets = [Detector.parse(d) for d in ([detectors] if isinstance(detectors, (str, Detector))
                                        else detectors)]
    params = _params(params, eps)
    if _needs_model(dets) and model is None:
        model = estimate_regularity_model(s=params.s)
    seeds = [base_seed + i for i in range(trials)]
    counts = {d: [] for d in dets}
    n_lines = []
    elapsed = {d: 0.0 for d in dets}
    for seed in seeds:
        t0 = time.perf_counter()
        try:
            per, nl = _one_seed(seed, size, sigma, dets, params, model)
        except Exception as exc:  # noqa: BLE001 - recorded with its seed
            raise TrialError(seed, exc) from exc
        dt = (time.perf_counter() - t0) / len(dets)
        n_lines.append(nl)
        for d in dets:
            counts[d].append(per[d])
            elapsed[d] += dt
    return [TrialReport(d, params.eps, tuple(seeds), tuple(counts[d]), tuple(n_lines), size,
                        float(sigma), elapsed[d]) for d in dets]


def estimate_empirical_nfa_bound(trials: int, detector, eps: float = 1.0, size: int = 128,
                                 sigma: float = 50.0, base_seed: int = 1,
                                 params: DetectionParams | None = None, *,
                                 model: RegularityModel | None = None,
                                 allow_few: bool = False) -> TrialReport:
    """Mean detection count over independent noise images for one detector."""
    return run_h0_trials(trials, [detector], eps, size, sigma, base_seed, params,
                         model=model, allow_few=allow_few)[0]


def uniform_tail_check(M: int = 100_000, ts=(0.01, 0.1, 0.5), seed: int = 0) -> list:
    """Check ``P(H(X) < t) <= t`` for X uniform on [0, 1] and H(x) = 1 - x.

    Returns one record per threshold with the empirical frequency and the
    three-sigma bound it is compared to.
    """
    rng = np.random.default_rng(seed)
    x = rng.random(M)
    hx = 1.0 - x
    out = []
    for t in ts:
        freq = float(np.count_nonzero(hx < t)) / M
        bound = t + 3.0 * math.sqrt(t * (1 - t) / M)
        out.append({"t": float(t), "frequency": freq, "bound": bound, "passed": freq <= bound})
    return out


def reports_to_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True)


def format_table(reports) -> str:
    head = f"{'detector':<10} {'eps':>10} {'trials':>6} {'mean':>8} {'bound':>8} {'N_ll(avg)':>10}  status"
    rows = [head, "-" * len(head)]
    for r in reports:
        nl = float(np.mean(r.n_lines)) if r.n_lines else 0.0
        rows.append(f"{r.detector.value:<10} {r.eps:>10.3g} {r.trials:>6d} {r.mean:>8.3f} "
                    f"{r.bound:>8.3f} {nl:>10.0f}  {'ok' if r.passed else 'FAIL'}")
    return "\n".join(rows)
