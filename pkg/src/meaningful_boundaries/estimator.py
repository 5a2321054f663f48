"""End-to-end pipeline and a scikit-learn style estimator around it."""
from __future__ import annotations

import logging
import numbers
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .maximality import maximal_mask, section_index
from .raster import (DEFAULT_NUM_BINS, GradientField, RasterImage, TailHistogram,
                     build_contrast_histogram, compute_gradient_field)
from .saliency import Detection, DetectionParams, Detector, parse_k, score_lines
from .stats import (DEFAULT_NOISE_SIZE, DEFAULT_SEED, DEFAULT_SIGMA, RegularityModel,
                    estimate_regularity_model)
from .topo_map import (LevelLines, LevelLineTree, build_inclusion_tree, extract_level_lines,
                       find_monotone_sections)

__all__ = [
    "check_image",
    "check_detector_params",
    "DetectionResult",
    "run_detection",
    "MeaningfulBoundaries",
]

logger = logging.getLogger(__name__)


def check_image(X, quantization_step: float = 1.0) -> RasterImage:
    """Validate a gray-level image given as an array or a :class:`RasterImage`."""
    if isinstance(X, RasterImage):
        if X.quantization_step == quantization_step:
            return X
        X = X.values
    arr = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                      ensure_min_samples=2, ensure_min_features=2, input_name="image")
    return RasterImage(arr, quantization_step)


def check_detector_params(detector, eps, K, K_c, K_s, s, literal_k=False):
    """Normalise detector name and thresholds, raising ``ValueError`` on bad input."""
    det = Detector.parse(detector)
    if not isinstance(eps, numbers.Real):
        raise ValueError(f"eps must be a real number, got {eps!r}")
    params = DetectionParams(eps=float(eps), K=parse_k(K), K_c=parse_k(K_c), K_s=parse_k(K_s),
                             s=float(s), literal_k=bool(literal_k))
    return det, params


@dataclass
class DetectionResult:
    """Scores of every level line of one image for one detector."""

    image: RasterImage
    detector: Detector
    params: DetectionParams
    lines: LevelLines
    log10_nfa: np.ndarray
    gradient: GradientField | None = None
    contrast_histogram: TailHistogram | None = None
    regularity_model: RegularityModel | None = None
    _tree: LevelLineTree | None = field(default=None, repr=False)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def meaningful(self) -> np.ndarray:
        return self.log10_nfa < self.params.log10_eps

    @property
    def n_meaningful(self) -> int:
        return int(np.count_nonzero(self.meaningful))

    @property
    def tree(self) -> LevelLineTree:
        if self._tree is None:
            self._tree = build_inclusion_tree(self.lines)
        return self._tree

    @cached_property
    def sections(self) -> list:
        return find_monotone_sections(self.tree)

    @cached_property
    def maximal(self) -> np.ndarray:
        """Mask of meaningful lines kept by maximality pruning."""
        if self.n_lines == 0:
            return np.zeros(0, bool)
        sec = section_index(self.n_lines, self.sections)
        return maximal_mask(self.log10_nfa, self.meaningful, sec)

    def detections(self) -> list:
        flags = self.meaningful.tolist()
        return [Detection(i, self.detector, v, f)
                for i, (v, f) in enumerate(zip(self.log10_nfa.tolist(), flags))]

    def maximal_detections(self) -> list:
        ids = np.flatnonzero(self.maximal)
        return [Detection(int(i), self.detector, float(self.log10_nfa[i]), True, maximal=True)
                for i in ids]


def run_detection(image: RasterImage, detector, params: DetectionParams | None = None, *,
                  lines: LevelLines | None = None, H_c: TailHistogram | None = None,
                  model: RegularityModel | None = None, num_bins: int = DEFAULT_NUM_BINS,
                  rho: np.ndarray | None = None) -> DetectionResult:
    """Extract, learn H_c from the image when not given, and score every line."""
    detector = Detector.parse(detector)
    params = params or DetectionParams()
    if lines is None:
        lines = extract_level_lines(image)
    field_ = compute_gradient_field(image) if detector.uses_contrast else None
    if len(lines) == 0:
        return DetectionResult(image, detector, params, lines, np.empty(0), field_, H_c, model)
    if detector.uses_contrast and H_c is None:
        H_c = build_contrast_histogram(field_, num_bins)
    if detector.uses_regularity and model is None:
        model = estimate_regularity_model(s=params.s)
    scores = score_lines(lines, detector, field=field_, H_c=H_c, model=model,
                         params=params, rho=rho)
    return DetectionResult(image, detector, params, lines, scores, field_, H_c, model)


class MeaningfulBoundaries(BaseEstimator):
    """Meaningful level-line boundaries of a gray-level image.

    ``fit`` learns the contrast tail H_c of an image (and loads or learns the
    regularity tail H_s when the detector needs it).  ``transform`` returns
    the log10 NFA of every level line of an image scored against those
    statistics and ``predict`` the boolean detection mask, restricted to
    maximal lines when ``maximal`` is set.

    Parameters
    ----------
    detector : str
        One of ``dmm-mcb``, ``tma-mcb``, ``dmm-mrb``, ``dmm-mcrb``,
        ``tma-mrb``, ``tma-mcrb``.
    eps : float
        Detection threshold on the number of false alarms.
    K, K_c, K_s : int or str
        Number of smallest samples scanned by the TMA detectors, either an
        integer or a percentile such as ``"50%"``.
    s : float
        Arc-length scale of the regularity, in pixels.
    quantization_step : float
        Spacing of the extracted levels.
    num_bins : int
        Bins of the contrast histogram.
    maximal : bool
        Keep one line per maximal monotone section in ``predict``.
    literal_k : bool
        Pass ``k * l/2n`` instead of ``(n-k) * l/2n`` to the binomial tail.
    regularity_model : RegularityModel or None
        H_s to use; learned from Gaussian noise (and cached) when None.
    noise_size : int
        Side of the noise image used when H_s must be learned.
    """

    def __init__(self, detector="tma-mcb", eps=1.0, K="50%", K_c="50%", K_s="50%", s=5.0,
                 quantization_step=1.0, num_bins=DEFAULT_NUM_BINS, maximal=True,
                 literal_k=False, regularity_model=None, noise_size=DEFAULT_NOISE_SIZE):
        self.detector = detector
        self.eps = eps
        self.K = K
        self.K_c = K_c
        self.K_s = K_s
        self.s = s
        self.quantization_step = quantization_step
        self.num_bins = num_bins
        self.maximal = maximal
        self.literal_k = literal_k
        self.regularity_model = regularity_model
        self.noise_size = noise_size

    def _validated(self):
        det, params = check_detector_params(self.detector, self.eps, self.K, self.K_c,
                                            self.K_s, self.s, self.literal_k)
        if not isinstance(self.num_bins, numbers.Integral) or self.num_bins < 2:
            raise ValueError("num_bins must be an integer >= 2")
        return det, params

    def fit(self, X, y=None):
        det, params = self._validated()
        image = check_image(X, self.quantization_step)
        self.detector_ = det
        self.params_ = params
        self.contrast_histogram_ = None
        self.regularity_model_ = None
        if det.uses_contrast:
            field_ = compute_gradient_field(image)
            if field_.magnitudes.max() > field_.magnitudes.min():
                self.contrast_histogram_ = build_contrast_histogram(field_, self.num_bins)
        if det.uses_regularity:
            model = self.regularity_model
            if model is None:
                model = estimate_regularity_model(s=params.s, noise_size=self.noise_size,
                                                  sigma=DEFAULT_SIGMA, seed=DEFAULT_SEED)
            elif abs(model.s - params.s) > 1e-12:
                raise ValueError(f"regularity_model has s={model.s}, estimator asks s={params.s}")
            self.regularity_model_ = model
        self.image_shape_ = image.values.shape
        self.result_ = None
        return self

    def detect(self, X) -> DetectionResult:
        """Full result object for ``X`` scored with the fitted statistics.

        When the fitted image had a flat gradient, H_c is learned from ``X``.
        """
        check_is_fitted(self, "params_")
        image = check_image(X, self.quantization_step)
        result = run_detection(image, self.detector_, self.params_,
                               H_c=self.contrast_histogram_, model=self.regularity_model_,
                               num_bins=self.num_bins)
        self.result_ = result
        return result

    def transform(self, X) -> np.ndarray:
        """log10 NFA of every level line of ``X``, in line order."""
        return self.detect(X).log10_nfa

    def predict(self, X) -> np.ndarray:
        """Boolean detection mask over the level lines of ``X``."""
        result = self.detect(X)
        return result.maximal if self.maximal else result.meaningful

    def fit_transform(self, X, y=None) -> np.ndarray:
        return self.fit(X).transform(X)

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).predict(X)
