"""A contrario detection of meaningful boundaries among image level lines."""
from .estimator import DetectionResult, MeaningfulBoundaries, check_image, run_detection
from .maximality import prune_maximal
from .raster import (GradientField, RasterImage, TailHistogram, build_contrast_histogram,
                     compute_gradient_field, load_image, save_pgm)
from .saliency import Detection, DetectionParams, Detector, detect_boundaries, score_lines
from .stats import (RegularityModel, binomial_tail_exact, binomial_tail_interpolated,
                    estimate_regularity_model)
from .topo_map import (LevelLine, LevelLines, LevelLineTree, build_inclusion_tree,
                       extract_level_lines, find_monotone_sections, reconstruct_from_level_sets)

__version__ = "0.1.0"

__all__ = [
    "Detection",
    "DetectionParams",
    "DetectionResult",
    "Detector",
    "GradientField",
    "LevelLine",
    "LevelLineTree",
    "LevelLines",
    "MeaningfulBoundaries",
    "RasterImage",
    "RegularityModel",
    "TailHistogram",
    "binomial_tail_exact",
    "binomial_tail_interpolated",
    "build_contrast_histogram",
    "build_inclusion_tree",
    "check_image",
    "compute_gradient_field",
    "detect_boundaries",
    "estimate_regularity_model",
    "extract_level_lines",
    "find_monotone_sections",
    "load_image",
    "prune_maximal",
    "reconstruct_from_level_sets",
    "run_detection",
    "save_pgm",
    "score_lines",
]
