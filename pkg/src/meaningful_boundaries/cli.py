"""Command-line interface: ``detect``, ``prepare-stats`` and ``validate``.

Exit codes: 0 success, 1 usage error, 2 pipeline or data error, 3 a
validation bound was violated.
"""
from __future__ import annotations

import argparse
import base64
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .estimator import check_detector_params, run_detection
from .harness import TrialError, format_table, reports_to_json, run_h0_trials, uniform_tail_check
from .raster import DegenerateHistogramError, ImageError, load_image
from .saliency import Detector
from .stats import (DEFAULT_NOISE_SIZE, DEFAULT_REGULARITY_BINS, DEFAULT_SEED, DEFAULT_SIGMA,
                    InsufficientStatisticsError, cache_path, estimate_regularity_model,
                    load_regularity_model)
from .topo_map import TopologyError

logger = logging.getLogger("meaningful_boundaries")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PIPELINE = 2
EXIT_BOUND = 3

# log10 NFA buckets, from not meaningful to extremely meaningful
BUCKETS = [
    (0.0, "#9e9e9e"),
    (-5.0, "#2c7bb6"),
    (-20.0, "#1a9641"),
    (-50.0, "#fdae61"),
    (-math.inf, "#d7191c"),
]

PIPELINE_ERRORS = (ImageError, DegenerateHistogramError, TopologyError,
                   InsufficientStatisticsError, TrialError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _eps(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid eps {text!r}") from None
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("eps must be finite and >= 0")
    return v


def _k(text: str) -> str:
    t = text.strip()
    try:
        if t.endswith("%"):
            p = float(t[:-1])
            if not 0 < p <= 100:
                raise ValueError
        elif int(t) < 1:
            raise ValueError
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer or P%, got {text!r}") from None
    return t


def _scale(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid scale {text!r}") from None
    if not v >= 1:
        raise argparse.ArgumentTypeError("s must be >= 1")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def _int_at_least(lo: int):
    def parse(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}")
        return v
    return parse


def _detector(text: str) -> Detector:
    try:
        return Detector.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_common(p):
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                   help="log progress to stderr")


def _add_detector_flags(p, multi=False):
    if multi:
        p.add_argument("--detector", type=_detector, action="append", dest="detectors",
                       help="detector to validate (repeatable; default all six)")
    else:
        p.add_argument("--detector", type=_detector, default=Detector.TMA_MCB,
                       help="one of " + ", ".join(d.value for d in Detector))
    p.add_argument("--eps", type=_eps, default=1.0, help="NFA threshold (default 1)")
    p.add_argument("--K", type=_k, default="50%", help="TMA-MCB K, integer or P%%")
    p.add_argument("--Kc", type=_k, default="50%", help="TMA-MCRB contrast K, integer or P%%")
    p.add_argument("--Ks", type=_k, default="50%", help="TMA-MRB/MCRB regularity K, integer or P%%")
    p.add_argument("--s", type=_scale, default=5.0, help="regularity scale in pixels (default 5)")
    p.add_argument("--compat-literal-k", action="store_true",
                   help="pass k*l/2n instead of (n-k)*l/2n to the binomial tail")
    p.add_argument("--noise-size", type=_int_at_least(64), default=DEFAULT_NOISE_SIZE,
                   help="side of the noise image used to learn H_s")
    p.add_argument("--cache-dir", default=None, help="H_s cache directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meaningful-boundaries",
                     description="A contrario detection of meaningful level-line boundaries.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="detect meaningful boundaries in a PGM image")
    _add_common(d)
    d.add_argument("--image", required=True, help="8-bit PGM input")
    d.add_argument("--out", default=".", help="output directory (default: current)")
    d.add_argument("--quantization-step", type=_positive_float, default=1.0)
    d.add_argument("--num-bins", type=_int_at_least(2), default=1024, help="H_c bins")
    d.add_argument("--no-maximal", action="store_true",
                   help="draw every meaningful line instead of maximal ones")
    _add_detector_flags(d)

    s = sub.add_parser("prepare-stats", help="learn and cache the regularity tail H_s")
    _add_common(s)
    s.add_argument("--s", type=_scale, default=5.0)
    s.add_argument("--noise-size", type=_int_at_least(64), default=DEFAULT_NOISE_SIZE)
    s.add_argument("--sigma", type=_positive_float, default=DEFAULT_SIGMA)
    s.add_argument("--seed", type=_int_at_least(0), default=DEFAULT_SEED)
    s.add_argument("--bins", type=_int_at_least(2), default=DEFAULT_REGULARITY_BINS)
    s.add_argument("--cache-dir", default=None)

    v = sub.add_parser("validate", help="Monte-Carlo check of the false-alarm bound")
    _add_common(v)
    _add_detector_flags(v, multi=True)
    v.add_argument("--trials", type=_int_at_least(1), default=20)
    v.add_argument("--size", type=_int_at_least(64), default=128)
    v.add_argument("--sigma", type=_positive_float, default=50.0)
    v.add_argument("--base-seed", type=int, default=1)
    v.add_argument("--quick", action="store_true", help="allow fewer than 10 trials")
    v.add_argument("--json", default=None, help="also write the report to this file")
    v.add_argument("--uniform-tail", action="store_true",
                   help="also run the uniform tail Monte-Carlo check")
    return parser


# ----------------------------------------------------------------------
# Outputs
# ----------------------------------------------------------------------
def bucket_color(log10_nfa: float) -> str:
    for edge, color in BUCKETS:
        if log10_nfa >= edge:
            return color
    return BUCKETS[-1][1]


def _png_base64(values: np.ndarray) -> str:
    from PIL import Image

    arr = np.clip(np.rint(values), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG", optimize=False)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def render_overlay(result, ids) -> str:
    """SVG with the image underneath and one stroked path per selected line."""
    H, W = result.image.values.shape
    lines = result.lines
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
        f'width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<image x="0" y="0" width="{W}" height="{H}" image-rendering="pixelated" '
        f'xlink:href="data:image/png;base64,{_png_base64(result.image.values)}"/>',
        '<g fill="none" stroke-width="0.5" stroke-linejoin="round">',
    ]
    for i in ids:
        poly = lines.points[lines.offsets[i]:lines.offsets[i + 1]] + 0.5
        coords = " ".join(f"{x:.3f},{y:.3f}" for x, y in poly.tolist())
        nfa = float(result.log10_nfa[i])
        out.append(f'<path id="line{i}" stroke="{bucket_color(nfa)}" d="M {coords} Z">'
                   f'<title>line {i} log10 NFA {nfa:.3f}</title></path>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def detections_json(result, maximal_mask) -> str:
    records = []
    for d in result.detections():
        rec = d.to_json()
        if maximal_mask[d.line_id]:
            rec["maximal"] = True
        records.append(rec)
    return json.dumps(records, indent=1) + "\n"


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------
def _model_for(args, det):
    if not det.uses_regularity:
        return None
    return estimate_regularity_model(s=args.s, noise_size=args.noise_size,
                                     cache_dir=args.cache_dir)


def cmd_detect(args) -> int:
    det, params = check_detector_params(args.detector, args.eps, args.K, args.Kc, args.Ks,
                                        args.s, args.compat_literal_k)
    image = load_image(args.image, args.quantization_step)
    model = _model_for(args, det)
    result = run_detection(image, det, params, model=model, num_bins=args.num_bins)
    maximal = result.maximal
    drawn = np.flatnonzero(result.meaningful if args.no_maximal else maximal)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "detections.json").write_text(detections_json(result, maximal), encoding="utf-8")
    (out / "overlay.svg").write_text(render_overlay(result, drawn), encoding="utf-8")
    print(f"detector: {det.value}")
    print(f"level lines (N_ll): {result.n_lines}")
    print(f"meaningful: {result.n_meaningful}")
    print(f"maximal: {int(maximal.sum())}")
    print(f"wrote {out / 'detections.json'} and {out / 'overlay.svg'}")
    return EXIT_OK


def cmd_prepare_stats(args) -> int:
    path = cache_path(args.s, args.noise_size, args.sigma, args.seed, args.bins, args.cache_dir)
    hit = False
    if path.exists():
        try:
            cached = load_regularity_model(path)
        except ValueError:
            cached = None
        expected = (args.s, args.noise_size, args.sigma, args.seed, args.bins)
        hit = cached is not None and (cached.s, cached.noise_size, cached.sigma, cached.seed,
                                      cached.num_bins) == expected
    model = estimate_regularity_model(s=args.s, noise_size=args.noise_size, sigma=args.sigma,
                                      seed=args.seed, num_bins=args.bins,
                                      cache_dir=args.cache_dir)
    hist = model.histogram
    if hit:
        print(f"cache hit: {path}")
    else:
        print(f"wrote {path}")
    samples = model.sample_count if model.sample_count is not None else "unknown"
    print(f"samples: {samples}")
    print(f"bins: {hist.num_bins} on [{hist.support_min:g}, {hist.support_max:g}]")
    for r in (0.5, 0.9, 0.99, 1.0):
        print(f"  H_s({r:g}) = {float(model(r)):.6g}")
    return EXIT_OK


def cmd_validate(args) -> int:
    dets = args.detectors or list(Detector)
    if args.trials < 10 and not args.quick:
        raise UsageError("validate needs --trials >= 10 unless --quick is given")
    _, params = check_detector_params(dets[0], args.eps, args.K, args.Kc, args.Ks, args.s,
                                      args.compat_literal_k)
    model = None
    if any(d.uses_regularity for d in dets):
        model = estimate_regularity_model(s=args.s, noise_size=args.noise_size,
                                          cache_dir=args.cache_dir)
    reports = run_h0_trials(args.trials, dets, args.eps, args.size, args.sigma,
                            args.base_seed, params, model=model, allow_few=args.quick)
    print(format_table(reports))
    ok = all(r.passed for r in reports)
    payload = json.loads(reports_to_json(reports))
    if args.uniform_tail:
        lem = uniform_tail_check()
        for rec in lem:
            print(f"uniform tail t={rec['t']:g}: frequency {rec['frequency']:.5f} "
                  f"<= {rec['bound']:.5f} {'ok' if rec['passed'] else 'FAIL'}")
        ok = ok and all(rec["passed"] for rec in lem)
        payload = {"detectors": payload, "uniform_tail": lem}
    if args.json:
        Path(args.json).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
    for r in reports:
        if not r.passed:
            print(f"bound violated: {r.detector.value} mean {r.mean:.3f} > {r.bound:.3f}",
                  file=sys.stderr)
    return EXIT_OK if ok else EXIT_BOUND


COMMANDS = {"detect": cmd_detect, "prepare-stats": cmd_prepare_stats, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PIPELINE_ERRORS as exc:
        print(f"{parser.prog}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except ValueError as exc:
        # parameter combinations argparse cannot see
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
