"""Command-line entry point: ``afmkit <subcommand> ...``.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import io as afmio
from .evaluation import (
    magnitude_histogram,
    precision_recall,
    pr_sweep,
    verify_duality,
)
from .geom import GeometryError, LatticeDims
from .partition import AFMStateError, encode_afm, size_normalize, stretch, to_raw
from .squeeze import SqueezeConfig, SqueezeConfigError, squeeze

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

_VALIDATION_ERRORS = (afmio.FormatError, GeometryError, AFMStateError, SqueezeConfigError,
                      afmio.SynthError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # bad flags are validation errors (exit 1); 2 is reserved for I/O failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def parse_scales(spec: str) -> list[float]:
    """Parse ``lo:hi:step`` (inclusive) or a comma-separated list of scales."""
    if ":" not in spec:
        return [float(s) for s in spec.split(",") if s.strip()]
    try:
        lo, hi, step = (float(p) for p in spec.split(":"))
    except ValueError:
        raise UsageError(f"bad scale spec {spec!r}; expected lo:hi:step") from None
    if step <= 0 or hi < lo or lo <= 0:
        raise UsageError(f"bad scale spec {spec!r}")
    n = math.floor((hi - lo) / step + 1e-9)
    return [round(lo + k * step, 10) for k in range(n + 1)]


def _squeeze_config(args) -> SqueezeConfig:
    return SqueezeConfig(
        tau=math.radians(args.tau_deg),
        window=args.window,
        aspect_ratio_max=args.aspect_ratio,
        min_support=args.min_support,
        outlier_gamma_fraction=args.gamma_fraction,
        remove_outliers=not args.no_outlier_removal,
        deterministic_order=not args.random_order,
        seed=args.seed,
    )


def _match_method(args) -> str:
    if args.any_match:
        return "any"
    if args.greedy_match:
        return "greedy"
    return "optimal"


def _add_squeeze_flags(p, aspect_default=0.2):
    g = p.add_argument_group("squeeze")
    g.add_argument("--aspect-ratio", type=float, default=aspect_default,
                   help="accept a fitted rectangle when width/length is below this")
    g.add_argument("--tau-deg", type=float, default=10.0,
                   help="angular tolerance for region growing, degrees")
    g.add_argument("--window", type=int, default=3, help="side of the growth neighborhood")
    g.add_argument("--min-support", type=int, default=2, help="smallest support set to fit")
    g.add_argument("--gamma-fraction", type=float, default=0.02,
                   help="outlier cutoff as a fraction of min(H, W), in pixels")
    g.add_argument("--no-outlier-removal", action="store_true",
                   help="feed every attraction vector to the squeeze step")
    g.add_argument("--random-order", action="store_true",
                   help="visit seeds in a shuffled order instead of shortest-vector-first")
    g.add_argument("--seed", type=int, default=0, help="shuffle seed for --random-order")


def _add_match_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--any-match", action="store_true",
                   help="count a pixel as matched if anything is within the radius")
    g.add_argument("--greedy-match", action="store_true",
                   help="greedy nearest-first one-to-one matching instead of maximum matching")


def _figure_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".png")


def _corpus_files(directory: Path, pattern: str) -> list[Path]:
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(directory.glob(pattern))


# -- subcommands -------------------------------------------------------------

def cmd_encode(args) -> int:
    if args.stretch and not args.normalize:
        raise UsageError("--stretch requires --normalize")
    lsm = afmio.load_annotation(args.input)
    if args.scale != 1.0:
        lsm = lsm.scaled(args.scale)
    afm = encode_afm(lsm)
    if args.normalize:
        afm = size_normalize(afm)
    if args.stretch:
        afm = stretch(afm)
    afmio.save_afm(afm, args.output)
    return EXIT_OK


def cmd_squeeze(args) -> int:
    afm = to_raw(afmio.load_afm(args.input))
    segs = squeeze(afm, _squeeze_config(args))
    afmio.save_annotation(segs, args.output)
    print(f"{len(segs)} segments")
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    files = _corpus_files(Path(args.input), "*.json")
    if not files:
        raise UsageError(f"no annotations in {args.input}")
    corpus = [afmio.load_annotation(f) for f in files]
    report = verify_duality(corpus, parse_scales(args.scales), _squeeze_config(args),
                            workers=args.workers, method=_match_method(args))
    out = Path(args.report)
    out.write_text(afmio.write_csv(("scale", "precision", "recall"), report.rows()))
    if not args.no_plot:
        from .plotting import plot_duality
        plot_duality(report, _figure_path(out))
    ps = [r[1] for r in report.scales]
    rs = [r[2] for r in report.scales]
    print(f"scales={len(ps)} files={len(corpus)}")
    print(f"precision min={min(ps):.4f} mean={sum(ps) / len(ps):.4f}")
    print(f"recall    min={min(rs):.4f} mean={sum(rs) / len(rs):.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    gt = afmio.load_annotation(args.gt)
    out = Path(args.out)
    header = ("threshold", "precision", "recall", "f")
    method = _match_method(args)
    if args.sweep:
        afm = to_raw(afmio.load_afm(args.sweep))
        curve = pr_sweep(afm, gt, _squeeze_config(args), method)
        out.write_text(afmio.write_csv(header, curve.rows()))
        if not args.no_plot:
            from .plotting import plot_pr_curve
            plot_pr_curve(curve, _figure_path(out))
        best = max(curve.points, key=lambda p: p.f_measure)
        print(f"best F={best.f_measure:.6f} at threshold {best.threshold:.2f} "
              f"(P={best.precision:.6f} R={best.recall:.6f})")
        return EXIT_OK
    if not args.pred:
        raise UsageError("--pred is required unless --sweep is given")
    pt = precision_recall(afmio.load_annotation(args.pred), gt, method)
    out.write_text(afmio.write_csv(header, [(None, pt.precision, pt.recall, pt.f_measure)]))
    print(f"P={pt.precision:.6f} R={pt.recall:.6f} F={pt.f_measure:.6f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = afmio.SynthConfig(
        seed=args.seed, scene_count=args.count, dims=LatticeDims(args.width, args.height),
        segments_per_scene=(args.min_segments, args.max_segments),
        min_length_fraction=args.min_length_fraction, min_separation=args.min_separation)
    scenes = afmio.generate_scenes(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(scenes) - 1)))
    for k, lsm in enumerate(scenes):
        afmio.save_annotation(lsm, out / f"scene_{k:0{width}d}.json")
    print(f"wrote {len(scenes)} scenes to {out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    directory = Path(args.input)
    files = _corpus_files(directory, "*.afm") + _corpus_files(directory, "*.json")
    if not files:
        raise UsageError(f"no .afm or .json files in {directory}")

    def afms():
        for f in sorted(files):
            if f.suffix == ".afm":
                yield to_raw(afmio.load_afm(f))
            else:
                yield encode_afm(afmio.load_annotation(f))

    hist = magnitude_histogram(afms(), args.bins)
    out = Path(args.out)
    out.write_text(afmio.write_csv(("bin_lo", "bin_hi", "count"), hist.rows()))
    if not args.no_plot:
        from .plotting import plot_histogram
        plot_histogram(hist, _figure_path(out))
    total = sum(hist.counts)
    below = sum(c for (lo, hi, c) in hist.rows() if hi <= 0.02 + 1e-12)
    print(f"pixels={total} bins={len(hist.counts)} max={hist.bin_edges[-1]:.6f}")
    print(f"fraction in bins entirely below 0.02: {below / total:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="afmkit", description="Attraction field maps for line segments.",
                     formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="annotation JSON -> AFM file", formatter_class=fmt)
    p.add_argument("--input", required=True, help="annotation JSON")
    p.add_argument("--output", required=True, help="AFM file to write")
    p.add_argument("--normalize", action="store_true", help="divide a_x by W and a_y by H")
    p.add_argument("--stretch", action="store_true", help="log-stretch (needs --normalize)")
    p.add_argument("--scale", type=float, default=1.0,
                   help="rescale coordinates (and dims, rounded up) before encoding")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("squeeze", help="AFM file -> detected segments JSON", formatter_class=fmt)
    p.add_argument("--input", required=True, help="AFM file, any state")
    p.add_argument("--output", required=True, help="segments JSON with per-segment scores")
    _add_squeeze_flags(p)
    p.set_defaults(func=cmd_squeeze)

    p = sub.add_parser("roundtrip", help="encode->squeeze duality check over a corpus",
                       formatter_class=fmt)
    p.add_argument("--input", required=True, help="directory of annotation JSON files")
    p.add_argument("--scales", default="0.5:2.0:0.1", help="lo:hi:step (inclusive) or a,b,c")
    p.add_argument("--report", required=True, help="CSV report (figure written beside it)")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    _add_squeeze_flags(p)
    _add_match_flags(p)
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("eval", help="precision/recall of detections, or a threshold sweep",
                       formatter_class=fmt)
    p.add_argument("--pred", help="detected segments JSON")
    p.add_argument("--gt", required=True, help="ground-truth annotation JSON")
    p.add_argument("--sweep", metavar="AFM", help="squeeze this AFM and sweep the aspect ratio")
    p.add_argument("--out", required=True, help="CSV output (figure written beside it)")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure for --sweep")
    _add_squeeze_flags(p)
    _add_match_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a seeded synthetic annotation corpus",
                       formatter_class=fmt)
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--count", type=int, default=200, help="number of scenes")
    p.add_argument("--width", type=int, default=320, help="lattice width")
    p.add_argument("--height", type=int, default=320, help="lattice height")
    p.add_argument("--min-segments", type=int, default=2, help="fewest segments per scene")
    p.add_argument("--max-segments", type=int, default=30, help="most segments per scene")
    p.add_argument("--min-length-fraction", type=float, default=0.05,
                   help="shortest segment as a fraction of the diagonal")
    p.add_argument("--min-separation", type=float, default=3.0,
                   help="smallest midpoint distance between segments, pixels")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="histogram of normalized attraction magnitudes",
                       formatter_class=fmt)
    p.add_argument("--input", required=True, help="directory of .afm and/or annotation .json")
    p.add_argument("--bins", type=int, default=50, help="number of histogram bins")
    p.add_argument("--out", required=True, help="CSV output (figure written beside it)")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"afmkit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, *_VALIDATION_ERRORS) as exc:
        print(f"afmkit: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
