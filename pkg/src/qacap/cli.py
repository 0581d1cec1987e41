"""Command-line pipelines: augment, evaluate, calibrate, and checks.

Subcommands
-----------
augment         distort a dataset's images, write PNGs + replay manifest
evaluate        BLEU-1..4 / ROUGE-L / CIDEr-D report (x100), optional
                per-difficulty breakdown
calibrate       reliability bins + ECE report, optional per-difficulty
                breakdown and SVG reliability diagram
bin-difficulty  per-image difficulty assignment and bucket counts
losscheck       loss invariants + finite-difference gradient table
shift-probe     cosine-similarity histograms of a probe vs two feature sets

Every subcommand is deterministic given (config, inputs). Flag values
override config-file values, which override defaults; the resolved config
plus input digests are embedded in each report for provenance. Exit codes:
0 success, 1 fatal error, 2 partial per-item failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .calibration import (
    CalibrationError,
    CalibrationReport,
    aggregate_confidence,
    cosine_shift_probe,
    ece,
    ece_by_difficulty,
    score_predictions,
)
from .dataset import (
    DatasetError,
    DatasetRecord,
    Difficulty,
    PredictedCaption,
    load_dataset,
    load_predictions,
    stratify,
)
from .losskit import LossKitError, run_losscheck
from .metrics import MetricError, bleu, cider_d, normalize_hypothesis, rouge_l, tokenize
from .noise import (
    GeometryError,
    NoiseDistribution,
    ParameterError,
    augment_dataset,
)

_FATAL = (DatasetError, CalibrationError, MetricError, ParameterError,
          GeometryError, LossKitError, FileNotFoundError, NotADirectoryError,
          IsADirectoryError, PermissionError, json.JSONDecodeError, ValueError)


@dataclass
class RunConfig:
    """Resolved run settings; round-trips losslessly through JSON."""

    seed: int = 0
    distribution: str = "random"
    bins: int = 10
    lam: float = 1.0
    aggregation: str = "mean"
    paths: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "distribution": self.distribution,
            "bins": self.bins,
            "lambda": self.lam,
            "aggregation": self.aggregation,
            "paths": dict(self.paths),
        }

    @staticmethod
    def from_dict(obj: dict) -> "RunConfig":
        known = {"seed", "distribution", "bins", "lambda", "aggregation", "paths"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = RunConfig()
        if "seed" in obj:
            cfg.seed = int(obj["seed"])
        if "distribution" in obj:
            cfg.distribution = str(obj["distribution"])
        if "bins" in obj:
            cfg.bins = int(obj["bins"])
        if "lambda" in obj:
            cfg.lam = float(obj["lambda"])
        if "aggregation" in obj:
            cfg.aggregation = str(obj["aggregation"])
        if "paths" in obj:
            cfg.paths = {str(k): str(v) for k, v in dict(obj["paths"]).items()}
        return cfg


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """defaults <- config file <- command-line flags."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = RunConfig.from_dict(
            json.loads(Path(args.config).read_text(encoding="utf-8"))
        )
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "dist", None) is not None:
        cfg.distribution = args.dist
    if getattr(args, "bins", None) is not None:
        cfg.bins = args.bins
    if getattr(args, "lam", None) is not None:
        cfg.lam = args.lam
    if getattr(args, "aggregation", None) is not None:
        cfg.aggregation = args.aggregation
    for key in ("dataset", "predictions", "images_root", "out", "features"):
        value = getattr(args, key, None)
        if value is not None:
            cfg.paths[key] = str(value)
    if not 0 <= cfg.seed < 1 << 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {cfg.seed}")
    return cfg


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provenance(cfg: RunConfig, inputs: dict[str, str | Path]) -> dict:
    return {
        "tool": "qacap",
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "inputs": {
            name: {"path": str(path), "sha256": _sha256(path)}
            for name, path in inputs.items()
        },
    }


def _emit(doc: dict, out: str | None, quiet: bool) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
        if not quiet:
            print(f"wrote {out}")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# augment
# ---------------------------------------------------------------------------

def cmd_augment(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    dataset_path = cfg.paths.get("dataset")
    out_dir = cfg.paths.get("out")
    if not dataset_path or not out_dir:
        raise ValueError("augment requires --dataset and --out")
    records = load_dataset(dataset_path)
    images_root = cfg.paths.get("images_root") or str(Path(dataset_path).parent)
    dist = NoiseDistribution.of(cfg.distribution)
    manifest = augment_dataset(
        records, dist, cfg.seed, out_dir,
        images_root=images_root, workers=args.workers,
    )
    if not args.quiet:
        for noise_type, count in sorted(manifest.type_counts().items()):
            print(f"{noise_type:>16}: {count}")
        print(f"{'images':>16}: {len(manifest.events)} ok, "
              f"{len(manifest.errors)} failed")
    return 2 if manifest.errors else 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _metric_block(pairs: list[tuple[list[str], list[list[str]]]]) -> dict:
    """BLEU-1..4 / ROUGE-L averaged over images, corpus CIDEr-D; all x100."""
    block: dict = {}
    for n in range(1, 5):
        scores = [bleu(hyp, refs, n) for hyp, refs in pairs]
        block[f"bleu{n}"] = 100.0 * sum(scores) / len(scores)
    rouge_scores = [rouge_l(hyp, refs) for hyp, refs in pairs]
    block["rouge_l"] = 100.0 * sum(rouge_scores) / len(rouge_scores)
    # CIDEr-D needs >= 2 images for IDF; a singleton bucket reports null.
    block["cider_d"] = 100.0 * cider_d(pairs).mean if len(pairs) >= 2 else None
    block["n_images"] = len(pairs)
    return block


def _paired_tokens(records: list[DatasetRecord],
                   preds: list[PredictedCaption]
                   ) -> list[tuple[list[str], list[list[str]], Difficulty | None]]:
    index = {r.image_id: r for r in records}
    out = []
    for pred in preds:
        record = index.get(pred.image_id)
        if record is None:
            raise DatasetError(f"prediction references unknown image {pred.image_id!r}")
        refs = [tokens for tokens in (tokenize(c) for c in record.captions) if tokens]
        if not refs:
            raise DatasetError(
                f"image {pred.image_id!r} has no usable reference captions"
            )
        out.append((normalize_hypothesis(pred.tokens), refs, record.difficulty))
    return out


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    dataset_path = cfg.paths.get("dataset")
    predictions_path = cfg.paths.get("predictions")
    if not dataset_path or not predictions_path:
        raise ValueError("evaluate requires --dataset and --predictions")
    records = load_dataset(dataset_path)
    preds = load_predictions(predictions_path)
    if not preds:
        raise DatasetError(f"no predictions found in {predictions_path}")

    triples = _paired_tokens(records, preds)
    report = _metric_block([(hyp, refs) for hyp, refs, _ in triples])
    if args.by_difficulty:
        report["by_difficulty"] = {}
        for difficulty in Difficulty:
            bucket = [(hyp, refs) for hyp, refs, d in triples if d is difficulty]
            if bucket:
                report["by_difficulty"][difficulty.value] = _metric_block(bucket)
    report["provenance"] = _provenance(
        cfg, {"dataset": dataset_path, "predictions": predictions_path}
    )
    _emit(report, cfg.paths.get("out"), args.quiet)
    return 0


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def _report_to_dict(report: CalibrationReport) -> dict:
    bins = []
    for b in report.bins:
        entry: dict = {"lo": b.lo, "hi": b.hi, "count": b.count}
        if b.count:
            entry["mean_conf"] = b.mean_confidence
            entry["accuracy"] = b.accuracy
        bins.append(entry)
    return {"m": report.m, "n": report.n, "ece": report.ece, "bins": bins}


def render_reliability_svg(report: CalibrationReport, width: int = 480,
                           height: int = 360) -> str:
    """Bar chart of per-bin accuracy vs. confidence, no dependencies."""
    margin = 40.0
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        # perfect-calibration diagonal
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{margin}" stroke="#888" stroke-dasharray="4 3"/>',
    ]
    bar_w = plot_w / report.m
    for i, b in enumerate(report.bins):
        if not b.count:
            continue
        bar_h = plot_h * (b.accuracy or 0.0)
        x = margin + i * bar_w
        y = height - margin - bar_h
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" '
            f'height="{bar_h:.2f}" fill="#4878a8" stroke="white"/>'
        )
    parts.append(
        f'<text x="{margin}" y="{margin / 2:.0f}" font-family="sans-serif" '
        f'font-size="13">ECE = {report.ece:.4f} (n = {report.n})</text>'
    )
    parts.append(
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    dataset_path = cfg.paths.get("dataset")
    predictions_path = cfg.paths.get("predictions")
    if not dataset_path or not predictions_path:
        raise ValueError("calibrate requires --dataset and --predictions")
    records = load_dataset(dataset_path)
    preds = load_predictions(predictions_path)
    if not preds:
        raise DatasetError(f"no predictions found in {predictions_path}")

    words, _ = score_predictions(records, preds)
    report = ece(words, cfg.bins)

    doc = _report_to_dict(report)
    doc["aggregation"] = cfg.aggregation
    doc["caption_confidences"] = [
        {"image_id": p.image_id,
         "confidence": aggregate_confidence(p, cfg.aggregation)}
        for p in preds
    ]
    if args.by_difficulty:
        per_bucket = ece_by_difficulty(records, preds, cfg.bins)
        doc["per_difficulty"] = {
            difficulty.value: _report_to_dict(bucket_report)
            for difficulty, bucket_report in per_bucket.items()
        }
    doc["provenance"] = _provenance(
        cfg, {"dataset": dataset_path, "predictions": predictions_path}
    )
    _emit(doc, cfg.paths.get("out"), args.quiet)
    if args.svg:
        Path(args.svg).write_text(render_reliability_svg(report), encoding="utf-8")
        if not args.quiet:
            print(f"wrote {args.svg}")
    return 0


# ---------------------------------------------------------------------------
# bin-difficulty
# ---------------------------------------------------------------------------

def cmd_bin_difficulty(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    dataset_path = cfg.paths.get("dataset")
    if not dataset_path:
        raise ValueError("bin-difficulty requires --dataset")
    records = load_dataset(dataset_path)
    buckets = stratify(records)
    doc = {
        "images": [
            {
                "id": r.image_id,
                "captions": len(r.captions),
                "difficulty": r.difficulty.value if r.difficulty else None,
            }
            for r in records
        ],
        "counts": {
            **{d.value: len(buckets[d]) for d in Difficulty},
            "uncaptioned": sum(1 for r in records if r.difficulty is None),
        },
        "provenance": _provenance(cfg, {"dataset": dataset_path}),
    }
    _emit(doc, cfg.paths.get("out"), args.quiet)
    return 0


# ---------------------------------------------------------------------------
# losscheck
# ---------------------------------------------------------------------------

def _parse_dims(text: str) -> tuple[int, int]:
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except Exception as exc:
        raise ValueError(f"--dims expects ROWSxCOLS, got {text!r}") from exc


def cmd_losscheck(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    max_rows, max_cols = _parse_dims(args.dims)
    checks = run_losscheck(seed=cfg.seed, max_rows=max_rows, max_cols=max_cols)
    name_width = max(len(c.name) for c in checks)
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        line = f"{status}  {check.name:<{name_width}}  {check.detail}"
        print(line.rstrip())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed (seed={cfg.seed})")
    if failed:
        print(f"failed: {', '.join(c.name for c in failed)}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# shift-probe
# ---------------------------------------------------------------------------

def cmd_shift_probe(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    features_path = cfg.paths.get("features")
    if not features_path:
        raise ValueError("shift-probe requires --features")
    payload = json.loads(Path(features_path).read_text(encoding="utf-8"))
    for key in ("probe", "set_a", "set_b"):
        if key not in payload:
            raise ValueError(f'features file missing "{key}"')
    result = cosine_shift_probe(
        payload["set_a"], payload["set_b"], payload["probe"], cfg.bins
    )
    doc = {
        "bins": result.bins,
        "set_a": dataclasses.asdict(result.set_a) | {"counts": list(result.set_a.counts)},
        "set_b": dataclasses.asdict(result.set_b) | {"counts": list(result.set_b.counts)},
        "provenance": _provenance(cfg, {"features": features_path}),
    }
    _emit(doc, cfg.paths.get("out"), args.quiet)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags override it)")
    common.add_argument("--seed", type=int, help="run seed (default 0)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--quiet", action="store_true",
                        help="suppress informational output")

    parser = argparse.ArgumentParser(
        prog="qacap",
        description="Quality-agnostic captioning toolkit",
    )
    parser.add_argument("--version", action="version", version=f"qacap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", parents=[common],
                       help="write distorted copies of every dataset image")
    p.add_argument("--dataset", help="dataset JSON file")
    p.add_argument("--dist", choices=["frequent", "random", "original"],
                   help="noise sampling distribution (default random)")
    p.add_argument("--images-root", dest="images_root",
                   help="directory image paths are relative to "
                        "(default: the dataset file's directory)")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel workers; output is identical for any count")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("evaluate", parents=[common],
                       help="caption quality metrics report")
    p.add_argument("--dataset")
    p.add_argument("--predictions", help="predictions JSONL file")
    p.add_argument("--by-difficulty", action="store_true", dest="by_difficulty",
                   help="add per-difficulty metric sections")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("calibrate", parents=[common],
                       help="confidence calibration report")
    p.add_argument("--dataset")
    p.add_argument("--predictions")
    p.add_argument("--bins", type=int, help="confidence bins (default 10)")
    p.add_argument("--aggregation", choices=["mean", "geomean"],
                   help="caption-confidence aggregation (default mean)")
    p.add_argument("--by-difficulty", action="store_true", dest="by_difficulty")
    p.add_argument("--svg", help="also write a reliability-diagram SVG here")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("bin-difficulty", parents=[common],
                       help="per-image difficulty assignment")
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_bin_difficulty)

    p = sub.add_parser("losscheck", parents=[common],
                       help="loss invariant and gradient checks")
    p.add_argument("--dims", default="16x32",
                   help="max random matrix shape ROWSxCOLS (default 16x32)")
    p.set_defaults(func=cmd_losscheck)

    p = sub.add_parser("shift-probe", parents=[common],
                       help="cosine-similarity histograms vs two feature sets")
    p.add_argument("--features",
                   help='JSON file with "probe", "set_a", "set_b"')
    p.add_argument("--bins", type=int, help="histogram bins (default 10)")
    p.set_defaults(func=cmd_shift_probe)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _FATAL as exc:
        print(f"qacap: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
