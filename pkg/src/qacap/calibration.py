"""Confidence calibration: ECE, reliability bins, and the shift probe.

Word-level confidences come straight from the generator's per-token
probabilities; word-level correctness comes from the minimum-edit
alignment against the closest reference (see :mod:`qacap.metrics`).
ECE bins the words into M equal-width confidence intervals
((i-1)/M, i/M] and averages the per-bin |accuracy - confidence| gap
weighted by bin population. No recalibration (e.g. temperature scaling)
is applied; the analysis reports the model as-is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import DatasetRecord, Difficulty, PredictedCaption
from .metrics import AlignmentResult, normalize_hypothesis, ter_align, tokenize

DEFAULT_BINS = 10


class CalibrationError(ValueError):
    """A calibration input violates its contract."""


@dataclass(frozen=True)
class ScoredWord:
    """One generated word: the probability it was emitted with, and
    whether the alignment judged it correct."""

    confidence: float
    correct: bool

    def __post_init__(self):
        if not 0.0 < self.confidence <= 1.0:
            raise CalibrationError(
                f"confidence must lie in (0, 1], got {self.confidence}"
            )


@dataclass(frozen=True)
class ReliabilityBin:
    """One confidence interval (lo, hi]; statistics absent when empty."""

    lo: float
    hi: float
    count: int
    mean_confidence: float | None
    accuracy: float | None


@dataclass(frozen=True)
class CalibrationReport:
    bins: tuple[ReliabilityBin, ...]
    ece: float
    n: int
    m: int
    per_difficulty: dict[Difficulty, "CalibrationReport"] | None = None


def aggregate_confidence(pred: PredictedCaption, method: str = "mean") -> float:
    """Caption-level confidence: arithmetic mean of the token probabilities
    by default, geometric mean with ``method="geomean"``."""
    probs = pred.token_probs
    if len(probs) == 0:
        raise CalibrationError("cannot aggregate an empty prediction")
    if method == "mean":
        return sum(probs) / len(probs)
    if method == "geomean":
        return math.exp(sum(math.log(p) for p in probs) / len(probs))
    raise CalibrationError(f"unknown aggregation method {method!r}")


def ece(words: Sequence[ScoredWord], m: int = DEFAULT_BINS) -> CalibrationReport:
    """Expected calibration error over M equal-width confidence bins.

    Bins partition (0, 1] as ((i-1)/M, i/M], with confidence 1.0 landing in
    the last bin; empty bins contribute nothing.
    """
    if m < 1:
        raise CalibrationError(f"bin count must be >= 1, got {m}")
    if not words:
        raise CalibrationError("ECE of an empty word list is undefined")

    confidence = np.array([w.confidence for w in words], dtype=np.float64)
    correct = np.array([w.correct for w in words], dtype=np.float64)
    n = len(words)

    edges = np.arange(m + 1, dtype=np.float64) / m
    # side="left" makes each bin left-open/right-closed: conf == i/m -> bin i-1
    indices = np.searchsorted(edges, confidence, side="left") - 1
    indices = np.clip(indices, 0, m - 1)

    bins = []
    total = 0.0
    for b in range(m):
        mask = indices == b
        count = int(mask.sum())
        if count:
            mean_conf = float(confidence[mask].mean())
            accuracy = float(correct[mask].mean())
            total += (count / n) * abs(accuracy - mean_conf)
        else:
            mean_conf = None
            accuracy = None
        bins.append(ReliabilityBin(
            lo=float(edges[b]), hi=float(edges[b + 1]),
            count=count, mean_confidence=mean_conf, accuracy=accuracy,
        ))
    return CalibrationReport(bins=tuple(bins), ece=float(total), n=n, m=m)


def score_predictions(
    records: Sequence[DatasetRecord],
    preds: Sequence[PredictedCaption],
) -> tuple[list[ScoredWord], list[AlignmentResult]]:
    """Pair every generated token's confidence with its correctness flag.

    For each prediction the references are tokenized, the closest-reference
    alignment is computed, and one ScoredWord per hypothesis token is
    emitted, concatenated in prediction order. The per-image alignments are
    returned alongside.
    """
    index = {r.image_id: r for r in records}
    scored: list[ScoredWord] = []
    alignments: list[AlignmentResult] = []
    for pred in preds:
        record = index.get(pred.image_id)
        if record is None:
            raise CalibrationError(f"prediction references unknown image {pred.image_id!r}")
        if not record.captions:
            raise CalibrationError(f"image {pred.image_id!r} has no reference captions")
        refs = [tokens for tokens in (tokenize(c) for c in record.captions) if tokens]
        if not refs:
            raise CalibrationError(
                f"image {pred.image_id!r}: no reference caption survives tokenization"
            )
        hyp = normalize_hypothesis(pred.tokens)
        alignment = ter_align(hyp, refs)
        if len(alignment.per_word_correct) != len(pred.tokens):
            raise CalibrationError(
                f"internal invariant violated for image {pred.image_id!r}: "
                f"{len(alignment.per_word_correct)} flags for {len(pred.tokens)} tokens"
            )
        scored.extend(
            ScoredWord(confidence=prob, correct=flag)
            for prob, flag in zip(pred.token_probs, alignment.per_word_correct)
        )
        alignments.append(alignment)
    return scored, alignments


def ece_by_difficulty(
    records: Sequence[DatasetRecord],
    preds: Sequence[PredictedCaption],
    m: int = DEFAULT_BINS,
) -> dict[Difficulty, CalibrationReport]:
    """Calibration report per difficulty bucket; empty buckets are omitted."""
    index = {r.image_id: r for r in records}
    for pred in preds:
        if pred.image_id not in index:
            raise CalibrationError(f"prediction references unknown image {pred.image_id!r}")
    out: dict[Difficulty, CalibrationReport] = {}
    for difficulty in Difficulty:
        subset = [p for p in preds if index[p.image_id].difficulty is difficulty]
        if not subset:
            continue
        words, _ = score_predictions(records, subset)
        out[difficulty] = ece(words, m)
    return out


# ---------------------------------------------------------------------------
# Distribution-shift probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimilarityHistogram:
    counts: tuple[int, ...]
    mean: float
    std: float


@dataclass(frozen=True)
class ShiftProbeResult:
    bins: int
    set_a: SimilarityHistogram
    set_b: SimilarityHistogram


def _cosine_histogram(features: np.ndarray, probe: np.ndarray, bins: int,
                      set_name: str) -> SimilarityHistogram:
    norms = np.sqrt((features ** 2).sum(axis=1))
    bad = np.nonzero(norms == 0.0)[0]
    if bad.size:
        raise CalibrationError(f"{set_name}: vector {int(bad[0])} has zero norm")
    probe_norm = float(np.sqrt((probe ** 2).sum()))
    sims = (features @ probe) / (norms * probe_norm)
    sims = np.clip(sims, -1.0, 1.0)  # guard float overshoot at the edges
    counts, _ = np.histogram(sims, bins=bins, range=(-1.0, 1.0))
    return SimilarityHistogram(
        counts=tuple(int(c) for c in counts),
        mean=float(sims.mean()),
        std=float(sims.std()),
    )


def cosine_shift_probe(features_a, features_b, probe, bins: int) -> ShiftProbeResult:
    """Histogram the cosine similarity of a probe vector to two populations.

    All vectors must share one dimension and have nonzero norm; similarities
    are histogrammed over [-1, 1] into ``bins`` equal-width bins (the final
    bin includes +1).
    """
    if bins < 1:
        raise CalibrationError(f"bin count must be >= 1, got {bins}")
    probe_arr = np.asarray(probe, dtype=np.float64).ravel()
    if probe_arr.size == 0:
        raise CalibrationError("probe vector is empty")
    if float(np.sqrt((probe_arr ** 2).sum())) == 0.0:
        raise CalibrationError("probe vector has zero norm")

    sets = []
    for name, features in (("set_a", features_a), ("set_b", features_b)):
        arr = np.asarray(features, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise CalibrationError(f"{name} must be a non-empty list of vectors")
        if arr.shape[1] != probe_arr.size:
            raise CalibrationError(
                f"{name} dimension {arr.shape[1]} != probe dimension {probe_arr.size}"
            )
        sets.append(_cosine_histogram(arr, probe_arr, bins, name))
    return ShiftProbeResult(bins=bins, set_a=sets[0], set_b=sets[1])
