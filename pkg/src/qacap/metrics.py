"""Caption quality metrics and word-level alignment.

Sentence-level BLEU-1..4, ROUGE-L, corpus-level CIDEr-D, and a
WER-style minimum-edit alignment used to derive per-word correctness
against the closest reference. Scores live on their natural scales
(BLEU/ROUGE in [0, 1], CIDEr-D in [0, 10]); multiplying by 100 is left to
report emission.

Tokenization is deliberately simple and self-contained: lowercase, strip
ASCII punctuation characters, split on whitespace runs. Scores are
internally consistent but not byte-comparable to evaluation servers that
use PTB tokenization.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

TokenSeq = Sequence[str]

ROUGE_BETA = 1.2
CIDER_MAX_ORDER = 4
CIDER_SIGMA = 6.0


class MetricError(ValueError):
    """A metric precondition was violated."""


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def tokenize(caption: str) -> list[str]:
    """Lowercase, drop punctuation characters, split on whitespace.

    "Don't stop." -> ["dont", "stop"]; the empty caption tokenizes to [].
    """
    return caption.lower().translate(_PUNCT_TABLE).split()


def normalize_hypothesis(tokens: Sequence[str]) -> list[str]:
    """Normalize generated tokens one-to-one for alignment against refs.

    Applies the same lowercase/punctuation normalization as `tokenize`, but
    never drops a token: a token that normalizes to nothing (e.g. "-")
    falls back to its lowercased form so confidence scores stay aligned.
    """
    out = []
    for token in tokens:
        lowered = token.lower()
        stripped = lowered.translate(_PUNCT_TABLE)
        out.append(stripped if stripped else lowered)
    return out


def _check_refs(refs: Sequence[TokenSeq], require_tokens: bool = True) -> None:
    if not refs:
        raise MetricError("at least one reference is required")
    if require_tokens and any(len(ref) == 0 for ref in refs):
        raise MetricError("references must be non-empty token sequences")


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

def _ngram_counts(tokens: TokenSeq, order: int) -> Counter:
    return Counter(tuple(tokens[i:i + order]) for i in range(len(tokens) - order + 1))


def bleu(hyp: TokenSeq, refs: Sequence[TokenSeq], n: int) -> float:
    """Sentence BLEU-n: clipped n-gram precision with brevity penalty.

    Uniform weights over orders 1..n, counts clipped against the maximum
    reference count, brevity penalty against the closest reference length
    (ties resolved toward the shorter reference). Returns 0 when any order
    has zero matches, and 0 for an empty hypothesis (by convention).
    """
    if not 1 <= n <= 4:
        raise MetricError(f"BLEU order must be in [1, 4], got {n}")
    _check_refs(refs)
    hyp_len = len(hyp)
    if hyp_len == 0:
        return 0.0

    log_precisions = []
    for order in range(1, n + 1):
        hyp_counts = _ngram_counts(hyp, order)
        total = max(hyp_len - order + 1, 0)
        if total == 0:
            return 0.0
        max_ref: Counter = Counter()
        for ref in refs:
            for gram, count in _ngram_counts(ref, order).items():
                if count > max_ref[gram]:
                    max_ref[gram] = count
        clipped = sum(min(count, max_ref[gram]) for gram, count in hyp_counts.items())
        if clipped == 0:
            return 0.0
        log_precisions.append(math.log(clipped / total))

    closest_ref_len = min((len(ref) for ref in refs),
                          key=lambda rl: (abs(rl - hyp_len), rl))
    if hyp_len >= closest_ref_len:
        brevity = 1.0
    else:
        brevity = math.exp(1.0 - closest_ref_len / hyp_len)
    return brevity * math.exp(sum(log_precisions) / n)


# ---------------------------------------------------------------------------
# ROUGE-L
# ---------------------------------------------------------------------------

def _lcs_length(a: TokenSeq, b: TokenSeq) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for tok in a:
        row = [0]
        for j, other in enumerate(b, 1):
            if tok == other:
                row.append(prev[j - 1] + 1)
            else:
                row.append(max(prev[j], row[-1]))
        prev = row
    return prev[-1]


def rouge_l(hyp: TokenSeq, refs: Sequence[TokenSeq]) -> float:
    """LCS F-measure (beta = 1.2) per reference; the max over refs wins."""
    _check_refs(refs)
    if len(hyp) == 0:
        return 0.0
    beta_sq = ROUGE_BETA ** 2
    best = 0.0
    for ref in refs:
        lcs = _lcs_length(hyp, ref)
        if lcs == 0:
            continue
        precision = lcs / len(hyp)
        recall = lcs / len(ref)
        score = (1.0 + beta_sq) * recall * precision / (recall + beta_sq * precision)
        best = max(best, score)
    return best


# ---------------------------------------------------------------------------
# CIDEr-D
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CiderResult:
    per_image: tuple[float, ...]
    mean: float


def _all_ngram_counts(tokens: TokenSeq, max_order: int) -> Counter:
    counts: Counter = Counter()
    for order in range(1, max_order + 1):
        for i in range(len(tokens) - order + 1):
            counts[tuple(tokens[i:i + order])] += 1
    return counts


def cider_d(corpus: Sequence[tuple[TokenSeq, Sequence[TokenSeq]]],
            max_order: int = CIDER_MAX_ORDER,
            sigma: float = CIDER_SIGMA) -> CiderResult:
    """Consensus metric: TF-IDF n-gram cosine with a Gaussian length penalty.

    ``corpus`` is a list of (hypothesis, references) pairs; document
    frequencies come from the reference sets (one document per image), so
    at least two images are required. Candidate counts are clipped against
    the reference before the dot product, similarities are averaged over
    orders 1..4 and over references, and the result is scaled by 10.
    """
    if len(corpus) < 2:
        raise MetricError(
            "CIDEr-D derives IDF from the corpus; supply at least 2 images"
        )
    for hyp, refs in corpus:
        _check_refs(refs, require_tokens=False)

    doc_freq: Counter = Counter()
    for _, refs in corpus:
        seen: set = set()
        for ref in refs:
            seen.update(_all_ngram_counts(ref, max_order).keys())
        doc_freq.update(seen)
    log_num_images = math.log(len(corpus))

    def tfidf(tokens: TokenSeq):
        vec: list[dict] = [dict() for _ in range(max_order)]
        norms = [0.0] * max_order
        for gram, tf in _all_ngram_counts(tokens, max_order).items():
            idf = log_num_images - math.log(max(1.0, doc_freq.get(gram, 0.0)))
            weight = tf * idf
            slot = len(gram) - 1
            vec[slot][gram] = weight
            norms[slot] += weight * weight
        return vec, [math.sqrt(v) for v in norms], len(tokens)

    per_image = []
    for hyp, refs in corpus:
        hyp_vec, hyp_norms, hyp_len = tfidf(hyp)
        order_sims = [0.0] * max_order
        for ref in refs:
            ref_vec, ref_norms, ref_len = tfidf(ref)
            penalty = math.exp(-((hyp_len - ref_len) ** 2) / (2.0 * sigma * sigma))
            for k in range(max_order):
                if hyp_norms[k] == 0.0 or ref_norms[k] == 0.0:
                    continue
                overlap = sum(
                    min(weight, ref_vec[k].get(gram, 0.0)) * ref_vec[k].get(gram, 0.0)
                    for gram, weight in hyp_vec[k].items()
                )
                order_sims[k] += penalty * overlap / (hyp_norms[k] * ref_norms[k])
        score = 10.0 * sum(order_sims) / max_order / len(refs)
        per_image.append(score)

    return CiderResult(tuple(per_image), sum(per_image) / len(per_image))


# ---------------------------------------------------------------------------
# Edit-distance alignment (WER-style, no phrase shifts)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlignmentResult:
    """Outcome of aligning a hypothesis against its best reference.

    ``ter`` is edits / reference length; ``per_word_correct`` marks each
    hypothesis token that participates in a zero-cost match on at least
    one minimal alignment against the chosen reference.
    """

    ter: float
    per_word_correct: tuple[bool, ...]
    chosen_ref_index: int
    edits: int
    ref_length: int


def _edit_table(hyp: TokenSeq, ref: TokenSeq) -> list[list[int]]:
    rows = len(hyp)
    cols = len(ref)
    table = [list(range(cols + 1))]
    for i in range(1, rows + 1):
        row = [i] + [0] * cols
        above = table[i - 1]
        tok = hyp[i - 1]
        for j in range(1, cols + 1):
            row[j] = min(
                above[j] + 1,                      # deletion of hyp token
                row[j - 1] + 1,                    # insertion of ref token
                above[j - 1] + (tok != ref[j - 1]),  # match / substitution
            )
        table.append(row)
    return table


def edit_distance(hyp: TokenSeq, ref: TokenSeq) -> int:
    """Levenshtein distance with unit substitution/insertion/deletion costs."""
    return _edit_table(hyp, ref)[-1][-1]


def _match_flags(hyp: TokenSeq, ref: TokenSeq) -> tuple[int, list[bool]]:
    """Edit distance plus optimistic per-token match flags.

    A hypothesis token counts as correct if some minimal-cost alignment
    matches it: cell (i, j) is a match on an optimal path iff
    forward(i, j) + backward(i+1, j+1) equals the total distance.
    """
    rows, cols = len(hyp), len(ref)
    forward = _edit_table(hyp, ref)
    backward = _edit_table(hyp[::-1], ref[::-1])
    total = forward[rows][cols]
    flags = []
    for i, tok in enumerate(hyp):
        hit = False
        for j in range(cols):
            if tok == ref[j] and \
                    forward[i][j] + backward[rows - i - 1][cols - j - 1] == total:
                hit = True
                break
        flags.append(hit)
    return total, flags


def ter_align(hyp: TokenSeq, refs: Sequence[TokenSeq]) -> AlignmentResult:
    """Align against the reference with the lowest error rate.

    For each reference the minimum-edit (substitution/insertion/deletion)
    alignment is computed; the reference with the lowest edits/length wins,
    ties going to the lowest index. The comparison is done with exact
    integer cross-multiplication so float rounding cannot flip a tie.
    """
    if len(hyp) == 0:
        raise MetricError("hypothesis must be non-empty")
    _check_refs(refs)

    best_index = 0
    best_edits = edit_distance(hyp, refs[0])
    best_len = len(refs[0])
    for index in range(1, len(refs)):
        ref = refs[index]
        edits = edit_distance(hyp, ref)
        # edits/len(ref) < best_edits/best_len, compared exactly
        if edits * best_len < best_edits * len(ref):
            best_index, best_edits, best_len = index, edits, len(ref)

    _, flags = _match_flags(hyp, refs[best_index])
    return AlignmentResult(
        ter=best_edits / best_len,
        per_word_correct=tuple(flags),
        chosen_ref_index=best_index,
        edits=best_edits,
        ref_length=best_len,
    )
