"""Caption dataset records, predictions, and difficulty stratification.

The dataset format is a purpose-built JSON schema::

    {"images": [{"id": str, "file": str|null, "captions": [str, ...]}]}

Predictions are JSONL, one object per line::

    {"image_id": str, "tokens": [str, ...], "token_probs": [real, ...]}

Images are bucketed by how many of the five annotators produced a
caption: all five -> easy, three or four -> medium, one or two -> hard.
Images with zero captions are kept in the record list but excluded from
stratified analysis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

MAX_CAPTIONS_PER_IMAGE = 5


class DatasetError(ValueError):
    """A dataset or prediction file violates its format contract.

    ``byte_offset`` is set for JSON parse failures, ``line`` for JSONL
    per-line failures; both are None otherwise.
    """

    def __init__(self, message: str, *, byte_offset: int | None = None,
                 line: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset
        self.line = line


class Difficulty(Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


class DatasetFormat(Enum):
    CAPTIONS_JSON = "captions-json"


def bin_difficulty(caption_count: int) -> Difficulty:
    """Map a caption count in [1, 5] to its difficulty bucket.

    5 captions -> EASY, 3-4 -> MEDIUM, 1-2 -> HARD. Counts of 0 (or > 5)
    are out of range: uncaptioned images do not enter stratified analysis.
    """
    if not 1 <= caption_count <= MAX_CAPTIONS_PER_IMAGE:
        raise DatasetError(
            f"caption count {caption_count} outside [1, {MAX_CAPTIONS_PER_IMAGE}]"
        )
    if caption_count == MAX_CAPTIONS_PER_IMAGE:
        return Difficulty.EASY
    if caption_count >= 3:
        return Difficulty.MEDIUM
    return Difficulty.HARD


@dataclass(frozen=True)
class DatasetRecord:
    """One image with its ground-truth captions.

    ``difficulty`` is derived from the caption count and is present iff
    the record has at least one caption.
    """

    image_id: str
    captions: tuple[str, ...] = ()
    image_path: str | None = None
    difficulty: Difficulty | None = field(init=False, default=None)

    def __post_init__(self):
        if not self.image_id:
            raise DatasetError("image_id must be non-empty")
        captions = tuple(self.captions)
        object.__setattr__(self, "captions", captions)
        if len(captions) > MAX_CAPTIONS_PER_IMAGE:
            raise DatasetError(
                f"image {self.image_id!r} has {len(captions)} captions; "
                f"at most {MAX_CAPTIONS_PER_IMAGE} are allowed (one per annotator)"
            )
        if not all(isinstance(c, str) for c in captions):
            raise DatasetError(f"image {self.image_id!r}: captions must be strings")
        if captions:
            object.__setattr__(self, "difficulty", bin_difficulty(len(captions)))


@dataclass(frozen=True)
class PredictedCaption:
    """A generated caption: tokens with the probability assigned to each."""

    image_id: str
    tokens: tuple[str, ...]
    token_probs: tuple[float, ...]

    def __post_init__(self):
        tokens = tuple(self.tokens)
        probs = tuple(float(p) for p in self.token_probs)
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "token_probs", probs)
        if not self.image_id:
            raise DatasetError("prediction image_id must be non-empty")
        if len(tokens) == 0:
            raise DatasetError(f"prediction for {self.image_id!r} has no tokens")
        if len(tokens) != len(probs):
            raise DatasetError(
                f"prediction for {self.image_id!r}: {len(tokens)} tokens but "
                f"{len(probs)} probabilities"
            )
        if any(not tok for tok in tokens):
            raise DatasetError(f"prediction for {self.image_id!r} contains an empty token")
        if any(not 0.0 < p <= 1.0 for p in probs):
            raise DatasetError(
                f"prediction for {self.image_id!r}: token probabilities must lie in (0, 1]"
            )


def load_dataset(path: str | Path,
                 fmt: DatasetFormat = DatasetFormat.CAPTIONS_JSON) -> list[DatasetRecord]:
    """Load a dataset JSON file into records, deriving difficulty.

    Raises DatasetError with the byte offset on parse failure and a
    named-id error on duplicate image ids.
    """
    if fmt is not DatasetFormat.CAPTIONS_JSON:
        raise DatasetError(f"unsupported dataset format: {fmt}")
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetError(
            f"invalid dataset JSON at byte {exc.pos}: {exc.msg}",
            byte_offset=exc.pos,
        ) from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise DatasetError('dataset JSON must be an object with an "images" list')

    records: list[DatasetRecord] = []
    seen: set[str] = set()
    for entry in doc["images"]:
        if not isinstance(entry, dict):
            raise DatasetError("every image entry must be a JSON object")
        image_id = entry.get("id")
        if not isinstance(image_id, str):
            raise DatasetError('image entry missing string "id"')
        if image_id in seen:
            raise DatasetError(f"duplicate image_id {image_id!r}")
        seen.add(image_id)
        file_field = entry.get("file")
        if file_field is not None and not isinstance(file_field, str):
            raise DatasetError(f'image {image_id!r}: "file" must be a string or null')
        captions = entry.get("captions", [])
        if not isinstance(captions, list):
            raise DatasetError(f'image {image_id!r}: "captions" must be a list')
        records.append(
            DatasetRecord(image_id=image_id, captions=tuple(captions),
                          image_path=file_field)
        )
    return records


def dump_dataset(records: list[DatasetRecord]) -> dict:
    """Serialize records back to the dataset JSON structure."""
    return {
        "images": [
            {"id": r.image_id, "file": r.image_path, "captions": list(r.captions)}
            for r in records
        ]
    }


def save_dataset(records: list[DatasetRecord], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(dump_dataset(records), indent=2) + "\n", encoding="utf-8"
    )


def load_predictions(path: str | Path) -> list[PredictedCaption]:
    """Load a predictions JSONL file, in file order.

    Blank lines are skipped. Any malformed line, length mismatch, or
    out-of-range probability raises DatasetError carrying the line number.
    """
    preds: list[PredictedCaption] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(
                    f"line {lineno}: invalid JSON: {exc.msg}", line=lineno
                ) from exc
            if not isinstance(obj, dict):
                raise DatasetError(f"line {lineno}: expected a JSON object", line=lineno)
            try:
                pred = PredictedCaption(
                    image_id=obj.get("image_id", ""),
                    tokens=tuple(obj.get("tokens", ())),
                    token_probs=tuple(obj.get("token_probs", ())),
                )
            except DatasetError as exc:
                raise DatasetError(f"line {lineno}: {exc}", line=lineno) from exc
            preds.append(pred)
    return preds


def stratify(records: list[DatasetRecord]) -> dict[Difficulty, list[DatasetRecord]]:
    """Partition captioned records by difficulty.

    Always returns all three buckets (possibly empty). Records without
    captions carry no difficulty and are left out of every bucket.
    """
    buckets: dict[Difficulty, list[DatasetRecord]] = {d: [] for d in Difficulty}
    for record in records:
        if record.difficulty is not None:
            buckets[record.difficulty].append(record)
    return buckets
