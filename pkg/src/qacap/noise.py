"""Deterministic synthetic image distortions and noise sampling.

Eight distortion types mirror the quality flaws crowdworkers reported on
photos taken by blind users (VizWiz-style data): blur (motion + defocus),
over/under-exposure (bright/dark contrast), improper framing (crop),
obstruction (cut-out), and rotated views (rotation + vertical flip).

Every operation is a pure function of (image, parameters). Randomness is
confined to event sampling, driven by a counter-based Philox generator
seeded per image from a stable blake2b hash, so augmentation output is
bit-identical across runs, platforms, and worker counts.

Images ("rasters") are numpy arrays of shape (height, width, 3), dtype
uint8, RGB. Wherever a real-valued channel is quantized back to 8 bits,
rounding is half-up.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import DatasetRecord

Raster = np.ndarray  # (height, width, 3) uint8, RGB


class ParameterError(ValueError):
    """A distortion parameter is outside its allowed range."""


class GeometryError(ValueError):
    """A distortion would produce a degenerate (empty) image."""


# Parameter ranges. Motion-blur kernels are restricted to odd sizes so the
# line kernel has a well-defined center pixel.
MOTION_KERNEL_MIN = 15
MOTION_KERNEL_MAX = 49
MOTION_ANGLES = (-45, 45)
DEFOCUS_RADII = {1: 3, 2: 4, 3: 6, 4: 8, 5: 10}
GAMMA_MIN = 0.5
GAMMA_MAX = 2.0
CROP_MAX_FRACTION = 0.2
CUTOUT_MIN_FRACTION = 0.1
CUTOUT_MAX_FRACTION = 0.5
ROTATION_MAX_DEGREES = 45.0
CUTOUT_FILL = (128, 128, 128)


class NoiseType(Enum):
    MOTION_BLUR = "motion_blur"
    DEFOCUS_BLUR = "defocus_blur"
    CONTRAST_BRIGHT = "contrast_bright"
    CONTRAST_DARK = "contrast_dark"
    CROP = "crop"
    CUTOUT = "cutout"
    ROTATION = "rotation"
    FLIP = "flip"


# Canonical order used by the cumulative-weight sampler.
_TYPE_ORDER = tuple(NoiseType)


def require_raster(img) -> Raster:
    """Validate an array as an RGB uint8 raster and return it."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ParameterError(f"raster must have shape (h, w, 3), got {arr.shape}")
    if arr.dtype != np.uint8:
        raise ParameterError(f"raster must be uint8, got {arr.dtype}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ParameterError("raster must be at least 1x1")
    return arr


def _quantize(values: np.ndarray) -> Raster:
    # Half-up rounding; inputs are convex combinations of 8-bit values.
    return np.clip(np.floor(values + 0.5), 0.0, 255.0).astype(np.uint8)


# ---------------------------------------------------------------------------
# Distortions
# ---------------------------------------------------------------------------

def crop(img: Raster, left: float, right: float, top: float, bottom: float) -> Raster:
    """Remove up to 20% of each side, keeping an exact sub-rectangle.

    The total number of removed columns (rows) is floor((left+right)*w)
    (floor((top+bottom)*h)); floor(left*w) of those come off the left edge
    and the remainder off the right, likewise for rows.
    """
    img = require_raster(img)
    for name, frac in (("left", left), ("right", right), ("top", top), ("bottom", bottom)):
        if not 0.0 <= frac <= CROP_MAX_FRACTION:
            raise ParameterError(
                f"crop fraction {name}={frac} outside [0, {CROP_MAX_FRACTION}]"
            )
    h, w = img.shape[:2]
    removed_w = math.floor((left + right) * w)
    removed_h = math.floor((top + bottom) * h)
    if w - removed_w < 1 or h - removed_h < 1:
        raise GeometryError(f"crop of {w}x{h} image leaves no pixels")
    x0 = math.floor(left * w)
    y0 = math.floor(top * h)
    return img[y0:y0 + h - removed_h, x0:x0 + w - removed_w].copy()


def rotate(img: Raster, degrees: float) -> Raster:
    """Rotate about the image center, bilinear, black fill outside.

    Output has the same dimensions as the input; each output pixel is
    inverse-mapped into the source and sampled bilinearly, with samples
    falling outside the source set to (0, 0, 0).
    """
    img = require_raster(img)
    if not -ROTATION_MAX_DEGREES <= degrees <= ROTATION_MAX_DEGREES:
        raise ParameterError(
            f"rotation {degrees} outside [-{ROTATION_MAX_DEGREES}, {ROTATION_MAX_DEGREES}]"
        )
    h, w = img.shape[:2]
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0

    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    dx = xs - cx
    dy = ys - cy
    sx = cos_t * dx + sin_t * dy + cx
    sy = -sin_t * dx + cos_t * dy + cy

    inside = (sx >= 0.0) & (sx <= w - 1) & (sy >= 0.0) & (sy <= h - 1)
    x0 = np.clip(np.floor(sx).astype(np.intp), 0, w - 1)
    y0 = np.clip(np.floor(sy).astype(np.intp), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - np.floor(sx))[..., None]
    fy = (sy - np.floor(sy))[..., None]

    src = img.astype(np.float64)
    top_edge = src[y0, x0] * (1.0 - fx) + src[y0, x1] * fx
    bottom_edge = src[y1, x0] * (1.0 - fx) + src[y1, x1] * fx
    out = _quantize(top_edge * (1.0 - fy) + bottom_edge * fy)
    out[~inside] = 0
    return out


def flip_vertical(img: Raster) -> Raster:
    """Mirror top-to-bottom: output row i is input row h-1-i."""
    return require_raster(img)[::-1].copy()


def motion_blur_kernel(kernel: int, angle: int) -> np.ndarray:
    """Normalized diagonal line kernel: +45 anti-diagonal, -45 main diagonal."""
    if kernel % 2 == 0 or not MOTION_KERNEL_MIN <= kernel <= MOTION_KERNEL_MAX:
        raise ParameterError(
            f"motion-blur kernel must be odd in [{MOTION_KERNEL_MIN}, "
            f"{MOTION_KERNEL_MAX}], got {kernel}"
        )
    if angle not in MOTION_ANGLES:
        raise ParameterError(f"motion-blur angle must be one of {MOTION_ANGLES}")
    weights = np.zeros((kernel, kernel), dtype=np.float64)
    idx = np.arange(kernel)
    if angle == 45:
        weights[idx, kernel - 1 - idx] = 1.0 / kernel
    else:
        weights[idx, idx] = 1.0 / kernel
    return weights


def defocus_kernel(severity: int) -> np.ndarray:
    """Normalized disk kernel; radius grows 3/4/6/8/10 with severity 1-5."""
    if severity not in DEFOCUS_RADII:
        raise ParameterError(f"defocus severity must be in [1, 5], got {severity}")
    radius = DEFOCUS_RADII[severity]
    span = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    mask = (dy * dy + dx * dx) <= radius * radius
    return mask / mask.sum()


def _kernel_offsets(weights: np.ndarray) -> list[tuple[int, int]]:
    size = weights.shape[0]
    center = size // 2
    ys, xs = np.nonzero(weights)
    return [(int(y) - center, int(x) - center) for y, x in zip(ys, xs)]


def _convolve_equal_weight(img: Raster, offsets: list[tuple[int, int]]) -> Raster:
    """Filter with an equal-weight sparse kernel by summing shifted copies.

    The accumulator adds uint8 values in float64, which stays exact below
    2**53, so the sum is independent of offset order, platform, and thread
    schedule. Borders are handled by edge replication.
    """
    h, w = img.shape[:2]
    ry = max(abs(dy) for dy, _ in offsets)
    rx = max(abs(dx) for _, dx in offsets)
    padded = np.pad(img.astype(np.float64), ((ry, ry), (rx, rx), (0, 0)), mode="edge")
    acc = np.zeros((h, w, 3), dtype=np.float64)
    for dy, dx in offsets:
        acc += padded[ry + dy:ry + dy + h, rx + dx:rx + dx + w]
    return _quantize(acc / len(offsets))


def motion_blur(img: Raster, kernel: int, angle: int) -> Raster:
    """Convolve with a diagonal line kernel (camera-shake streak)."""
    img = require_raster(img)
    return _convolve_equal_weight(img, _kernel_offsets(motion_blur_kernel(kernel, angle)))


def defocus_blur(img: Raster, severity: int) -> Raster:
    """Convolve with a disk kernel (out-of-focus lens)."""
    img = require_raster(img)
    return _convolve_equal_weight(img, _kernel_offsets(defocus_kernel(severity)))


def contrast(img: Raster, gamma: float) -> Raster:
    """Gamma-map every channel: v -> round(255 * (v/255)**gamma), half-up.

    gamma < 1 brightens (over-exposure), gamma > 1 darkens; 0 and 255 are
    fixed points for every gamma.
    """
    img = require_raster(img)
    if not GAMMA_MIN <= gamma <= GAMMA_MAX:
        raise ParameterError(f"gamma {gamma} outside [{GAMMA_MIN}, {GAMMA_MAX}]")
    lut = _quantize(255.0 * (np.arange(256, dtype=np.float64) / 255.0) ** gamma)
    return lut[img]


def cutout(img: Raster, frac_h: float, frac_w: float, pos_seed: int) -> Raster:
    """Fill one uniformly placed rectangle with mid-gray (128, 128, 128).

    The rectangle is floor(frac_h*h) by floor(frac_w*w) and lies fully
    inside the image; its position is drawn from a Philox stream keyed by
    ``pos_seed``, so the same seed always covers the same pixels.
    """
    img = require_raster(img)
    for name, frac in (("frac_h", frac_h), ("frac_w", frac_w)):
        if not CUTOUT_MIN_FRACTION <= frac <= CUTOUT_MAX_FRACTION:
            raise ParameterError(
                f"cutout {name}={frac} outside "
                f"[{CUTOUT_MIN_FRACTION}, {CUTOUT_MAX_FRACTION}]"
            )
    h, w = img.shape[:2]
    rect_h = math.floor(frac_h * h)
    rect_w = math.floor(frac_w * w)
    out = img.copy()
    if rect_h < 1 or rect_w < 1:
        return out
    rng = np.random.Generator(np.random.Philox(key=pos_seed))
    top = int(rng.integers(0, h - rect_h + 1))
    left = int(rng.integers(0, w - rect_w + 1))
    out[top:top + rect_h, left:left + rect_w] = CUTOUT_FILL
    return out


# ---------------------------------------------------------------------------
# Sampling distributions and events
# ---------------------------------------------------------------------------

# Crowdsourced flaw-frequency percentages for VizWiz-style photos
# (multi-label; the 0.8% "other" category is excluded). Blur splits evenly
# between motion and defocus, rotated views between rotation and flip.
_FLAW_SHARES = {
    "blur": 41.0,
    "bright": 5.3,
    "dark": 5.6,
    "framing": 55.6,
    "obscured": 3.6,
    "rotation": 17.5,
}

_WEIGHT_TOLERANCE = 1e-9


class DistributionKind(Enum):
    FREQUENT = "frequent"
    RANDOM = "random"
    ORIGINAL = "original"


@dataclass(frozen=True)
class NoiseDistribution:
    """A probability distribution over the eight noise types."""

    kind: DistributionKind
    weights: dict[NoiseType, float]

    def __post_init__(self):
        weights = {t: float(self.weights.get(t, 0.0)) for t in NoiseType}
        object.__setattr__(self, "weights", weights)
        if any(wgt < 0.0 for wgt in weights.values()):
            raise ParameterError("noise-type weights must be non-negative")
        total = sum(weights.values())
        if abs(total - 1.0) > _WEIGHT_TOLERANCE:
            raise ParameterError(f"noise-type weights sum to {total}, expected 1")

    @staticmethod
    def frequent() -> "NoiseDistribution":
        """Only the two most frequent flaw families: blur (50%, split
        between motion and defocus) and cut-out (50%)."""
        return NoiseDistribution(DistributionKind.FREQUENT, {
            NoiseType.MOTION_BLUR: 0.25,
            NoiseType.DEFOCUS_BLUR: 0.25,
            NoiseType.CUTOUT: 0.5,
        })

    @staticmethod
    def random() -> "NoiseDistribution":
        """All eight types equally likely (12.5% each)."""
        return NoiseDistribution(
            DistributionKind.RANDOM, {t: 0.125 for t in NoiseType}
        )

    @staticmethod
    def original() -> "NoiseDistribution":
        """Weights proportional to the observed real-flaw percentages."""
        total = sum(_FLAW_SHARES.values())
        share = {k: v / total for k, v in _FLAW_SHARES.items()}
        return NoiseDistribution(DistributionKind.ORIGINAL, {
            NoiseType.MOTION_BLUR: share["blur"] / 2.0,
            NoiseType.DEFOCUS_BLUR: share["blur"] / 2.0,
            NoiseType.CONTRAST_BRIGHT: share["bright"],
            NoiseType.CONTRAST_DARK: share["dark"],
            NoiseType.CROP: share["framing"],
            NoiseType.CUTOUT: share["obscured"],
            NoiseType.ROTATION: share["rotation"] / 2.0,
            NoiseType.FLIP: share["rotation"] / 2.0,
        })

    @staticmethod
    def of(kind: DistributionKind | str) -> "NoiseDistribution":
        kind = DistributionKind(kind)
        return {
            DistributionKind.FREQUENT: NoiseDistribution.frequent,
            DistributionKind.RANDOM: NoiseDistribution.random,
            DistributionKind.ORIGINAL: NoiseDistribution.original,
        }[kind]()


@dataclass(frozen=True)
class NoiseEvent:
    """One sampled distortion: type, concrete parameters, replay seed."""

    noise_type: NoiseType
    params: dict[str, float | int]
    seed: int

    def to_dict(self) -> dict:
        return {"type": self.noise_type.value, "params": dict(self.params),
                "seed": self.seed}

    @staticmethod
    def from_dict(obj: dict) -> "NoiseEvent":
        return NoiseEvent(NoiseType(obj["type"]), dict(obj["params"]),
                          int(obj["seed"]))


def _sample_params(noise_type: NoiseType, rng: np.random.Generator) -> dict:
    if noise_type is NoiseType.MOTION_BLUR:
        steps = (MOTION_KERNEL_MAX - MOTION_KERNEL_MIN) // 2 + 1
        return {
            "kernel": int(MOTION_KERNEL_MIN + 2 * rng.integers(0, steps)),
            "angle": int(MOTION_ANGLES[rng.integers(0, 2)]),
        }
    if noise_type is NoiseType.DEFOCUS_BLUR:
        return {"severity": int(rng.integers(1, 6))}
    if noise_type is NoiseType.CONTRAST_BRIGHT:
        # gamma in [0.5, 1): brightens
        return {"gamma": float(GAMMA_MIN + (1.0 - GAMMA_MIN) * rng.random())}
    if noise_type is NoiseType.CONTRAST_DARK:
        # gamma in (1, 2]: darkens
        return {"gamma": float(GAMMA_MAX - (GAMMA_MAX - 1.0) * rng.random())}
    if noise_type is NoiseType.CROP:
        fracs = CROP_MAX_FRACTION * rng.random(4)
        return {"left": float(fracs[0]), "right": float(fracs[1]),
                "top": float(fracs[2]), "bottom": float(fracs[3])}
    if noise_type is NoiseType.CUTOUT:
        span = CUTOUT_MAX_FRACTION - CUTOUT_MIN_FRACTION
        fracs = CUTOUT_MIN_FRACTION + span * rng.random(2)
        return {"frac_h": float(fracs[0]), "frac_w": float(fracs[1])}
    if noise_type is NoiseType.ROTATION:
        deg = -ROTATION_MAX_DEGREES + 2.0 * ROTATION_MAX_DEGREES * rng.random()
        return {"degrees": float(deg)}
    return {}  # FLIP


def sample_event(dist: NoiseDistribution, rng: np.random.Generator) -> NoiseEvent:
    """Draw a noise type per the distribution plus uniform type parameters.

    The event records its own 64-bit seed (drawn first) so that seeded
    sub-steps such as cutout placement replay identically.
    """
    event_seed = int(rng.integers(0, 1 << 64, dtype=np.uint64))
    u = float(rng.random())
    chosen = None
    acc = 0.0
    for noise_type in _TYPE_ORDER:
        weight = dist.weights[noise_type]
        if weight <= 0.0:
            continue
        acc += weight
        chosen = noise_type
        if u < acc:
            break
    if chosen is None:
        raise ParameterError("distribution has no positive weight")
    return NoiseEvent(chosen, _sample_params(chosen, rng), event_seed)


def apply_event(img: Raster, event: NoiseEvent) -> Raster:
    """Apply a sampled distortion; bit-identical for identical inputs."""
    p = event.params
    t = event.noise_type
    if t is NoiseType.MOTION_BLUR:
        return motion_blur(img, int(p["kernel"]), int(p["angle"]))
    if t is NoiseType.DEFOCUS_BLUR:
        return defocus_blur(img, int(p["severity"]))
    if t in (NoiseType.CONTRAST_BRIGHT, NoiseType.CONTRAST_DARK):
        return contrast(img, float(p["gamma"]))
    if t is NoiseType.CROP:
        return crop(img, float(p["left"]), float(p["right"]),
                    float(p["top"]), float(p["bottom"]))
    if t is NoiseType.CUTOUT:
        return cutout(img, float(p["frac_h"]), float(p["frac_w"]), event.seed)
    if t is NoiseType.ROTATION:
        return rotate(img, float(p["degrees"]))
    if t is NoiseType.FLIP:
        return flip_vertical(img)
    raise ParameterError(f"unknown noise type {t}")


# ---------------------------------------------------------------------------
# Dataset augmentation
# ---------------------------------------------------------------------------

def per_image_seed(seed: int, image_id: str) -> int:
    """Stable 64-bit stream key for one image: blake2b(seed || image_id)."""
    digest = hashlib.blake2b(digest_size=8)
    digest.update(int(seed).to_bytes(8, "little"))
    digest.update(image_id.encode("utf-8"))
    return int.from_bytes(digest.digest(), "little")


def per_image_rng(seed: int, image_id: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=per_image_seed(seed, image_id)))


def load_raster(path: str | Path) -> Raster:
    """Read a PNG or JPEG file as an RGB raster."""
    with Image.open(path) as im:
        if im.format not in ("PNG", "JPEG"):
            raise ParameterError(f"{path}: unsupported image format {im.format}")
        return np.asarray(im.convert("RGB"))


def save_png(img: Raster, path: str | Path) -> None:
    Image.fromarray(require_raster(img), mode="RGB").save(path, format="PNG")


_SAFE_NAME = re.compile(r"[^A-Za-z0-9._-]")


def _output_name(image_id: str) -> str:
    safe = _SAFE_NAME.sub("_", image_id)
    if safe != image_id:
        # Disambiguate ids that collide after sanitization.
        safe += "-" + hashlib.blake2b(image_id.encode("utf-8"), digest_size=4).hexdigest()
    return safe + ".png"


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    event: NoiseEvent
    output: str

    def to_dict(self) -> dict:
        return {"image_id": self.image_id, **self.event.to_dict(),
                "output": self.output}

    @staticmethod
    def from_dict(obj: dict) -> "ManifestEntry":
        return ManifestEntry(obj["image_id"], NoiseEvent.from_dict(obj),
                             obj["output"])


@dataclass(frozen=True)
class AugmentManifest:
    """Replayable record of one augmentation run."""

    seed: int
    distribution: DistributionKind
    events: tuple[ManifestEntry, ...]
    errors: tuple[dict, ...] = ()

    def to_dict(self) -> dict:
        doc = {
            "seed": self.seed,
            "distribution": self.distribution.value,
            "events": [entry.to_dict() for entry in self.events],
        }
        if self.errors:
            doc["errors"] = [dict(err) for err in self.errors]
        return doc

    @staticmethod
    def from_dict(obj: dict) -> "AugmentManifest":
        return AugmentManifest(
            seed=int(obj["seed"]),
            distribution=DistributionKind(obj["distribution"]),
            events=tuple(ManifestEntry.from_dict(e) for e in obj["events"]),
            errors=tuple(obj.get("errors", ())),
        )

    def type_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for entry in self.events:
            key = entry.event.noise_type.value
            counts[key] = counts.get(key, 0) + 1
        return counts


def load_manifest(path: str | Path) -> AugmentManifest:
    return AugmentManifest.from_dict(
        json.loads(Path(path).read_text(encoding="utf-8"))
    )


def augment_dataset(records: list[DatasetRecord], dist: NoiseDistribution,
                    seed: int, out_dir: str | Path, *,
                    images_root: str | Path | None = None,
                    workers: int = 1) -> AugmentManifest:
    """Distort every record's image once and write PNGs plus a manifest.

    Each image gets its own Philox stream keyed by (seed, image_id), so the
    manifest and the written PNGs do not depend on iteration order or on
    ``workers``. Unreadable images become error entries and processing
    continues; an unwritable ``out_dir`` is fatal.
    """
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    root = Path(images_root) if images_root is not None else None

    def process(record: DatasetRecord) -> ManifestEntry | dict:
        if record.image_path is None:
            return {"image_id": record.image_id, "error": "record has no image file"}
        src = root / record.image_path if root is not None else Path(record.image_path)
        try:
            img = load_raster(src)
        except (OSError, ParameterError) as exc:
            return {"image_id": record.image_id, "error": str(exc)}
        rng = per_image_rng(seed, record.image_id)
        event = sample_event(dist, rng)
        distorted = apply_event(img, event)
        name = _output_name(record.image_id)
        save_png(distorted, out_path / name)
        return ManifestEntry(record.image_id, event, name)

    if workers <= 1:
        results = [process(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(process, records))

    events = tuple(r for r in results if isinstance(r, ManifestEntry))
    errors = tuple(r for r in results if isinstance(r, dict))
    manifest = AugmentManifest(seed=int(seed), distribution=dist.kind,
                               events=events, errors=errors)
    (out_path / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return manifest


def augmented_records(records: list[DatasetRecord],
                      manifest: AugmentManifest) -> list[DatasetRecord]:
    """Records for the distorted copies, inheriting the original captions."""
    by_id = {r.image_id: r for r in records}
    out = []
    for entry in manifest.events:
        original = by_id[entry.image_id]
        out.append(DatasetRecord(
            image_id=f"{original.image_id}-aug",
            captions=original.captions,
            image_path=entry.output,
        ))
    return out
