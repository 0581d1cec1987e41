"""Shared fixtures: synthetic datasets, images, and prediction files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from qacap.noise import save_png


def make_raster(rng: np.random.Generator, height: int = 24, width: int = 32) -> np.ndarray:
    return rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)


def write_dataset(path: Path, entries: list[dict]) -> Path:
    path.write_text(json.dumps({"images": entries}, indent=2), encoding="utf-8")
    return path


def write_predictions(path: Path, rows: list[dict]) -> Path:
    path.write_text(
        "".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8"
    )
    return path


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


@pytest.fixture
def image_corpus(tmp_path, rng):
    """A small on-disk dataset: 12 PNG images with captions, plus JSON."""
    captions_pool = [
        "a green can of soda on a table",
        "the back of a white pill bottle",
        "a person holding a package of food",
        "a blurry photo of a remote control",
        "a close up of some kind of fabric",
    ]
    entries = []
    for i in range(12):
        name = f"img{i:02d}.png"
        save_png(make_raster(rng), tmp_path / name)
        count = (i % 5) + 1
        entries.append({
            "id": f"img{i:02d}",
            "file": name,
            "captions": captions_pool[:count],
        })
    dataset_path = write_dataset(tmp_path / "dataset.json", entries)
    return {"root": tmp_path, "dataset": dataset_path, "entries": entries}
