"""Compare a well-calibrated and an over-confident synthetic captioner.

Generates predictions for 60 images where model A's confidence tracks its
actual word accuracy and model B reports high confidence regardless.
Runs the word-scoring + ECE pipeline on both, prints the reliability
tables, and writes reliability-diagram SVGs.
"""

import pathlib

import numpy as np

from qacap.calibration import ece, score_predictions
from qacap.cli import render_reliability_svg
from qacap.dataset import DatasetRecord, PredictedCaption

rng = np.random.default_rng(23)
out_dir = pathlib.Path("demo_output")
out_dir.mkdir(exist_ok=True)

WORDS = ["bottle", "can", "table", "label", "green", "white", "remote",
         "food", "package", "counter"]

records = []
model_a, model_b = [], []
for i in range(60):
    ref = [WORDS[k] for k in rng.integers(0, len(WORDS), size=6)]
    records.append(DatasetRecord(f"img{i}", (" ".join(ref),)))

    # each generated word is correct with probability p_true
    tokens, probs_a, probs_b = [], [], []
    for j in range(6):
        p_true = float(rng.uniform(0.2, 0.95))
        correct = rng.random() < p_true
        tokens.append(ref[j] if correct else "wrong")
        probs_a.append(round(p_true, 3))            # honest confidence
        probs_b.append(round(0.75 + 0.24 * rng.random(), 3))  # always confident
    model_a.append(PredictedCaption(f"img{i}", tuple(tokens), tuple(probs_a)))
    model_b.append(PredictedCaption(f"img{i}", tuple(tokens), tuple(probs_b)))

for label, preds in (("honest", model_a), ("overconfident", model_b)):
    words, _ = score_predictions(records, preds)
    report = ece(words, m=10)
    print(f"\nmodel {label!r}: n={report.n} words, ECE = {report.ece:.4f}")
    print(f"  {'bin':>12} {'count':>6} {'conf':>7} {'acc':>7}")
    for b in report.bins:
        if not b.count:
            continue
        print(f"  ({b.lo:.1f}, {b.hi:.1f}] {b.count:>6} "
              f"{b.mean_confidence:7.3f} {b.accuracy:7.3f}")
    svg_path = out_dir / f"reliability_{label}.svg"
    svg_path.write_text(render_reliability_svg(report), encoding="utf-8")
    print(f"  wrote {svg_path}")

print("\nThe honest model's per-bin accuracy tracks its confidence, so its "
      "ECE is small; the over-confident model concentrates mass in the top "
      "bins where accuracy falls far short of confidence.")
