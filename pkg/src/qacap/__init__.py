"""qacap: quality-agnostic captioning toolkit.

A numpy-based library for evaluating image captioning systems on
low-quality photographs: deterministic synthetic-noise augmentation,
dual-branch consistency-loss mathematics with verified gradients,
caption quality metrics (BLEU, ROUGE-L, CIDEr-D), edit-distance word
alignment, and confidence-calibration analysis (ECE, reliability bins).
"""

__version__ = "0.1.0"
