"""Score a tiny hand-written corpus with every caption metric.

Shows per-image BLEU-1..4, ROUGE-L, and CIDEr-D on a four-image corpus,
then digs into the edit-distance alignment that powers word-level
accuracy: which reference was chosen, the error rate, and which generated
words count as correct.
"""

from qacap import metrics

corpus_raw = [
    # (generated caption, reference captions)
    ("a green can of soda on the table",
     ["a green can of soda on the table",
      "a 12 oz green can of ginger ale"]),
    ("a white bottle with black text",
     ["the back side of a white pill bottle and black font",
      "a white medicine bottle on a counter"]),
    ("a remote control on a counter top",
     ["a small portion of a gray remote on a light desktop",
      "a gray remote control lying on a desk"]),
    ("some kind of fabric",
     ["microwavable dinner package that looks like spaghetti",
      "a close up photo of a food package"]),
]

corpus = [
    (metrics.tokenize(hyp), [metrics.tokenize(r) for r in refs])
    for hyp, refs in corpus_raw
]

cider = metrics.cider_d(corpus)
header = f"{'image':>6} {'B1':>7} {'B2':>7} {'B3':>7} {'B4':>7} {'ROUGE':>7} {'CIDEr':>7}"
print(header)
print("-" * len(header))
for i, (hyp, refs) in enumerate(corpus):
    row = [metrics.bleu(hyp, refs, n) for n in range(1, 5)]
    row.append(metrics.rouge_l(hyp, refs))
    cells = " ".join(f"{100 * v:7.2f}" for v in row)
    print(f"{i:>6} {cells} {100 * cider.per_image[i]:7.2f}")
print(f"\ncorpus CIDEr-D (x100): {100 * cider.mean:.2f}")

print("\nword-level alignment against the closest reference:")
for i, (hyp, refs) in enumerate(corpus):
    result = metrics.ter_align(hyp, refs)
    marked = " ".join(
        tok if ok else f"*{tok}*"
        for tok, ok in zip(hyp, result.per_word_correct)
    )
    print(f"  image {i}: TER={result.ter:.3f} "
          f"(ref #{result.chosen_ref_index}, {result.edits} edits)")
    print(f"           {marked}")
print("\n(*word* marks tokens no minimal alignment can match)")
