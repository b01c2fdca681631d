#!/usr/bin/env python3
# The five automatic metrics: embedding Average / Extrema / Greedy between
# responses and references, plus Dist-1 / Dist-2 over the response pool.

import numpy as np

from csrr.metrics import (
    EmbeddingTable,
    distinct_n,
    embedding_average,
    embedding_extrema,
    embedding_greedy,
    evaluate_pairs,
)

# tiny 2-D table so the geometry is easy to see
table = EmbeddingTable(
    vectors={
        "cat": np.array([1.0, 0.0]),
        "kitten": np.array([0.9, 0.1]),
        "dog": np.array([0.0, 1.0]),
        "puppy": np.array([0.1, 0.9]),
        "car": np.array([-1.0, 0.0]),
    },
    dim=2,
)

pairs = [
    (["the", "cat"], ["kitten"]),        # near-synonyms ("the" is OOV and skipped)
    (["dog"], ["puppy"]),
    (["car"], ["cat"]),                  # opposite direction
]
for resp, ref in pairs:
    print(f"resp {resp} vs ref {ref}:")
    print(f"    average {embedding_average(resp, ref, table):+.3f}"
          f"  extrema {embedding_extrema(resp, ref, table):+.3f}"
          f"  greedy {embedding_greedy(resp, ref, table):+.3f}")

responses = [["a", "b"], ["a", "c"], ["a", "b"]]
print(f"\nDist-1 of {responses}: {distinct_n(responses, 1):.3f} "
      f"(unique unigrams / total unigrams)")
print(f"Dist-2 of {responses}: {distinct_n(responses, 2):.3f}")

report = evaluate_pairs([r for r, _ in pairs], [g for _, g in pairs], table)
print("\ncorpus report:")
print(report.format_table())
print("excluded pairs per metric:", report.excluded)
