"""Four clustering models on synthetic blobs, automatic k, then majority voting.

Run: python demos/02_cluster_and_vote.py
"""
import itertools

import numpy as np

from campaign_lens.cluster import DistanceMatrix, evaluate_k_range
from campaign_lens.consensus import consensus

rng = np.random.default_rng(7)
centers = np.array([[0, 0, 0], [5, 5, 0], [0, 6, 6]], float)
truth = np.repeat([1, 2, 3], 40)
x = centers[truth - 1] + rng.normal(scale=0.9, size=(len(truth), 3))
x = (x - x.mean(0)) / x.std(0)

# every column is continuous here, so Gower reduces to range-normalized mean L1
span = x.max(0) - x.min(0)
gower = DistanceMatrix((np.abs(x[:, None, :] - x[None, :, :]) / span).mean(axis=2), "gower")

report, fits = evaluate_k_range(x, gower, range(2, 7), seed=40)
print("silhouette by model and k")
for model, curve in report.silhouette.items():
    row = "  ".join(f"k={k}:{s:.3f}" for k, s in curve.items())
    print(f"  {model:<13} {row}   -> {report.chosen[model]}")
print("selected k:", report.consensus_k)

alignment, votes, result = consensus(fits[report.consensus_k], seed=40)
for model, mapping in alignment.maps.items():
    print(f"  {model:<13} relabel {mapping}")
unanimous = (votes.V.max(axis=1) == votes.m).mean()
print(f"unanimous rows: {unanimous:.0%}, tie rows: {len(result.tie_rows)}")

# cluster ids are arbitrary, so score against the generating blobs under the best relabeling
best = max(np.mean(np.array(p)[truth - 1] == result.final_labels)
           for p in itertools.permutations(range(1, report.consensus_k + 1)))
print(f"agreement with the generating blobs: {best:.1%}")
