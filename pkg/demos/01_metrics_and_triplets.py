"""
Metrics, triplets and a single base learner
===========================================

A metric here is a matrix M.  As a distance it scores a pair by
(x - y)^T M (x - y); as a bilinear similarity it scores x^T M y.
Learning M means pushing same-class pairs closer than different-class pairs,
one triplet (anchor, positive, negative) at a time.
"""

import numpy as np

from lifelong_metric import (
    BaseLearnerConfig,
    LabeledDataset,
    MetricMatrix,
    aggregate_gradient,
    batch_distance_fit,
    knn_error,
    mine_triplets,
    oasis_fit,
    stratified_split,
)

rng = np.random.default_rng(0)

# two classes that differ only along the first axis; the other 9 axes are noise.
# The 0.3 scale keeps pair distances near the unit margin of the hinge loss.
n = 60
y = np.repeat([0, 1], n)
X = rng.normal(size=(2 * n, 10))
X[:, 0] = 0.4 * rng.normal(size=2 * n) + y
X *= 0.3
data = LabeledDataset(X, y, "toy")
train, _, test = stratified_split(data, (0.5, 0.0, 0.5), seed=0)

identity = MetricMatrix(np.eye(10))
print("Euclidean 3-NN error:", knn_error(identity, train, test))

# Triplets: each anchor's 3 nearest same-class points, 10 random impostors each
T = mine_triplets(train, neighbors_per_anchor=3, impostors_per_pair=10, seed=0)
print(len(T), "triplets, first rows:\n", T.triplets[:3])

# The summed hinge subgradient tells us which way to move M
g = aggregate_gradient(identity, T, train)
print(f"{g.triplet_count} active triplets; gradient diagonal (first 4):", np.round(np.diag(g.delta)[:4], 2))

# Batch subgradient descent on the distance form
dist = batch_distance_fit(train, T, BaseLearnerConfig(kind="distance", iterations=1000, batch_step=0.05))
print("learned distance, 3-NN error:", knn_error(dist, train, test))
print("weight on the informative axis vs. the mean of the rest:",
      round(dist.values[0, 0], 2), round(np.mean(np.diag(dist.values)[1:]), 2))

# Online passive-aggressive updates on the similarity form
sim = oasis_fit(train, T, BaseLearnerConfig(kind="similarity", iterations=5000, C=0.1, seed=0))
print("learned similarity, 3-NN error:", knn_error(sim, train, test))
