#!/usr/bin/env python3
"""Estimating how many clusters to look for.

Over-cluster with twice the guessed count, then drop every cluster smaller
than N / K'. Real classes keep their mass and survive; surplus centroids end
up owning small splinters that fall under the threshold.
"""

import numpy as np

from kcod.cluster import estimate_k, kmeans, survivor_count
from kcod.data import ROLE_IND, Dataset, SplitSpec, split_ind_ood

print("hand example: N=100 points, K'=10, threshold 100/10 = 10")
sizes = [30, 25, 20, 15, 4, 3, 2, 1, 0, 0]
print(f"cluster sizes {sizes} -> {survivor_count(sizes, 10.0)} survive\n")

DIM, CLASSES, PER_CLASS = 16, 10, 100

for seed in (0, 1, 2):
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(DIM, DIM)))
    sub = basis[:, :5]
    low = rng.normal(size=(CLASSES, 5))
    low /= np.linalg.norm(low, axis=1, keepdims=True)
    centers = (low * 10.0) @ sub.T

    # tight cores plus a few wide-halo points that soak up surplus centroids
    feats, labels = [], []
    for c in range(CLASSES):
        feats.append(centers[c] + rng.normal(0.0, 1.0, size=(PER_CLASS - 8, DIM)))
        feats.append(centers[c] + rng.normal(0.0, 6.0, size=(8, DIM)))
        labels.extend([c] * PER_CLASS)
    data = Dataset(ids=[f"s{i:05d}" for i in range(CLASSES * PER_CLASS)],
                   features=np.vstack(feats), labels=np.asarray(labels),
                   roles=[ROLE_IND] * (CLASSES * PER_CLASS))

    _, ood = split_ind_ood(data, SplitSpec(total_classes=CLASSES, ood_ratio=0.5, seed=seed))
    true_c = int(ood.class_labels().size)
    k_prime = 2 * true_c
    run = kmeans(ood.features, k_prime, seed=0)
    sizes = sorted(np.bincount(run.assignments, minlength=k_prime).tolist(), reverse=True)
    est = estimate_k(ood.features, k_prime, seed=0)
    print(f"seed {seed}: true {true_c}, over-clustered sizes {sizes}")
    print(f"         threshold {len(ood)}/{k_prime} = {len(ood) / k_prime:.0f} "
          f"-> estimate {est}")
