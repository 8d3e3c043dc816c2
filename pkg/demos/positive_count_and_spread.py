#!/usr/bin/env python3
"""Few positives vs all positives: what happens to intra-class spread.

Pre-trains the encoder twice on the same labeled split. The first run pulls
each anchor toward only its 3 nearest same-class queue entries; the second
uses a k large enough to cover the whole queue, which is the all-positives
supervised contrastive limit. The all-positives run squeezes classes much
tighter, and the tighter features transfer worse to clustering the held-out
classes.
"""

import numpy as np

from kcod.cluster import kmeans
from kcod.data import ROLE_IND, Dataset, SplitSpec, split_ind_ood
from kcod.encoder import EncoderModel, forward_batch
from kcod.metrics import clustering_accuracy, intra_inter_distances
from kcod.pretrain import KclConfig, pretrain

CLASSES, PER_CLASS, DIM, SUB = 10, 100, 16, 5
SEED = 0


def benchmark(seed):
    # centers share a 5-dim subspace; the complement carries stronger noise
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(DIM, DIM)))
    sub, comp = basis[:, :SUB], basis[:, SUB:]
    low = rng.normal(size=(CLASSES, SUB))
    low /= np.linalg.norm(low, axis=1, keepdims=True)
    centers = (low * 4.0) @ sub.T
    n = CLASSES * PER_CLASS
    labels = np.repeat(np.arange(CLASSES), PER_CLASS)
    feats = (centers[labels]
             + rng.normal(0.0, 1.0, size=(n, SUB)) @ sub.T
             + rng.normal(0.0, 2.5, size=(n, DIM - SUB)) @ comp.T)
    return Dataset(ids=[f"s{i:05d}" for i in range(n)], features=feats,
                   labels=labels, roles=[ROLE_IND] * n)


def run(ind, ood, k):
    model = EncoderModel.init(input_dim=DIM, cluster_count=2,
                              ind_class_count=int(ind.class_labels().size),
                              dropout_rate=0.6, seed=SEED)
    model, log = pretrain(model, ind, epochs=50, batch_size=64,
                          config=KclConfig(k=k), seed=SEED)
    intra, inter = intra_inter_distances(forward_batch(model, ind.features).f, ind.labels)
    c = int(ood.class_labels().size)
    f_ood = forward_batch(model, ood.features).f
    acc = clustering_accuracy(kmeans(f_ood, c, seed=0).assignments, ood.labels)
    return intra, inter, acc, log[-1]


data = benchmark(SEED)
ind, ood = split_ind_ood(data, SplitSpec(total_classes=CLASSES, ood_ratio=0.5, seed=SEED))
print(f"labeled classes: {sorted(ind.class_labels().tolist())}")
print(f"held-out classes: {sorted(ood.class_labels().tolist())}\n")

for k, name in ((3, "3 nearest positives"), (640, "all positives")):
    intra, inter, acc, last = run(ind, ood, k)
    print(f"{name:>20}: intra {intra:.4f}  inter {inter:.4f}  "
          f"held-out kmeans acc {acc:.4f}  (final ce {last.ce_loss:.4f})")

print("\nThe 3-positive run keeps classes looser (larger intra) and clusters")
print("the unseen classes better. Collapsing every class to a point is easy")
print("to overfit and transfers poorly.")
