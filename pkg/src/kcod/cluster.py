"""Unlabeled clustering stage over two dropout views of each batch.

Three trainable objectives on the encoder's two heads:
  - cluster-level contrast between probability-matrix columns (each column of
    the N x C assignment matrix acts as one cluster's representation),
  - plain instance-level contrast over the 2N views (ablation baseline),
  - KNN-guided instance contrast (KCC) whose negatives are first purged of
    probable same-cluster views (probability dot product below a threshold
    survives) and then cut to the nearest K in instance-feature space,
plus a batch-entropy regularizer against the all-one-cluster solution.
Inference is a plain argmax over cluster probabilities, no k-means.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .contrast import contrastive_terms, cosine_rows, cosine_rows_backward, stable_top_k
from .data import Dataset
from .encoder import (
    AdamState,
    EncoderModel,
    accumulate_grads,
    adam_step,
    backward,
    forward,
    forward_batch,
    two_views_batch,
)
from .errors import MetricUndefinedError, ParameterError
from .metrics import silhouette
from .numerics import as_mat64

CLUSTER_MODES = ("kcod", "kcod_wo_kcc", "instance_only", "cluster_only")


@dataclass
class KccConfig:
    threshold: float = 0.7
    k_neg: int = 400  # effective value is min(k_neg, candidates available)
    tau: float = 0.5
    tau_clu: float = 1.0
    reg_weight: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ParameterError(f"threshold must be in (0,1), got {self.threshold}")
        if self.k_neg < 1:
            raise ParameterError(f"k_neg must be >= 1, got {self.k_neg}")
        if self.tau <= 0 or self.tau_clu <= 0:
            raise ParameterError("temperatures must be positive")


@dataclass
class ClusterBatchState:
    """Two views of one batch: stacked instance features and both probability matrices.

    f_views rows 0..N-1 are the original view, N..2N-1 the augmented one, so
    view i and view (i + N) mod 2N describe the same sample.
    """

    f_views: np.ndarray  # (2N, F) unit rows
    g_a: np.ndarray  # (N, C) rows sum to 1
    g_b: np.ndarray  # (N, C)

    def __post_init__(self):
        self.f_views = as_mat64(self.f_views)
        self.g_a = as_mat64(self.g_a)
        self.g_b = as_mat64(self.g_b)
        n = self.g_a.shape[0]
        if self.g_b.shape != self.g_a.shape:
            raise ParameterError("the two probability matrices must share a shape")
        if self.f_views.shape[0] != 2 * n:
            raise ParameterError(
                f"expected {2 * n} feature views, got {self.f_views.shape[0]}"
            )

    @property
    def n(self) -> int:
        return self.g_a.shape[0]

    @property
    def c(self) -> int:
        return self.g_a.shape[1]

    def g_all(self) -> np.ndarray:
        """(2N, C) probabilities in the same view order as f_views."""
        return np.vstack([self.g_a, self.g_b])

    def columns(self) -> np.ndarray:
        """(2C, N) cluster representations: columns of both probability matrices."""
        return np.vstack([self.g_a.T, self.g_b.T])

    def partner(self, i: int) -> int:
        return (i + self.n) % (2 * self.n)


def _pair_contrast(sims: np.ndarray, half: int, tau: float) -> tuple[float, np.ndarray]:
    """Mean contrastive loss over all rows of a 2*half similarity matrix.

    Row i's positive is row (i + half) mod 2*half; every other off-diagonal
    entry is a negative. Returns the loss and d(loss)/d(sims) with zero
    diagonal.
    """
    m = 2 * half
    loss = 0.0
    d_sims = np.zeros_like(sims)
    for i in range(m):
        j = (i + half) % m
        negs = np.asarray([k for k in range(m) if k != i and k != j])
        li, d_pos, d_neg = contrastive_terms(float(sims[i, j]), sims[i, negs], tau)
        loss += li / m
        d_sims[i, j] += d_pos / m
        d_sims[i, negs] += d_neg / m
    return loss, d_sims


def cluster_level_loss(state: ClusterBatchState, tau_clu: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Contrast the 2C cluster columns; a column's positive is its other-view twin.

    Cosine similarity, denominator over the 2C-1 other columns, mean over the
    2C anchors. Returns gradients for both probability matrices.
    """
    if state.c < 2:
        raise ParameterError(f"need at least 2 clusters, got {state.c}")
    cols = state.columns()
    sims, cache = cosine_rows(cols)
    loss, d_sims = _pair_contrast(sims, state.c, tau_clu)
    d_cols = cosine_rows_backward(cache, d_sims)
    return loss, d_cols[: state.c].T, d_cols[state.c :].T


def instance_level_loss(state: ClusterBatchState, tau: float) -> tuple[float, np.ndarray]:
    """Plain 2N-view contrast: positive = own other view, negatives = everyone else."""
    if state.n < 2:
        raise ParameterError(f"need at least 2 samples, got {state.n}")
    sims, cache = cosine_rows(state.f_views)
    loss, d_sims = _pair_contrast(sims, state.n, tau)
    return loss, cosine_rows_backward(cache, d_sims)


def filter_false_negatives(i: int, g_all: np.ndarray, threshold: float) -> np.ndarray:
    """Views whose cluster-probability dot product with view i stays below threshold.

    A high dot product means the two views are probably the same cluster, so
    such views are dropped from i's negative pool rather than pushed away.
    Returns ascending indices; i itself is never a candidate.
    """
    g_all = as_mat64(g_all)
    sims = g_all @ g_all[int(i)]
    keep = sims < threshold
    keep[int(i)] = False
    return np.where(keep)[0]


def knn_hard_negatives(
    anchor_f: np.ndarray, features: np.ndarray, candidates: np.ndarray, k_neg: int
) -> np.ndarray:
    """The k_neg candidates most cosine-similar to the anchor, ties by lower index."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0:
        return candidates
    a = np.asarray(anchor_f, dtype=np.float64)
    rows = as_mat64(features)[candidates]
    sims = rows @ a / (np.linalg.norm(rows, axis=1) * np.linalg.norm(a))
    return candidates[stable_top_k(sims, k_neg)]


@dataclass
class HardNegativeSet:
    """Anchor's contrast set: selected hard negatives plus its augmented positive."""

    anchor: int
    positive: int
    negatives: np.ndarray

    def __post_init__(self):
        self.negatives = np.asarray(self.negatives, dtype=np.int64)
        if self.anchor in self.negatives or self.positive in self.negatives:
            raise ParameterError("anchor and positive may not appear as negatives")

    def members(self) -> np.ndarray:
        return np.concatenate([[self.positive], self.negatives])


def build_hard_negative_set(state: ClusterBatchState, i: int, config: KccConfig) -> HardNegativeSet:
    """Threshold-filter the other views, then keep the k_neg nearest in f-space."""
    j = state.partner(i)
    candidates = filter_false_negatives(i, state.g_all(), config.threshold)
    candidates = candidates[candidates != j]
    selected = knn_hard_negatives(state.f_views[i], state.f_views, candidates, config.k_neg)
    return HardNegativeSet(anchor=i, positive=j, negatives=selected)


def kcc_loss(state: ClusterBatchState, config: KccConfig) -> tuple[float, np.ndarray]:
    """Instance contrast against the filtered-and-mined hard negative sets.

    Anchors whose negative set comes out empty contribute 0. The negative
    selection acts as a constant: gradients flow only through the cosine
    similarities that remain in play, and only to the instance features.
    """
    m = 2 * state.n
    sims, cache = cosine_rows(state.f_views)
    loss = 0.0
    d_sims = np.zeros_like(sims)
    for i in range(m):
        hard = build_hard_negative_set(state, i, config)
        j = hard.positive
        li, d_pos, d_neg = contrastive_terms(float(sims[i, j]), sims[i, hard.negatives], config.tau)
        loss += li / m
        d_sims[i, j] += d_pos / m
        d_sims[i, hard.negatives] += d_neg / m
    return loss, cosine_rows_backward(cache, d_sims)


def entropy_regularizer(g_matrix: np.ndarray) -> tuple[float, np.ndarray]:
    """Penalty log C + sum_c p_c log p_c on the column-mean assignment distribution.

    Zero when every cluster receives equal mass, log C when one cluster
    absorbs everything (0 log 0 taken as 0).
    """
    g = as_mat64(g_matrix)
    m, c = g.shape
    p_bar = g.mean(axis=0)
    nz = p_bar > 0
    penalty = float(np.log(c) + np.sum(p_bar[nz] * np.log(p_bar[nz])))
    d_bar = np.zeros(c)
    d_bar[nz] = np.log(p_bar[nz]) + 1.0
    return penalty, np.tile(d_bar / m, (m, 1))


@dataclass
class ClusterEpoch:
    epoch: int
    clu_loss: float
    instance_loss: float  # KCC in mode kcod, plain instance contrast otherwise
    reg: float
    sc: float  # NaN when the epoch's assignment collapsed to one cluster


def assign(model: EncoderModel, x: np.ndarray) -> int:
    """Cluster id by argmax over cluster probabilities; ties to the lowest id."""
    _, _, g, _ = forward(model, x)
    return int(np.argmax(g))


def assign_batch(model: EncoderModel, x: np.ndarray) -> np.ndarray:
    out = forward_batch(model, as_mat64(x))
    return np.argmax(out.g, axis=1).astype(np.int64)


def _epoch_assignments(model: EncoderModel, features: np.ndarray, mode: str, seed: int) -> np.ndarray:
    if mode == "instance_only":  # untouched cluster head: fall back to k-means on f
        out = forward_batch(model, features)
        return kmeans(out.f, model.cluster_count, seed=seed).assignments
    return assign_batch(model, features)


def cluster_train(
    model: EncoderModel,
    ood_dataset: Dataset,
    epochs: int,
    batch_size: int,
    config: KccConfig,
    seed: int,
    mode: str = "kcod",
    learning_rate: float = 3e-3,
) -> tuple[EncoderModel, list[ClusterEpoch]]:
    """Train on unlabeled data and keep the epoch checkpoint with the best silhouette.

    Modes: kcod = column contrast + KCC + regularizer; kcod_wo_kcc swaps KCC
    for the plain instance contrast; instance_only and cluster_only drop one
    head entirely. Deterministic under seed. Labels in the dataset are never
    read here.
    """
    if mode not in CLUSTER_MODES:
        raise ParameterError(f"mode must be one of {CLUSTER_MODES}, got '{mode}'")
    if epochs < 0:
        raise ParameterError("epochs must be >= 0")
    if batch_size < 2:
        raise ParameterError("batch_size must be >= 2")
    if model.cluster_count < 2:
        raise ParameterError("model needs a cluster head with >= 2 clusters")

    x = ood_dataset.features
    n = len(ood_dataset)
    rng = np.random.default_rng(seed)
    adam = AdamState(learning_rate=learning_rate)
    log: list[ClusterEpoch] = []
    best_sc = -np.inf
    best_model: EncoderModel | None = None
    use_cluster_route = mode in ("kcod", "kcod_wo_kcc", "cluster_only")
    use_instance_route = mode in ("kcod", "kcod_wo_kcc", "instance_only")

    for epoch in range(epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)  # clu, instance, reg
        batches = 0
        for lo in range(0, n, batch_size):
            batch = order[lo : lo + batch_size]
            if batch.size < 2:
                continue  # a stray single sample cannot form a contrast pair
            view_seed = int(rng.integers(0, 2**63 - 1))
            out_a, out_b = two_views_batch(model, x[batch], view_seed)
            state = ClusterBatchState(
                f_views=np.vstack([out_a.f, out_b.f]), g_a=out_a.g, g_b=out_b.g
            )
            nb = state.n
            d_f = np.zeros_like(state.f_views)
            d_g_a = np.zeros_like(state.g_a)
            d_g_b = np.zeros_like(state.g_b)
            clu_val = ins_val = reg_val = 0.0
            if use_cluster_route:
                clu_val, dga, dgb = cluster_level_loss(state, config.tau_clu)
                d_g_a += dga
                d_g_b += dgb
                reg_val, d_g_stack = entropy_regularizer(state.g_all())
                d_g_a += config.reg_weight * d_g_stack[:nb]
                d_g_b += config.reg_weight * d_g_stack[nb:]
            if use_instance_route:
                if mode == "kcod":
                    ins_val, d_fv = kcc_loss(state, config)
                else:
                    ins_val, d_fv = instance_level_loss(state, config.tau)
                d_f += d_fv
            grads = backward(
                model,
                out_a,
                d_f=d_f[:nb] if use_instance_route else None,
                d_g=d_g_a if use_cluster_route else None,
            )
            grads_b = backward(
                model,
                out_b,
                d_f=d_f[nb:] if use_instance_route else None,
                d_g=d_g_b if use_cluster_route else None,
            )
            accumulate_grads(grads, grads_b)
            adam_step(adam, model, grads)
            sums += (clu_val, ins_val, reg_val)
            batches += 1
        clu_mean, ins_mean, reg_mean = (float(v) for v in sums / max(batches, 1))
        eval_seed = int(np.random.SeedSequence((seed, epoch)).generate_state(1)[0])
        pred = _epoch_assignments(model, x, mode, eval_seed)
        out = forward_batch(model, x)
        try:
            sc = silhouette(out.f, pred)
        except MetricUndefinedError:
            sc = float("nan")
        log.append(ClusterEpoch(epoch, clu_mean, ins_mean, reg_mean, sc))
        if sc == sc and sc > best_sc:
            best_sc = sc
            best_model = model.copy()
    if best_model is None:
        best_model = model
    return best_model, log


def write_cluster_log(log: list[ClusterEpoch], path: str, mode: str = "kcod") -> None:
    column = "kcc_loss" if mode == "kcod" else "ins_loss"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "clu_loss", column, "reg", "sc"])
        for rec in log:
            writer.writerow(
                [rec.epoch]
                + [repr(float(v)) for v in (rec.clu_loss, rec.instance_loss, rec.reg, rec.sc)]
            )


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    history: list[float] = field(default_factory=list)  # per-iteration inertia, winner


def _seed_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ spreading: sample proportional to squared distance from chosen set."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[int(rng.integers(n))]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:  # remaining points coincide with chosen centroids
            idx = int(rng.integers(n))
        centroids[c] = points[idx]
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return centroids


def kmeans(points, k: int, seed: int = 0, max_iter: int = 100, restarts: int = 8) -> KMeansResult:
    """Lloyd iterations from k-means++ starts; best inertia over restarts wins.

    Empty clusters are re-seeded at the point currently farthest from its
    centroid. Assignment ties go to the lowest cluster index. Deterministic
    under seed.
    """
    pts = as_mat64(points)
    n = pts.shape[0]
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if k > n:
        raise ParameterError(f"k={k} exceeds {n} points")
    if restarts < 1 or max_iter < 1:
        raise ParameterError("restarts and max_iter must be >= 1")
    best: KMeansResult | None = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        centroids = _seed_centroids(pts, k, rng)
        labels = None
        history: list[float] = []
        for _ in range(max_iter):
            d2 = cdist(pts, centroids, "sqeuclidean")
            new_labels = np.argmin(d2, axis=1)
            row_cost = d2[np.arange(n), new_labels]
            for c in range(k):
                if not np.any(new_labels == c):
                    far = int(np.argmax(row_cost))
                    centroids[c] = pts[far]
                    new_labels[far] = c
                    row_cost[far] = 0.0
            history.append(float(row_cost.sum()))
            if labels is not None and np.array_equal(new_labels, labels):
                break
            labels = new_labels
            for c in range(k):
                centroids[c] = pts[labels == c].mean(axis=0)
        result = KMeansResult(labels, centroids.copy(), history[-1], history)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def survivor_count(sizes, threshold: float) -> int:
    """How many clusters hold at least the expected mean share of points."""
    sizes = np.asarray(sizes, dtype=np.int64).ravel()
    return int(np.sum(sizes >= threshold))


def estimate_k(features, k_prime: int, seed: int = 0, max_iter: int = 100, restarts: int = 8) -> int:
    """Cluster-count estimate: over-cluster with k_prime, count clusters that
    reach the expected mean size N / k_prime, drop the rest."""
    f = as_mat64(features)
    result = kmeans(f, k_prime, seed=seed, max_iter=max_iter, restarts=restarts)
    sizes = np.bincount(result.assignments, minlength=k_prime)
    return survivor_count(sizes, f.shape[0] / k_prime)
