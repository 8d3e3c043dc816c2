"""Shared contrastive-loss primitives.

Every loss in this package reduces, per anchor, to one positive
similarity against a set of negative similarities:

    loss = -log( exp(s_pos/tau) / (exp(s_pos/tau) + sum_k exp(s_neg_k/tau)) )

with gradients

    d loss / d s_neg_k = (1/tau) * exp(s_neg_k/tau) / denominator
    d loss / d s_pos   = (1/tau) * (exp(s_pos/tau) / denominator - 1)

so dropping a negative from the set shrinks the denominator and strictly
increases the gradient on every remaining negative. The helper computes
both sides stably (max-shifted exponentials).

Also here: the pairwise cosine-similarity matrix of a row set and its
backward pass, used by the instance-, cluster- and KCC-level losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParameterError

_NORM_FLOOR = 1e-300


def contrastive_terms(
    s_pos: float, s_neg: np.ndarray, tau: float
) -> tuple[float, float, np.ndarray]:
    """Loss and gradients w.r.t. the positive and each negative similarity."""
    if tau <= 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    s_neg = np.asarray(s_neg, dtype=np.float64).ravel()
    a = float(s_pos) / tau
    b = s_neg / tau
    m = a if b.size == 0 else max(a, float(np.max(b)))
    ea = np.exp(a - m)
    eb = np.exp(b - m)
    denom = ea + float(np.sum(eb))
    loss = float(np.log(denom) + m - a)
    d_pos = (ea / denom - 1.0) / tau
    d_neg = (eb / denom) / tau
    return loss, float(d_pos), d_neg


@dataclass
class CosineCache:
    rows: np.ndarray
    norms: np.ndarray    # (n, 1)
    unit: np.ndarray     # rows / norms


def cosine_rows(rows: np.ndarray) -> tuple[np.ndarray, CosineCache]:
    """Pairwise cosine-similarity matrix of the rows of a matrix."""
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise DegenerateInputError("cosine similarity of a zero-norm row")
    norms = np.maximum(norms, _NORM_FLOOR)
    unit = rows / norms
    sims = unit @ unit.T
    return sims, CosineCache(rows=rows, norms=norms, unit=unit)


def cosine_rows_backward(cache: CosineCache, d_sims: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the raw rows given gradients on the similarity matrix.

    Entries of ``d_sims`` are treated independently; its diagonal must be
    zero (self-similarity is never part of a loss).
    """
    d_unit = (d_sims + d_sims.T) @ cache.unit
    radial = np.sum(d_unit * cache.unit, axis=1, keepdims=True)
    return (d_unit - radial * cache.unit) / cache.norms


def stable_top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest scores, ties broken by lower index."""
    if k <= 0 or scores.size == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(-scores, kind="stable")
    return order[: min(k, scores.size)]
