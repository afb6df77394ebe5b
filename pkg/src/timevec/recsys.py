"""Recommendation and evaluation on top of trained item embeddings.

A user is the centroid of the L2-normalized vectors of their consumed
items, so the dot product with a normalized candidate equals the mean
cosine between the candidate and every history item.  Rankings cover
all non-consumed vocabulary items, ties broken by item id for
deterministic reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import Dataset, SplitResult
from .errors import EvaluationError
from .trainer import EmbeddingModel

def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    """Rows scaled to unit L2 norm; zero rows stay zero."""
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    return np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)


@dataclass(frozen=True)
class UserVector:
    user_id: str
    vector: np.ndarray
    history_size: int


@dataclass(frozen=True)
class RankedList:
    user_id: str
    items: tuple[tuple[str, float], ...]  # (item_id, score), best first


@dataclass(frozen=True)
class MetricsReport:
    ndcg_at: dict[int, float]
    hitrate_at: dict[int, float]
    rmse: float
    users_evaluated: int


def user_vector(history: Sequence[int], model: EmbeddingModel,
                user_id: str = "") -> UserVector:
    """Centroid of the normalized vectors of the user's history items."""
    if len(history) == 0:
        raise ValueError("cannot build a user vector from an empty history")
    unit = _unit_rows(model.vectors[np.asarray(history, dtype=np.int64)])
    return UserVector(user_id, unit.mean(axis=0), len(history))


def score(u: UserVector, item: int, model: EmbeddingModel) -> float:
    """Mean cosine between the candidate and the user's history items."""
    return float(u.vector @ _unit_rows(model.vectors[item]))


def top_k(u: UserVector, model: EmbeddingModel, consumed: Iterable[int],
          k: int) -> RankedList:
    """The k best-scoring non-consumed items, ties by item id ascending."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = _unit_rows(model.vectors) @ u.vector
    candidates = np.setdiff1d(np.arange(model.vocab.size), np.fromiter(consumed, dtype=np.int64))
    ids = np.array([model.vocab.items[i] for i in candidates])
    order = np.lexsort((ids, -scores[candidates]))[:k]
    chosen = candidates[order]
    return RankedList(u.user_id, tuple((model.vocab.items[i], float(scores[i]))
                                       for i in chosen))


def ndcg_at_n(ranked: RankedList, relevant: set[str], n: int) -> float:
    """Binary-relevance NDCG over the top n ranks; 0 when nothing is relevant."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not relevant:
        return 0.0
    dcg = sum(1.0 / math.log2(r + 2)
              for r, (item, _) in enumerate(ranked.items[:n]) if item in relevant)
    idcg = sum(1.0 / math.log2(r + 2) for r in range(min(n, len(relevant))))
    return dcg / idcg


def hit_rate_at_n(ranked: RankedList, relevant: set[str], n: int) -> float:
    """1 if any relevant item appears in the top n, else 0."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return 1.0 if any(item in relevant for item, _ in ranked.items[:n]) else 0.0


def _histories(ds: Dataset, model: EmbeddingModel) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for x in ds:
        idx = model.vocab.item_to_index.get(x.item_id)
        if idx is not None:
            out.setdefault(x.user_id, []).append(idx)
    return out


def rmse(model: EmbeddingModel, test: Dataset, histories: Mapping[str, Sequence[int]],
         negative_ratio: int = 1, seed: int = 42) -> float:
    """Score-prediction error on test positives plus sampled negatives.

    Each test positive (label 1) is paired with negative_ratio uniform
    draws from the user's non-consumed items excluding the positive
    itself (label 0); predictions are (cosine + 1) / 2.
    """
    unit = _unit_rows(model.vectors)
    rng = np.random.default_rng(seed)
    sq_errors: list[float] = []
    by_user: dict[str, list[int]] = {}
    for x in test:
        idx = model.vocab.item_to_index.get(x.item_id)
        if idx is not None and x.user_id in histories:
            by_user.setdefault(x.user_id, []).append(idx)
    for user in sorted(by_user):
        hist = np.asarray(histories[user], dtype=np.int64)
        u = unit[hist].mean(axis=0)
        scores = (unit @ u + 1.0) / 2.0
        non_consumed = np.setdiff1d(np.arange(model.vocab.size), hist)
        for pos in by_user[user]:
            sq_errors.append((scores[pos] - 1.0) ** 2)
            pool = non_consumed[non_consumed != pos]
            if len(pool) == 0:
                continue
            for neg in pool[rng.integers(0, len(pool), negative_ratio)]:
                sq_errors.append(scores[neg] ** 2)
    if not sq_errors:
        raise EvaluationError("no test interactions usable for RMSE")
    return float(math.sqrt(sum(sq_errors) / len(sq_errors)))


def evaluate(model: EmbeddingModel, history: Dataset, positives: Dataset,
             cutoffs: Sequence[int] = tuple(range(1, 21)),
             negative_ratio: int = 1, seed: int = 42) -> MetricsReport:
    """Rank non-consumed items per user and average the metrics.

    Users contribute iff they have at least one positive whose item is
    in the vocabulary and a non-empty history; metrics are arithmetic
    means over those users.
    """
    cutoffs = sorted(set(int(c) for c in cutoffs))
    if not cutoffs or cutoffs[0] < 1:
        raise ValueError(f"cutoffs must be >= 1, got {cutoffs}")
    histories = _histories(history, model)
    relevant: dict[str, set[str]] = {}
    for x in positives:
        if x.item_id in model.vocab.item_to_index and x.user_id in histories:
            relevant.setdefault(x.user_id, set()).add(x.item_id)
    if not relevant:
        raise EvaluationError("no evaluable users (no test positives with known "
                              "users and items)")
    unit = _unit_rows(model.vectors)
    depth = max(cutoffs)
    ndcg_sums = {n: 0.0 for n in cutoffs}
    hit_sums = {n: 0.0 for n in cutoffs}
    for user in sorted(relevant):
        hist = np.asarray(histories[user], dtype=np.int64)
        u = UserVector(user, unit[hist].mean(axis=0), len(hist))
        ranked = top_k(u, model, hist, depth)
        for n in cutoffs:
            ndcg_sums[n] += ndcg_at_n(ranked, relevant[user], n)
            hit_sums[n] += hit_rate_at_n(ranked, relevant[user], n)
    count = len(relevant)
    return MetricsReport(
        ndcg_at={n: ndcg_sums[n] / count for n in cutoffs},
        hitrate_at={n: hit_sums[n] / count for n in cutoffs},
        rmse=rmse(model, positives, histories, negative_ratio, seed),
        users_evaluated=count,
    )


def evaluate_split(model: EmbeddingModel, split: SplitResult, on: str = "test",
                   include_validation_history: bool = True,
                   cutoffs: Sequence[int] = tuple(range(1, 21)),
                   negative_ratio: int = 1, seed: int = 42) -> MetricsReport:
    """Evaluate against one partition of a cold-start-pruned split.

    For the test partition the scoring history is train plus validation
    (the merged data final models are trained on) unless
    include_validation_history is False; for validation it is train
    alone.
    """
    if on == "test":
        rows = split.train.interactions
        if include_validation_history:
            rows = rows + split.validation.interactions
        history = Dataset.from_rows(rows, split.train.rating_range)
        positives = split.test
    elif on == "validation":
        history = split.train
        positives = split.validation
    else:
        raise ValueError(f"unknown partition {on!r}, expected 'test' or 'validation'")
    return evaluate(model, history, positives, cutoffs, negative_ratio, seed)
