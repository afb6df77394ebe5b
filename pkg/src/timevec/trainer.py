"""Weighted skip-gram with negative sampling over user timelines.

Pairs are generated per user within a positional window over the
original event order, weighted by the configured regime, shuffled, and
applied as sequential SGD updates with a linearly decaying learning
rate.  The pair weight scales every gradient term of its pair.

The hot loop is a numba kernel; :func:`sgns_step` is the plain-numpy
reference implementation of one update, kept for gradient verification.
With ``workers=1`` and a fixed seed training is bit-reproducible; the
multi-worker mode runs lock-free threads over shared matrices and
tolerates lost updates, trading determinism for throughput.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, NamedTuple, Optional, Sequence

import numpy as np
from numba import njit

from .corpus import Dataset
from .errors import DataError, TrainingDiverged, TrainingError
from .temporal import (TemporalConfig, UserTemporalProfile, UserTimeline,
                       build_profiles, build_timelines)
from .weighting import WeightConfig, mode_sessions, pair_weights

OPTIMIZERS = ("sgd_linear_decay", "adaptive_moments")

# rng stream tags, combined with (seed, tag, epoch)
_INIT, _MASK, _SHUFFLE, _NEG = 0, 1, 2, 3


@dataclass(frozen=True)
class Vocabulary:
    """Dense item indexing in descending frequency order."""

    items: tuple[str, ...]
    item_to_index: dict[str, int]
    counts: np.ndarray

    @property
    def size(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 50
    window: int = 10
    negatives: int = 7
    neg_exponent: float = 0.5
    subsample_t: float = 1e-4
    learning_rate: float = 0.025
    epochs: int = 20
    batch_size: int = 16384
    seed: int = 42
    workers: int = 1
    optimizer: str = "sgd_linear_decay"

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.negatives < 1 or self.epochs < 1:
            raise ValueError("dim, window, negatives, and epochs must all be >= 1")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.subsample_t < 0:
            raise ValueError(f"subsample_t must be >= 0, got {self.subsample_t}")
        if self.batch_size < 1 or self.workers < 1:
            raise ValueError("batch_size and workers must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}, expected one of {OPTIMIZERS}")


class TrainingPair(NamedTuple):
    target: int
    context: int
    weight: float


@dataclass
class EmbeddingModel:
    """Target matrix (the published embeddings) plus the context matrix."""

    vectors: np.ndarray
    context: np.ndarray
    vocab: Vocabulary

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def build_vocab(train: Dataset) -> Vocabulary:
    """Index items by descending frequency; ties break by item id."""
    if len(train) == 0:
        raise DataError("cannot build a vocabulary from an empty dataset")
    counts: dict[str, int] = {}
    for x in train:
        counts[x.item_id] = counts.get(x.item_id, 0) + 1
    ordered = sorted(counts, key=lambda item: (-counts[item], item))
    return Vocabulary(
        items=tuple(ordered),
        item_to_index={item: i for i, item in enumerate(ordered)},
        counts=np.array([counts[item] for item in ordered], dtype=np.float64),
    )


def subsample_keep_probability(freq_fraction: float, t: float) -> float:
    """Keep probability for an item holding a fraction f of all events.

    Standard frequency subsampling: min(1, sqrt(t/f) + t/f).  t = 0
    disables subsampling entirely.
    """
    if t <= 0:
        return 1.0
    ratio = t / freq_fraction
    return min(1.0, math.sqrt(ratio) + ratio)


def keep_probabilities(vocab: Vocabulary, t: float) -> np.ndarray:
    total = vocab.counts.sum()
    return np.array([subsample_keep_probability(c / total, t) for c in vocab.counts])


class NegativeSampler:
    """Draws item indices with probability proportional to frequency**eta."""

    def __init__(self, vocab: Vocabulary, eta: float):
        weights = vocab.counts ** eta
        if not np.all(np.isfinite(weights)):
            raise TrainingError(f"negative-sampling exponent {eta} produces non-finite weights")
        self.cumulative = np.cumsum(weights)
        self.total = float(self.cumulative[-1])

    @property
    def probabilities(self) -> np.ndarray:
        return np.diff(self.cumulative, prepend=0.0) / self.total

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        u = rng.random(shape) * self.total
        return np.searchsorted(self.cumulative, u, side="right").astype(np.int32)


def negative_table(vocab: Vocabulary, eta: float) -> NegativeSampler:
    return NegativeSampler(vocab, eta)


def _pair_arrays(items: np.ndarray, kept: np.ndarray, window: int,
                 profile: Optional[UserTemporalProfile], cfg: WeightConfig,
                 sessions: Optional[np.ndarray]):
    """Window pairs of one timeline as (targets, contexts, weights) arrays.

    Positions are counted over the original sequence even when
    subsampling drops events, so temporal distances stay physical.
    Both orderings of each pair are emitted with the same weight;
    same-item pairs are skipped.
    """
    n = len(items)
    ts: list[np.ndarray] = []
    cs: list[np.ndarray] = []
    ws: list[np.ndarray] = []
    for delta in range(1, min(window, n - 1) + 1):
        mask = kept[:n - delta] & kept[delta:] & (items[:n - delta] != items[delta:])
        if not mask.any():
            continue
        p = np.nonzero(mask)[0]
        q = p + delta
        w = pair_weights(profile, p, q, cfg, sessions)
        ts.append(p)
        cs.append(q)
        ws.append(w)
        ts.append(q)
        cs.append(p)
        ws.append(w)
    if not ts:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), np.empty(0)
    return (np.concatenate(ts), np.concatenate(cs), np.concatenate(ws))


def _count_pairs(items: np.ndarray, kept: np.ndarray, window: int) -> int:
    n = len(items)
    count = 0
    for delta in range(1, min(window, n - 1) + 1):
        mask = kept[:n - delta] & kept[delta:] & (items[:n - delta] != items[delta:])
        count += int(mask.sum())
    return 2 * count


def generate_pairs(tl: UserTimeline, profile: UserTemporalProfile, window: int,
                   cfg: WeightConfig, keep_mask: np.ndarray) -> Iterator[TrainingPair]:
    """Stream the weighted window pairs of one timeline."""
    sessions = mode_sessions(profile, cfg) if profile is not None else None
    targets, contexts, weights = _pair_arrays(
        tl.items, np.asarray(keep_mask, dtype=bool), window, profile, cfg, sessions)
    # map positions to item indices at emission time
    for pos in range(len(targets)):
        yield TrainingPair(int(tl.items[targets[pos]]), int(tl.items[contexts[pos]]),
                           float(weights[pos]))


def linear_decay(lr0: float, step: int, total_steps: int) -> float:
    """Learning rate at a global step: lr0 down to lr0/100 over the run."""
    return lr0 * (1.0 - 0.99 * (step / total_steps))


def pair_loss(model: EmbeddingModel, target: int, context: int,
              negatives: Sequence[int], weight: float) -> float:
    """Weighted SGNS loss of one pair at the current parameters."""
    rows = np.concatenate(([context], np.asarray(negatives, dtype=np.int64)))
    x = model.context[rows] @ model.vectors[target]
    return float(weight * (np.logaddexp(0.0, -x[0]) + np.logaddexp(0.0, x[1:]).sum()))


def sgns_updates(model: EmbeddingModel, target: int, context: int,
                 negatives: Sequence[int], weight: float, lr: float):
    """The descent increments of one pair, computed at the current parameters.

    Returns (rows, delta_target, delta_rows, loss) where delta_rows[i]
    is the increment for context row rows[i] (rows may repeat when
    negatives collide; increments then accumulate).  Every increment is
    exactly -lr times the gradient of the weighted loss, so it scales
    exactly linearly in the weight.
    """
    rows = np.concatenate(([context], np.asarray(negatives, dtype=np.int64)))
    vt = model.vectors[target]
    outs = model.context[rows]  # fancy indexing copies the current rows
    x = outs @ vt
    sig = 1.0 / (1.0 + np.exp(-x))
    labels = np.zeros(len(rows))
    labels[0] = 1.0
    g = (labels - sig) * (lr * weight)
    loss = float(weight * (np.logaddexp(0.0, -x[0]) + np.logaddexp(0.0, x[1:]).sum()))
    return rows, outs.T @ g, g[:, None] * vt[None, :], loss


def sgns_step(model: EmbeddingModel, target: int, context: int,
              negatives: Sequence[int], weight: float, lr: float) -> float:
    """One exact-gradient descent update in place; returns the pair's loss."""
    rows, delta_target, delta_rows, loss = sgns_updates(
        model, target, context, negatives, weight, lr)
    np.add.at(model.context, rows, delta_rows)
    model.vectors[target] += delta_target
    return loss


@njit(cache=True, nogil=True)
def _log1pexp(x):
    if x > 35.0:
        return x
    if x < -35.0:
        return math.exp(x)
    return math.log1p(math.exp(x))


@njit(cache=True, nogil=True)
def _sgd_epoch_kernel(vec, ctx, targets, contexts, weights, negatives,
                      lr0, step0, total_steps):
    n = targets.shape[0]
    k = negatives.shape[1]
    d = vec.shape[1]
    total_loss = 0.0
    g = np.empty(k + 1)
    rows = np.empty(k + 1, dtype=np.int64)
    for s in range(n):
        lr = lr0 * (1.0 - 0.99 * ((step0 + s) / total_steps))
        t = targets[s]
        w = weights[s]
        lw = lr * w
        rows[0] = contexts[s]
        for i in range(k):
            rows[i + 1] = negatives[s, i]
        # pass 1: logits and scaled errors at the current parameters
        for i in range(k + 1):
            r = rows[i]
            x = 0.0
            for j in range(d):
                x += vec[t, j] * ctx[r, j]
            sig = 1.0 / (1.0 + math.exp(-x))
            if i == 0:
                g[i] = (1.0 - sig) * lw
                total_loss += w * _log1pexp(-x)
            else:
                g[i] = (0.0 - sig) * lw
                total_loss += w * _log1pexp(x)
        # pass 2: apply; reads of ctx happen before any write per column
        for j in range(d):
            acc = 0.0
            for i in range(k + 1):
                acc += g[i] * ctx[rows[i], j]
            vtj = vec[t, j]
            for i in range(k + 1):
                ctx[rows[i], j] += g[i] * vtj
            vec[t, j] = vtj + acc
    return total_loss


@njit(cache=True, nogil=True)
def _adam_epoch_kernel(vec, ctx, m_vec, v_vec, m_ctx, v_ctx,
                       targets, contexts, weights, negatives,
                       lr0, step0, total_steps, beta1, beta2, eps):
    # Sparse adaptive moments: only touched rows update their state;
    # bias correction uses the global step index.
    n = targets.shape[0]
    k = negatives.shape[1]
    d = vec.shape[1]
    total_loss = 0.0
    e = np.empty(k + 1)
    rows = np.empty(k + 1, dtype=np.int64)
    for s in range(n):
        lr = lr0 * (1.0 - 0.99 * ((step0 + s) / total_steps))
        tstep = step0 + s + 1
        bc1 = 1.0 - beta1 ** tstep
        bc2 = 1.0 - beta2 ** tstep
        t = targets[s]
        w = weights[s]
        rows[0] = contexts[s]
        for i in range(k):
            rows[i + 1] = negatives[s, i]
        for i in range(k + 1):
            r = rows[i]
            x = 0.0
            for j in range(d):
                x += vec[t, j] * ctx[r, j]
            sig = 1.0 / (1.0 + math.exp(-x))
            if i == 0:
                e[i] = (1.0 - sig) * w
                total_loss += w * _log1pexp(-x)
            else:
                e[i] = (0.0 - sig) * w
                total_loss += w * _log1pexp(x)
        for j in range(d):
            grad_v = 0.0
            vtj = vec[t, j]
            for i in range(k + 1):
                r = rows[i]
                grad_v -= e[i] * ctx[r, j]
                grad_c = -e[i] * vtj
                m_ctx[r, j] = beta1 * m_ctx[r, j] + (1.0 - beta1) * grad_c
                v_ctx[r, j] = beta2 * v_ctx[r, j] + (1.0 - beta2) * grad_c * grad_c
                ctx[r, j] -= lr * (m_ctx[r, j] / bc1) / (math.sqrt(v_ctx[r, j] / bc2) + eps)
            m_vec[t, j] = beta1 * m_vec[t, j] + (1.0 - beta1) * grad_v
            v_vec[t, j] = beta2 * v_vec[t, j] + (1.0 - beta2) * grad_v * grad_v
            vec[t, j] -= lr * (m_vec[t, j] / bc1) / (math.sqrt(v_vec[t, j] / bc2) + eps)
    return total_loss


def _rng(seed: int, tag: int, epoch: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, tag, epoch])


def _draw_negatives(sampler: NegativeSampler, rng: np.random.Generator,
                    contexts: np.ndarray, k: int, vocab_size: int) -> np.ndarray:
    negs = sampler.draw(rng, (len(contexts), k))
    if vocab_size > 1:
        # redraw negatives colliding with the positive context; bounded
        # retries keep pathological frequency skews from spinning
        for _ in range(100):
            bad = negs == contexts[:, None].astype(np.int32)
            n_bad = int(bad.sum())
            if n_bad == 0:
                break
            negs[bad] = sampler.draw(rng, n_bad)
    return negs


class _EpochPlan:
    """Per-user pair generation state shared by the counting and training passes."""

    def __init__(self, timelines, profiles, wcfg, window):
        self.entries = []  # (items, profile, sessions) per user, sorted order
        for user, tl in timelines.items():
            profile = profiles[user]
            self.entries.append((tl.items, profile, mode_sessions(profile, wcfg)))
        self.window = window
        self.wcfg = wcfg
        self.n_events = sum(len(items) for items, _, _ in self.entries)

    def masks(self, keep_prob: np.ndarray, rng: np.random.Generator) -> list[np.ndarray]:
        u = rng.random(self.n_events)
        out = []
        start = 0
        for items, _, _ in self.entries:
            stop = start + len(items)
            out.append(u[start:stop] < keep_prob[items])
            start = stop
        return out

    def count(self, masks: list[np.ndarray]) -> int:
        return sum(_count_pairs(items, mask, self.window)
                   for (items, _, _), mask in zip(self.entries, masks))

    def pairs(self, masks: list[np.ndarray]):
        ts, cs, ws = [], [], []
        for (items, profile, sessions), mask in zip(self.entries, masks):
            p, q, w = _pair_arrays(items, mask, self.window, profile, self.wcfg, sessions)
            if len(p):
                ts.append(items[p].astype(np.int32))
                cs.append(items[q].astype(np.int32))
                ws.append(w)
        if not ts:
            z = np.empty(0, dtype=np.int32)
            return z, z.copy(), np.empty(0)
        return np.concatenate(ts), np.concatenate(cs), np.concatenate(ws)


def train(data: Dataset,
          profiles: Optional[Mapping[str, UserTemporalProfile]],
          tcfg: TrainConfig,
          wcfg: WeightConfig,
          force_weight: Optional[float] = None,
          on_epoch: Optional[Callable[[int, float, float], None]] = None) -> EmbeddingModel:
    """Train embeddings over the dataset's user timelines.

    ``profiles`` maps user id to a precomputed temporal profile; pass
    None to derive them with default temporal settings.  force_weight
    overrides every generated pair weight with a constant while leaving
    the rest of the schedule untouched (used to verify that the uniform
    mode is exactly the unweighted baseline).  on_epoch, when given,
    receives (epoch, mean_loss, current_lr) after each epoch.
    """
    vocab = build_vocab(data)
    timelines = build_timelines(data, vocab.item_to_index)
    if profiles is None:
        profiles = build_profiles(timelines, TemporalConfig())
    missing = [u for u in timelines if u not in profiles]
    if missing:
        raise TrainingError(f"missing temporal profiles for {len(missing)} users, e.g. {missing[0]!r}")

    plan = _EpochPlan(timelines, profiles, wcfg, tcfg.window)
    keep_prob = keep_probabilities(vocab, tcfg.subsample_t)
    sampler = negative_table(vocab, tcfg.neg_exponent)

    # one mask draw per epoch, reused by the counting and training passes
    epoch_masks = [plan.masks(keep_prob, _rng(tcfg.seed, _MASK, e))
                   for e in range(tcfg.epochs)]
    steps_per_epoch = [plan.count(masks) for masks in epoch_masks]
    total_steps = sum(steps_per_epoch)
    if total_steps == 0:
        raise TrainingError("no training pairs can be generated "
                            "(timelines too short or everything subsampled away)")

    d = tcfg.dim
    init_rng = _rng(tcfg.seed, _INIT)
    vec = init_rng.uniform(-0.5 / d, 0.5 / d, size=(vocab.size, d))
    ctx = np.zeros((vocab.size, d))
    model = EmbeddingModel(vec, ctx, vocab)

    adam_state = None
    if tcfg.optimizer == "adaptive_moments":
        adam_state = tuple(np.zeros((vocab.size, d)) for _ in range(4))

    step = 0
    for epoch in range(tcfg.epochs):
        targets, contexts, weights = plan.pairs(epoch_masks[epoch])
        n = len(targets)
        if n == 0:
            if on_epoch:
                on_epoch(epoch, math.nan, linear_decay(tcfg.learning_rate, step, total_steps))
            continue
        if force_weight is not None:
            weights = np.full(n, float(force_weight))
        order = _rng(tcfg.seed, _SHUFFLE, epoch).permutation(n)
        targets, contexts, weights = targets[order], contexts[order], weights[order]
        negatives = _draw_negatives(sampler, _rng(tcfg.seed, _NEG, epoch),
                                    contexts, tcfg.negatives, vocab.size)
        loss = _run_epoch(model, adam_state, targets, contexts, weights, negatives,
                          tcfg, step, total_steps)
        step += n
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}; "
                                   "lower the learning rate")
        if on_epoch:
            on_epoch(epoch, loss / n, linear_decay(tcfg.learning_rate, step, total_steps))

    if not (np.all(np.isfinite(model.vectors)) and np.all(np.isfinite(model.context))):
        raise TrainingDiverged("non-finite parameters after training")
    return model


def _run_epoch(model, adam_state, targets, contexts, weights, negatives,
               tcfg: TrainConfig, step0: int, total_steps: int) -> float:
    if tcfg.workers == 1:
        return _run_shard(model, adam_state, targets, contexts, weights, negatives,
                          tcfg, step0, total_steps)
    # lock-free threads over shared matrices; nondeterministic, throughput only
    shards = np.array_split(np.arange(len(targets)), tcfg.workers)
    losses = [0.0] * len(shards)
    offset = step0

    def work(slot, idx, off):
        losses[slot] = _run_shard(model, adam_state, targets[idx], contexts[idx],
                                  weights[idx], negatives[idx], tcfg, off, total_steps)

    threads = []
    for slot, idx in enumerate(shards):
        threads.append(threading.Thread(target=work, args=(slot, idx, offset)))
        offset += len(idx)
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return float(sum(losses))


def _run_shard(model, adam_state, targets, contexts, weights, negatives,
               tcfg: TrainConfig, step0: int, total_steps: int) -> float:
    if adam_state is None:
        return _sgd_epoch_kernel(model.vectors, model.context,
                                 targets, contexts, weights, negatives,
                                 tcfg.learning_rate, step0, total_steps)
    m_vec, v_vec, m_ctx, v_ctx = adam_state
    return _adam_epoch_kernel(model.vectors, model.context, m_vec, v_vec, m_ctx, v_ctx,
                              targets, contexts, weights, negatives,
                              tcfg.learning_rate, step0, total_steps,
                              0.9, 0.999, 1e-8)


def save_model(model: EmbeddingModel, path, context_path=None) -> None:
    """Write the text model file: header line, then one item per line.

    Item ids must not contain spaces (the format is space-delimited).
    """
    def dump(matrix, out_path):
        with open(out_path, "w") as fh:
            fh.write(f"{model.vocab.size} {model.dim}\n")
            for i, item in enumerate(model.vocab.items):
                if " " in item:
                    raise DataError(f"item id {item!r} contains a space; "
                                    "cannot write space-delimited model file")
                fh.write(item + " " + " ".join(map(str, matrix[i].tolist())) + "\n")

    dump(model.vectors, path)
    if context_path is not None:
        dump(model.context, context_path)


def load_model(path, context_path=None) -> EmbeddingModel:
    """Read a model file back; frequencies are unknown for loaded models."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"malformed model header in {path}")
        size, dim = int(header[0]), int(header[1])
        items = []
        vectors = np.empty((size, dim))
        for i in range(size):
            parts = fh.readline().split()
            if len(parts) != dim + 1:
                raise DataError(f"malformed model row {i} in {path}")
            items.append(parts[0])
            vectors[i] = [float(v) for v in parts[1:]]
    context = np.zeros_like(vectors)
    if context_path is not None:
        aux = load_model(context_path)
        if aux.vocab.items != tuple(items):
            raise DataError("context sidecar vocabulary does not match the model file")
        context = aux.vectors
    vocab = Vocabulary(tuple(items), {it: i for i, it in enumerate(items)},
                       np.ones(size))
    return EmbeddingModel(vectors, context, vocab)
