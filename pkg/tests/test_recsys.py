"""Ranking and metric tests against brute-force oracles."""

import math

import numpy as np
import pytest

from timevec.corpus import Dataset, Interaction, SplitResult
from timevec.errors import EvaluationError
from timevec.recsys import (MetricsReport, RankedList, evaluate, evaluate_split,
                            hit_rate_at_n, ndcg_at_n, rmse, score, top_k,
                            user_vector)
from timevec.trainer import EmbeddingModel, Vocabulary

from helpers import ds


def model_from(vectors):
    vectors = np.asarray(vectors, dtype=np.float64)
    items = tuple(f"i{k}" for k in range(len(vectors)))
    vocab = Vocabulary(items, {it: k for k, it in enumerate(items)},
                       np.ones(len(vectors)))
    return EmbeddingModel(vectors, np.zeros_like(vectors), vocab)


def random_model(rng, size, dim=4):
    return model_from(rng.normal(size=(size, dim)))


class TestUserVector:
    def test_single_item_is_normalized_vector(self):
        model = model_from([[3.0, 4.0], [1.0, 0.0]])
        u = user_vector([0], model)
        np.testing.assert_allclose(u.vector, [0.6, 0.8])
        assert u.history_size == 1

    def test_opposite_vectors_cancel(self):
        model = model_from([[2.0, 0.0], [-7.0, 0.0]])
        u = user_vector([0, 1], model)
        np.testing.assert_allclose(u.vector, [0.0, 0.0], atol=1e-15)

    def test_matches_normalize_then_average(self):
        rng = np.random.default_rng(1)
        model = random_model(rng, 6)
        history = [0, 2, 5]
        u = user_vector(history, model)
        expected = np.mean([model.vectors[i] / np.linalg.norm(model.vectors[i])
                            for i in history], axis=0)
        np.testing.assert_allclose(u.vector, expected, atol=1e-15)

    def test_empty_history_rejected(self):
        with pytest.raises(ValueError):
            user_vector([], model_from([[1.0, 0.0]]))


class TestScore:
    def test_identical_direction(self):
        model = model_from([[0.0, 2.0], [0.0, 5.0]])
        u = user_vector([0], model)
        assert score(u, 1, model) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        model = model_from([[1.0, 0.0], [0.0, 3.0]])
        u = user_vector([0], model)
        assert score(u, 1, model) == pytest.approx(0.0, abs=1e-12)

    def test_equals_mean_cosine_over_history(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            model = random_model(rng, 7)
            history = [0, 3, 6]
            candidate = 2
            u = user_vector(history, model)
            cosines = []
            for h in history:
                a, b = model.vectors[h], model.vectors[candidate]
                cosines.append(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
            assert score(u, candidate, model) == pytest.approx(np.mean(cosines),
                                                               abs=1e-10)

    def test_zero_norm_candidate_scores_zero(self):
        model = model_from([[1.0, 0.0], [0.0, 0.0]])
        u = user_vector([0], model)
        assert score(u, 1, model) == 0.0


class TestTopK:
    def test_full_pool_when_k_large(self):
        rng = np.random.default_rng(3)
        model = random_model(rng, 5)
        u = user_vector([0], model)
        ranked = top_k(u, model, {0}, 50)
        assert len(ranked.items) == 4
        scores = [s for _, s in ranked.items]
        assert scores == sorted(scores, reverse=True)

    def test_equal_scores_lexicographic(self):
        model = model_from(np.tile([1.0, 0.0], (4, 1)))
        u = user_vector([0], model)
        ranked = top_k(u, model, {0}, 2)
        assert [item for item, _ in ranked.items] == ["i1", "i2"]

    def test_never_returns_consumed_and_size_contract(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            size = int(rng.integers(3, 20))
            model = random_model(rng, size)
            consumed = set(int(i) for i in
                           rng.choice(size, size=int(rng.integers(1, size)), replace=False))
            u = user_vector(sorted(consumed), model)
            k = int(rng.integers(1, 25))
            ranked = top_k(u, model, consumed, k)
            ids = [item for item, _ in ranked.items]
            assert len(ids) == min(k, size - len(consumed))
            consumed_ids = {model.vocab.items[i] for i in consumed}
            assert not consumed_ids & set(ids)

    def test_matches_exhaustive_sort(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            size = int(rng.integers(3, 21))
            model = random_model(rng, size)
            consumed = {0}
            u = user_vector([0], model)
            k = int(rng.integers(1, size + 3))
            ranked = top_k(u, model, consumed, k)
            unit = model.vectors / np.linalg.norm(model.vectors, axis=1, keepdims=True)
            full = [(model.vocab.items[i], float(unit[i] @ u.vector))
                    for i in range(size) if i not in consumed]
            full.sort(key=lambda pair: (-pair[1], pair[0]))
            assert [item for item, _ in ranked.items] == [item for item, _ in full[:k]]


def ranked(*items):
    return RankedList("u", tuple((item, 1.0 - 0.01 * r) for r, item in enumerate(items)))


class TestNdcg:
    def test_relevant_at_rank_one(self):
        assert ndcg_at_n(ranked("a", "b", "c"), {"a"}, 10) == 1.0

    def test_relevant_at_rank_two(self):
        got = ndcg_at_n(ranked("x", "a", "c"), {"a"}, 10)
        assert got == pytest.approx(1.0 / math.log2(3), abs=1e-10)

    def test_no_relevant_in_top_n(self):
        assert ndcg_at_n(ranked("x", "y", "z"), {"a"}, 3) == 0.0

    def test_empty_relevant_zero(self):
        assert ndcg_at_n(ranked("x"), set(), 5) == 0.0

    def test_monotone_in_n_single_relevant(self):
        # with one relevant item the ideal gain is constant, so deepening
        # the cutoff can only help; with several relevant items the ideal
        # gain grows too and the ratio may legitimately dip
        rng = np.random.default_rng(6)
        for _ in range(50):
            items = [f"i{k}" for k in range(15)]
            rel = {str(rng.choice(items))}
            lst = ranked(*items)
            values = [ndcg_at_n(lst, rel, n) for n in range(1, 16)]
            assert all(a <= b + 1e-15 for a, b in zip(values, values[1:]))
            assert all(0.0 <= v <= 1.0 for v in values)

    def test_bounded_for_any_relevance(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            items = [f"i{k}" for k in range(15)]
            rel = set(str(r) for r in rng.choice(items, 4, replace=False))
            lst = ranked(*items)
            for n in range(1, 16):
                assert 0.0 <= ndcg_at_n(lst, rel, n) <= 1.0 + 1e-15

    def test_perfect_prefix_is_one(self):
        assert ndcg_at_n(ranked("a", "b", "x", "y"), {"a", "b"}, 4) == pytest.approx(1.0)


class TestHitRate:
    def test_hit_at_boundary(self):
        assert hit_rate_at_n(ranked("x", "y", "a"), {"a"}, 3) == 1.0

    def test_miss_just_outside(self):
        assert hit_rate_at_n(ranked("x", "y", "a"), {"a"}, 2) == 0.0


class TestRmse:
    def test_perfect_predictor(self):
        # positive aligned with history, every candidate negative anti-aligned
        model = model_from([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [-1.0, 0.0]])
        test = ds(("u", "i1", 100, None))
        value = rmse(model, test, {"u": [0]}, negative_ratio=1, seed=0)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_constant_half_on_balanced_labels(self):
        # all candidates orthogonal to the history: every prediction is 0.5
        model = model_from([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, -1.0]])
        test = ds(("u", "i1", 100, None), ("u", "i2", 101, None))
        value = rmse(model, test, {"u": [0]}, negative_ratio=1, seed=0)
        assert value == pytest.approx(0.5, abs=1e-12)

    def test_matches_direct_summation(self):
        # all non-consumed items share one vector, so the sampled negative
        # scores are known without reproducing the rng draws
        rng = np.random.default_rng(7)
        for _ in range(20):
            u_vec = rng.normal(size=3)
            pos_vec = rng.normal(size=3)
            neg_vec = rng.normal(size=3)
            model = model_from([u_vec, pos_vec, neg_vec, neg_vec, neg_vec])
            test = ds(("u", "i1", 50, None))
            unit = lambda v: v / np.linalg.norm(v)
            s_pos = (unit(u_vec) @ unit(pos_vec) + 1) / 2
            s_neg = (unit(u_vec) @ unit(neg_vec) + 1) / 2
            for ratio in (1, 3):
                expected = math.sqrt(((s_pos - 1) ** 2 + ratio * s_neg ** 2) / (1 + ratio))
                got = rmse(model, test, {"u": [0]}, negative_ratio=ratio, seed=11)
                assert got == pytest.approx(expected, abs=1e-12)

    def test_seeded_negatives_reproducible(self):
        rng = np.random.default_rng(8)
        model = random_model(rng, 12)
        test = ds(("u", "i3", 1, None), ("v", "i4", 2, None))
        hist = {"u": [0, 1], "v": [2]}
        a = rmse(model, test, hist, negative_ratio=2, seed=5)
        b = rmse(model, test, hist, negative_ratio=2, seed=5)
        c = rmse(model, test, hist, negative_ratio=2, seed=6)
        assert a == b
        assert a != c


class TestEvaluate:
    def test_single_user_rank_one(self):
        model = model_from([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        history = ds(("u", "i0", 1, None))
        positives = ds(("u", "i1", 10, None))
        report = evaluate(model, history, positives, cutoffs=[10])
        assert report.ndcg_at[10] == 1.0
        assert report.hitrate_at[10] == 1.0
        assert report.users_evaluated == 1

    def test_mean_over_users(self):
        # u's positive ranks first; v's positive ranks last of 3 candidates
        model = model_from([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        history = ds(("u", "i0", 1, None), ("v", "i0", 2, None))
        positives = ds(("u", "i1", 10, None), ("v", "i3", 11, None))
        report = evaluate(model, history, positives, cutoffs=[1])
        assert report.ndcg_at[1] == pytest.approx(0.5)
        assert report.hitrate_at[1] == pytest.approx(0.5)

    def test_hit_rate_mean(self):
        values = [1.0, 0.0, 1.0, 1.0]
        assert np.mean(values) == 0.75  # definition check for the aggregation

    def test_no_evaluable_users(self):
        model = model_from([[1.0, 0.0], [0.0, 1.0]])
        history = ds(("u", "i0", 1, None))
        positives = ds(("other", "i1", 5, None))
        with pytest.raises(EvaluationError):
            evaluate(model, history, positives, cutoffs=[5])

    def test_matches_independent_metric_loop(self):
        rng = np.random.default_rng(9)
        for _ in range(15):
            size = int(rng.integers(6, 15))
            model = random_model(rng, size)
            users = [f"u{k}" for k in range(int(rng.integers(1, 5)))]
            hist_rows, pos_rows = [], []
            hist_map = {}
            for t, user in enumerate(users):
                items = rng.choice(size, size=3, replace=False)
                hist_map[user] = [int(i) for i in items[:2]]
                for i in items[:2]:
                    hist_rows.append(Interaction(user, f"i{i}", t, None))
                pos_rows.append(Interaction(user, f"i{items[2]}", 100 + t, None))
            report = evaluate(model, Dataset.from_rows(hist_rows),
                              Dataset.from_rows(pos_rows), cutoffs=[3, 7])
            # independent loop: rank by mean cosine, then score metrics
            unit = model.vectors / np.linalg.norm(model.vectors, axis=1, keepdims=True)
            for n in (3, 7):
                total_ndcg, total_hit = 0.0, 0.0
                for user in users:
                    hist = hist_map[user]
                    u = unit[hist].mean(axis=0)
                    scored = sorted(((float(unit[i] @ u), model.vocab.items[i])
                                     for i in range(size) if i not in hist),
                                    key=lambda p: (-p[0], p[1]))
                    rel = {x.item_id for x in pos_rows if x.user_id == user}
                    gains = [1.0 if item in rel else 0.0
                             for _, item in scored[:n]]
                    dcg = sum(g / math.log2(r + 2) for r, g in enumerate(gains))
                    idcg = sum(1.0 / math.log2(r + 2)
                               for r in range(min(n, len(rel))))
                    total_ndcg += dcg / idcg
                    total_hit += 1.0 if any(gains) else 0.0
                assert report.ndcg_at[n] == pytest.approx(total_ndcg / len(users), abs=1e-12)
                assert report.hitrate_at[n] == pytest.approx(total_hit / len(users), abs=1e-12)

    def test_split_history_merging(self):
        model = model_from([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.5, 0.5]])
        train = ds(("u", "i0", 1, None))
        val = ds(("u", "i1", 5, None))
        test = ds(("u", "i2", 9, None))
        split = SplitResult(train, val, test, (1, 5))
        merged = evaluate_split(model, split, on="test", cutoffs=[3])
        solo = evaluate_split(model, split, on="test", cutoffs=[3],
                              include_validation_history=False)
        # with validation merged, i1 is consumed and leaves the candidate pool
        assert merged.users_evaluated == solo.users_evaluated == 1
        assert merged.ndcg_at[3] >= solo.ndcg_at[3]

    def test_rank_invariant_under_score_scaling(self):
        rng = np.random.default_rng(10)
        model = random_model(rng, 10)
        scaled = model_from(model.vectors * 7.5)  # same directions
        u1 = user_vector([0, 1], model)
        u2 = user_vector([0, 1], scaled)
        r1 = top_k(u1, model, {0, 1}, 8)
        r2 = top_k(u2, scaled, {0, 1}, 8)
        assert [i for i, _ in r1.items] == [i for i, _ in r2.items]
