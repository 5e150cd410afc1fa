"""Similarity kernel and retrieval strategy tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import oracle_top_p
from promptbank.corpus import EmbeddingBank
from promptbank.errors import (
    DimensionMismatch,
    EmptyBank,
    EmptyInput,
    StatsModeMismatch,
)
from promptbank.retrieval import (
    ScoredItem,
    bank_scores,
    cosine,
    direct_top_k,
    ec_weighted_embedding,
    retrieve_cross_domain,
    retrieve_in_domain,
    top_p_refine,
    video_item_similarity,
)
from promptbank.taxonomy import CROSS_DOMAIN, IN_DOMAIN, CategoryStats, StatEntry


def _unit(*xs):
    v = np.array(xs, dtype=np.float64)
    return v / np.linalg.norm(v)


def _stats_in_domain(entries: dict[str, tuple[float, float]]) -> CategoryStats:
    stats = CategoryStats(mode=IN_DOMAIN, video_count=1)
    stats.np = {cat: StatEntry(p=p, mu=mu) for cat, (p, mu) in entries.items()}
    return stats


def _stats_cross(quotas: dict[str, int]) -> CategoryStats:
    stats = CategoryStats(mode=CROSS_DOMAIN, video_count=1)
    stats.np = {cat: StatEntry(quota=q) for cat, q in quotas.items()}
    return stats


class TestSimilarity:
    def test_identical_frames_score_one(self):
        item = _unit(1, 2, 3)
        frames = np.stack([item, item])
        assert video_item_similarity(frames, item) == pytest.approx(1.0)

    def test_two_frames_average(self):
        # frame cosines 0.2 and 0.6 against the item
        item = np.array([1.0, 0.0])
        f1 = np.array([0.2, np.sqrt(1 - 0.04)])
        f2 = np.array([0.6, np.sqrt(1 - 0.36)])
        got = video_item_similarity(np.stack([f1, f2]), item)
        assert got == pytest.approx(0.4, abs=1e-12)

    def test_zero_item_vector(self):
        frames = np.ones((3, 4))
        assert video_item_similarity(frames, np.zeros(4)) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            video_item_similarity(np.ones((2, 3)), np.ones(4))

    def test_bank_scores_matches_scalar(self):
        rng = np.random.default_rng(5)
        frames = rng.normal(size=(4, 6))
        matrix = rng.normal(size=(9, 6))
        fast = bank_scores(frames, matrix)
        slow = [video_item_similarity(frames, row) for row in matrix]
        assert np.allclose(fast, slow, atol=1e-12)

    def test_cosine_zero_vector(self):
        assert cosine(np.zeros(3), np.ones(3)) == 0.0


def _toy_bank():
    keys = ["k1", "k2", "k3", "k4", "k5"]
    scores = [0.9, 0.7, 0.5, 0.3, 0.1]
    rows = [[s, np.sqrt(1 - s * s), 0.0] for s in scores]
    bank = EmbeddingBank(keys, np.array(rows, dtype=np.float32))
    frames = np.array([[1.0, 0.0, 0.0]])
    return keys, bank, frames


class TestDirectTopK:
    def test_whole_bank_when_k_large(self):
        keys, bank, frames = _toy_bank()
        items = direct_top_k(frames, keys, bank, 50)
        assert [it.key for it in items] == keys

    def test_matches_sort_oracle(self):
        keys, bank, frames = _toy_bank()
        items = direct_top_k(frames, keys, bank, 3)
        scores = bank_scores(frames, bank.rows(keys))
        expect = [k for k, _ in sorted(zip(keys, scores),
                                       key=lambda kv: (-kv[1], kv[0]))][:3]
        assert [it.key for it in items] == expect

    def test_empty_bank(self):
        _, bank, frames = _toy_bank()
        with pytest.raises(EmptyBank):
            direct_top_k(frames, [], bank, 3)


class TestInDomain:
    def _setup(self):
        keys = ["a1", "a2", "a3", "b1", "b2"]
        scores = [0.9, 0.8, 0.7, 0.6, 0.5]
        rows = [[s, np.sqrt(1 - s * s), 0.0] for s in scores]
        bank = EmbeddingBank(keys, np.array(rows, dtype=np.float32))
        frames = np.array([[1.0, 0.0, 0.0]])
        assignment = {"a1": "A", "a2": "A", "a3": "A", "b1": "B", "b2": "B"}
        return keys, bank, frames, assignment

    def test_probability_one_keeps_all_batches(self):
        keys, bank, frames, assignment = self._setup()
        stats = _stats_in_domain({"A": (1.0, 2.0), "B": (1.0, 1.0)})
        got = retrieve_in_domain(frames, keys, bank, assignment, stats, "np", seed=1)
        assert [it.key for it in got] == ["a1", "a2", "b1"]

    def test_probability_zero_drops_category(self):
        keys, bank, frames, assignment = self._setup()
        stats = _stats_in_domain({"A": (0.0, 2.0), "B": (1.0, 1.0)})
        got = retrieve_in_domain(frames, keys, bank, assignment, stats, "np", seed=1)
        assert [it.key for it in got] == ["b1"]

    def test_mode_mismatch(self):
        keys, bank, frames, assignment = self._setup()
        stats = _stats_cross({"A": 1})
        with pytest.raises(StatsModeMismatch):
            retrieve_in_domain(frames, keys, bank, assignment, stats, "np", seed=0)

    def test_seed_reproducible(self):
        keys, bank, frames, assignment = self._setup()
        stats = _stats_in_domain({"A": (0.5, 2.0), "B": (0.5, 1.0)})
        one = retrieve_in_domain(frames, keys, bank, assignment, stats, "np", seed=7)
        two = retrieve_in_domain(frames, keys, bank, assignment, stats, "np", seed=7)
        assert one == two

    def test_monte_carlo_retention_rate(self):
        # mu = {2, 1}, p = {1.0, 0.5}: category B retained about half the time
        keys, bank, frames, assignment = self._setup()
        stats = _stats_in_domain({"A": (1.0, 2.0), "B": (0.5, 1.0)})
        hits = 0
        trials = 10_000
        for seed in range(trials):
            got = retrieve_in_domain(frames, keys, bank, assignment, stats,
                                     "np", seed=seed)
            names = {it.key for it in got}
            assert {"a1", "a2"} <= names
            if "b1" in names:
                hits += 1
        assert abs(hits / trials - 0.5) <= 0.02

    def test_per_item_retention_switch(self):
        keys, bank, frames, assignment = self._setup()
        stats = _stats_in_domain({"A": (0.5, 3.0), "B": (1.0, 1.0)})
        sizes = set()
        for seed in range(200):
            got = retrieve_in_domain(frames, keys, bank, assignment, stats,
                                     "np", seed=seed, retention="per_item")
            sizes.add(len([it for it in got if it.category == "A"]))
        # independent per-item draws produce partial batches; batch mode cannot
        assert {0, 1, 2, 3} <= sizes or {1, 2} <= sizes

    def test_reference_trace_seed_zero(self):
        # frozen expectation: replay the documented draw sequence by hand
        from promptbank.rng import SplitMix64
        keys, bank, frames, assignment = self._setup()
        stats = _stats_in_domain({"A": (0.7, 1.0), "B": (0.7, 1.0)})
        stream = SplitMix64(0)
        keep_a = stream.uniform() < 0.7
        keep_b = stream.uniform() < 0.7
        got = retrieve_in_domain(frames, keys, bank, assignment, stats, "np", seed=0)
        names = [it.key for it in got]
        assert ("a1" in names) == keep_a
        assert ("b1" in names) == keep_b


class TestCrossDomain:
    def test_quota_union_size(self):
        keys = [f"x{i}" for i in range(20)]
        rows = [[np.cos(i * 0.05), np.sin(i * 0.05), 0.0] for i in range(20)]
        bank = EmbeddingBank(keys, np.array(rows, dtype=np.float32))
        frames = np.array([[1.0, 0.0, 0.0]])
        assignment = {k: ("k1" if i < 8 else "k2" if i < 16 else "k3")
                      for i, k in enumerate(keys)}
        stats = _stats_cross({"k1": 4, "k2": 12, "k3": 2})
        got = retrieve_cross_domain(frames, keys, bank, assignment, stats, "np")
        by_cat = {}
        for it in got:
            by_cat[it.category] = by_cat.get(it.category, 0) + 1
        assert by_cat == {"k1": 4, "k2": 8, "k3": 2}  # k2 capped by its size

    def test_small_category_taken_whole(self):
        keys = ["a", "b"]
        bank = EmbeddingBank(keys, np.eye(2, 3, dtype=np.float32))
        frames = np.array([[1.0, 0.0, 0.0]])
        stats = _stats_cross({"only": 10})
        got = retrieve_cross_domain(frames, keys, bank,
                                    {"a": "only", "b": "only"}, stats, "np")
        assert len(got) == 2

    def test_all_zero_quotas_empty_with_warning(self, caplog):
        keys = ["a"]
        bank = EmbeddingBank(keys, np.ones((1, 3), dtype=np.float32))
        frames = np.ones((1, 3))
        stats = _stats_cross({"only": 0})
        with caplog.at_level("WARNING"):
            got = retrieve_cross_domain(frames, keys, bank, {"a": "only"}, stats, "np")
        assert got == []
        assert any("empty" in r.message for r in caplog.records)

    def test_deterministic(self):
        keys, bank, frames, = ["a", "b", "c"], None, np.ones((1, 3))
        bank = EmbeddingBank(keys, np.eye(3, dtype=np.float32))
        stats = _stats_cross({"k": 2})
        assignment = {"a": "k", "b": "k", "c": "k"}
        one = retrieve_cross_domain(frames, keys, bank, assignment, stats, "np")
        two = retrieve_cross_domain(frames, keys, bank, assignment, stats, "np")
        assert one == two


class TestTopP:
    def test_tau_one_keeps_everything(self):
        items = [ScoredItem("a", 0.5), ScoredItem("b", 0.3), ScoredItem("c", 0.2)]
        assert top_p_refine(items, 1.0) == sorted(items, key=lambda i: -i.score)

    def test_documented_prefix(self):
        items = [ScoredItem("a", 0.5), ScoredItem("b", 0.3), ScoredItem("c", 0.2)]
        got = top_p_refine(items, 0.6)
        assert [it.key for it in got] == ["a", "b"]

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            top_p_refine([], 0.5)

    def test_negative_scores_shifted(self):
        items = [ScoredItem("a", -0.1), ScoredItem("b", -0.5)]
        got = top_p_refine(items, 1.0)
        assert [it.key for it in got] == ["a", "b"]

    @settings(max_examples=200, deadline=None)
    @given(
        scores=st.lists(st.floats(-1, 1, allow_nan=False, width=32),
                        min_size=1, max_size=12),
        tau=st.sampled_from([0.3, 0.6, 0.8, 1.0]),
    )
    def test_minimality_property(self, scores, tau):
        items = [ScoredItem(f"i{n:02d}", float(s)) for n, s in enumerate(scores)]
        got = [it.key for it in top_p_refine(items, tau)]
        expect = oracle_top_p([(it.key, it.score) for it in items], tau)
        assert got == expect


class TestEcWeighted:
    def test_singleton_bank(self, ):
        bank = EmbeddingBank(["c1"], np.array([[0.3, 0.4, 0.5]], dtype=np.float32))
        frames = np.ones((2, 3))
        vec, weights = ec_weighted_embedding(frames, ["c1"], bank, temperature=0.7)
        assert np.allclose(vec, bank.lookup("c1"), atol=1e-7)
        assert weights.tolist() == [1.0]

    def test_equal_similarity_midpoint(self):
        rows = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], dtype=np.float32)
        bank = EmbeddingBank(["c1", "c2"], rows)
        frames = np.array([[1.0, 1.0, 0.0]])
        vec, weights = ec_weighted_embedding(frames, ["c1", "c2"], bank)
        assert np.allclose(weights, [0.5, 0.5])
        assert np.allclose(vec, [0.5, 0.5, 0.0])

    def test_hand_computed_softmax(self):
        sims = np.array([0.9, 0.5, 0.1])
        rows = np.array([[s, np.sqrt(1 - s * s), 0.0] for s in sims], dtype=np.float32)
        bank = EmbeddingBank(["c1", "c2", "c3"], rows)
        frames = np.array([[1.0, 0.0, 0.0]])
        vec, weights = ec_weighted_embedding(frames, ["c1", "c2", "c3"], bank, 1.0)
        exp = np.exp(sims)
        expect_w = exp / exp.sum()
        assert np.allclose(weights, expect_w, atol=1e-6)
        expect_vec = expect_w @ rows.astype(np.float64)
        assert np.allclose(vec, expect_vec, atol=1e-6)
        assert weights.sum() == pytest.approx(1.0, abs=1e-6)

    def test_convex_hull_membership(self):
        rng = np.random.default_rng(11)
        rows = rng.normal(size=(6, 4)).astype(np.float32)
        bank = EmbeddingBank([f"c{i}" for i in range(6)], rows)
        frames = rng.normal(size=(3, 4))
        vec, weights = ec_weighted_embedding(frames, bank.keys, bank, 0.5)
        assert np.all(weights >= 0) and weights.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(vec, weights @ rows.astype(np.float64), atol=1e-9)

    def test_empty_bank(self):
        bank = EmbeddingBank([], np.zeros((0, 3), dtype=np.float32))
        with pytest.raises(EmptyBank):
            ec_weighted_embedding(np.ones((1, 3)), [], bank)


class TestScaleInvariance:
    def test_frame_scaling_changes_nothing(self, video_store, clip_np, clip_ec,
                                           retrieval_corpus):
        keys = sorted(clip_np.keys)
        frames = video_store.frames("vid1")
        base = direct_top_k(frames, keys, clip_np, 4)
        for c in (0.5, 3.0):
            scaled = direct_top_k(frames * c, keys, clip_np, 4)
            assert [it.key for it in scaled] == [it.key for it in base]
