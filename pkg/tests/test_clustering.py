import numpy as np
import pytest

from conftest import make_store, make_synset, unit, write_jsonl

from ecolang.clustering import (
    ClusterAssignment,
    EmbeddingStore,
    Synset,
    assign_word,
    cluster_corpus,
    load_synsets,
    merge_clusters,
)
from ecolang.corpus import WordEntry, WordStats
from ecolang.errors import DomainError, NotEmbeddable, ParseError


def brute_force_assign(word_vec, synsets):
    # independent oracle: full cosine matrix, smallest id on ties
    v = unit(word_vec)
    sims = sorted(
        ((float(np.dot(v, s.centroid)), s.id) for s in synsets),
        key=lambda t: (-t[0], t[1]),
    )
    return sims[0][1]


class TestLoadSynsets:
    def test_centroid_is_normalized_mean(self, tmp_path):
        store = EmbeddingStore(2, {"happy": [1.0, 0.0], "glad": [0.0, 1.0]})
        path = write_jsonl(tmp_path / "syn.jsonl", [{"id": "s1", "lemmas": ["happy", "glad"]}])
        (syn,) = load_synsets(path, store)
        expected = unit(np.mean([[1.0, 0.0], [0.0, 1.0]], axis=0))
        assert np.allclose(syn.centroid, expected)

    def test_unembeddable_synset_dropped(self, tmp_path, caplog):
        store = EmbeddingStore(2, {"happy": [1.0, 0.0]})
        path = write_jsonl(
            tmp_path / "syn.jsonl",
            [{"id": "s1", "lemmas": ["happy"]}, {"id": "s2", "lemmas": ["ghost"]}],
        )
        with caplog.at_level("WARNING"):
            synsets = load_synsets(path, store)
        assert [s.id for s in synsets] == ["s1"]
        assert "1 synsets" in caplog.text

    def test_count_after_filtering(self, tmp_path):
        store = EmbeddingStore(2, {"a": [1, 0], "b": [0, 1], "c": [1, 1]})
        records = [
            {"id": "s1", "lemmas": ["a"]},
            {"id": "s2", "lemmas": ["zz"]},
            {"id": "s3", "lemmas": ["b", "c"]},
        ]
        path = write_jsonl(tmp_path / "syn.jsonl", records)
        # oracle: independent filter pass over the records
        expected = sum(1 for r in records if any(w in store for w in r["lemmas"]))
        assert len(load_synsets(path, store)) == expected == 2

    def test_all_unembeddable_is_domain_error(self, tmp_path):
        store = EmbeddingStore(2, {})
        path = write_jsonl(tmp_path / "syn.jsonl", [{"id": "s1", "lemmas": ["x"]}])
        with pytest.raises(DomainError):
            load_synsets(path, store)

    def test_malformed_record(self, tmp_path):
        path = tmp_path / "syn.jsonl"
        path.write_text("not json\n")
        with pytest.raises(ParseError):
            load_synsets(path, EmbeddingStore(2, {}))


class TestAssignWord:
    def test_exact_centroid_match(self):
        s1 = make_synset("s1", ["a"], [1, 0, 0])
        s2 = make_synset("s2", ["b"], [0, 1, 0])
        store = EmbeddingStore(3, {"w": [0, 1, 0]})
        assert assign_word("w", [s1, s2], store) == "s2"

    def test_orthonormal_centroids(self):
        s1 = make_synset("s1", ["a"], [1, 0])
        s2 = make_synset("s2", ["b"], [0, 1])
        store = EmbeddingStore(2, {"w": [1, 0]})
        assert assign_word("w", [s1, s2], store) == "s1"

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        synsets = [make_synset(f"s{i:02d}", ["x"], rng.normal(size=5)) for i in range(3)]
        store = make_store(5, [f"w{i}" for i in range(10)], rng)
        for w in store.vectors:
            assert assign_word(w, synsets, store) == brute_force_assign(store.get(w), synsets)

    def test_missing_embedding_signals(self):
        s1 = make_synset("s1", ["a"], [1, 0])
        with pytest.raises(NotEmbeddable):
            assign_word("ghost", [s1], EmbeddingStore(2, {}))

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        synsets = [make_synset(f"s{i}", ["x"], rng.normal(size=4)) for i in range(4)]
        vecs = {f"w{i}": rng.normal(size=4) for i in range(6)}
        store1 = EmbeddingStore(4, vecs)
        store2 = EmbeddingStore(4, {w: 17.5 * v for w, v in vecs.items()})
        for w in vecs:
            assert assign_word(w, synsets, store1) == assign_word(w, synsets, store2)


class TestMergeClusters:
    def test_identical_centroids_merge(self):
        a = make_synset("a", ["x"], [1, 0])
        b = make_synset("b", ["y"], [1, 0])
        merged = merge_clusters([a, b], 0.8)
        assert len(merged) == 1
        assert merged[0].id == "a"
        assert merged[0].lemmas == ["x", "y"]

    def test_orthogonal_untouched(self):
        a = make_synset("a", ["x"], [1, 0])
        b = make_synset("b", ["y"], [0, 1])
        assert len(merge_clusters([a, b], 0.8)) == 2

    def test_one_close_pair_among_four(self):
        vecs = {
            "a": np.array([1.0, 0.0, 0.0]),
            "b": np.array([0.9, np.sqrt(1 - 0.81), 0.0]),  # cos(a,b) = 0.9
            "c": np.array([0.0, 0.0, 1.0]),
            "d": np.array([0.0, 1.0, 0.0]),
        }
        synsets = [make_synset(k, [k], v) for k, v in vecs.items()]
        merged = merge_clusters(synsets, 0.85)
        # oracle: all-pairs cosine matrix says only (a, b) reaches 0.85
        close = [
            (x, y)
            for x in vecs
            for y in vecs
            if x < y and float(np.dot(unit(vecs[x]), unit(vecs[y]))) >= 0.85
        ]
        assert close == [("a", "b")]
        assert len(merged) == 3

    def test_idempotent(self):
        rng = np.random.default_rng(11)
        synsets = [make_synset(f"s{i}", [f"w{i}"], rng.normal(size=6)) for i in range(8)]
        once = merge_clusters(synsets, 0.7)
        twice = merge_clusters(once, 0.7)
        assert [(s.id, tuple(s.lemmas)) for s in once] == [(s.id, tuple(s.lemmas)) for s in twice]

    def test_bad_threshold(self):
        with pytest.raises(DomainError):
            merge_clusters([], 0.0)


class TestClusterCorpus:
    def _stats(self, words):
        return WordStats(
            entries={w: WordEntry(freq=1, tok_len=1, tok_len_bare=1) for w in words},
            total_words=len(words),
        )

    def test_shared_argmax(self):
        s1 = make_synset("s1", ["a"], [1, 0])
        store = EmbeddingStore(2, {"x": [1, 0.1], "y": [1, -0.1]})
        assignment = cluster_corpus(self._stats(["x", "y"]), [s1], store)
        assert assignment.clusters == {"s1": ("x", "y")}

    def test_empty_synsets_rejected(self):
        with pytest.raises(DomainError):
            cluster_corpus(self._stats(["x"]), [], EmbeddingStore(2, {"x": [1, 0]}))

    def test_matches_exhaustive_table(self):
        rng = np.random.default_rng(23)
        synsets = [make_synset(f"s{i}", ["x"], rng.normal(size=4)) for i in range(5)]
        words = [f"w{i}" for i in range(10)]
        store = make_store(4, words, rng)
        assignment = cluster_corpus(self._stats(words), synsets, store)
        for w in words:
            assert assignment.word_to_cluster[w] == brute_force_assign(store.get(w), synsets)

    def test_partition_property(self):
        rng = np.random.default_rng(29)
        synsets = [make_synset(f"s{i}", ["x"], rng.normal(size=4)) for i in range(3)]
        words = [f"w{i}" for i in range(8)]
        store = make_store(4, words[:5], rng)  # 3 words lack embeddings
        assignment = cluster_corpus(self._stats(words), synsets, store)
        clustered = [w for ws in assignment.clusters.values() for w in ws]
        assert sorted(clustered + list(assignment.unclustered)) == sorted(words)
        assert len(clustered) == len(set(clustered))

    def test_deterministic(self):
        rng = np.random.default_rng(31)
        synsets = [make_synset(f"s{i}", ["x"], rng.normal(size=4)) for i in range(3)]
        words = [f"w{i}" for i in range(6)]
        store = make_store(4, words, rng)
        a = cluster_corpus(self._stats(words), synsets, store)
        b = cluster_corpus(self._stats(words), synsets, store)
        assert a == b

    def test_json_roundtrip(self):
        a = ClusterAssignment(
            clusters={"s1": ("x", "y")}, word_to_cluster={"x": "s1", "y": "s1"}, unclustered=("z",)
        )
        assert ClusterAssignment.from_json(a.to_json()) == a
