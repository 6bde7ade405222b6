

import pytest
from hypothesis import given, strategies as st

from ecolang.clustering import ClusterAssignment
from ecolang.compression import (
    CompressedVocabulary,
    RetentionConfig,
    derive_token_set,
    export_decoding_mask,
    keep_count,
    score_word,
    select_words,
)
from ecolang.corpus import PercentileTable
from ecolang.errors import DomainError


def table_of(entries):
    return PercentileTable(entries=entries)


class TestScoreWord:
    def test_extremes(self):
        cfg = RetentionConfig(1, 1, 0.5)
        assert score_word("w", table_of({"w": (1.0, 0.0)}), cfg) == 2.0

    def test_midpoint(self):
        cfg = RetentionConfig(1, 1, 0.5)
        assert score_word("w", table_of({"w": (0.5, 0.5)}), cfg) == 1.0

    def test_hand_value(self):
        cfg = RetentionConfig(1, 1, 0.5)
        got = score_word("w", table_of({"w": (5 / 6, 1 / 6)}), cfg)
        assert got == pytest.approx(5 / 6 + (1 - 1 / 6), abs=1e-12)

    def test_absent_word(self):
        with pytest.raises(DomainError):
            score_word("nope", table_of({"w": (0.5, 0.5)}), RetentionConfig())

    def test_bad_config(self):
        with pytest.raises(DomainError):
            RetentionConfig(0, 0, 0.5)
        with pytest.raises(DomainError):
            RetentionConfig(1, 1, 0)
        with pytest.raises(DomainError):
            RetentionConfig(1, 1, 1.2)


def _assignment(clusters):
    w2c = {w: c for c, ws in clusters.items() for w in ws}
    return ClusterAssignment(
        clusters={c: tuple(sorted(ws)) for c, ws in clusters.items()},
        word_to_cluster=w2c,
        unclustered=(),
    )


class TestSelectWords:
    def test_keep_counts(self):
        assert keep_count(5, 0.6) == 3
        assert keep_count(1, 0.2) == 1  # at least one word per cluster
        assert keep_count(10, 0.2) == 2

    def test_top_scores_kept(self):
        words = [f"w{i}" for i in range(10)]
        table = table_of({w: (i / 10, 0.5) for i, w in enumerate(words)})
        kept = select_words(_assignment({"c": words}), table, RetentionConfig(1, 1, 0.2))
        # oracle: full sort by the same score
        ranked = sorted(words, key=lambda w: -score_word(w, table, RetentionConfig(1, 1, 0.2)))
        assert kept == set(ranked[:2])

    def test_tie_break_lexicographic(self):
        table = table_of({"b": (0.5, 0.5), "a": (0.5, 0.5), "c": (0.5, 0.5)})
        kept = select_words(_assignment({"c": ["b", "a", "c"]}), table, RetentionConfig(1, 1, 0.34))
        assert kept == {"a", "b"}

    @given(st.floats(min_value=0.01, max_value=1.0), st.floats(min_value=0.01, max_value=1.0))
    def test_monotone_coverage(self, r1, r2):
        lo, hi = sorted((r1, r2))
        words = [f"w{i}" for i in range(12)]
        table = table_of({w: ((i * 7 % 12) / 12, (i * 5 % 12) / 12) for i, w in enumerate(words)})
        assignment = _assignment({"c1": words[:7], "c2": words[7:]})
        kept_lo = select_words(assignment, table, RetentionConfig(1, 1, lo))
        kept_hi = select_words(assignment, table, RetentionConfig(1, 1, hi))
        assert kept_lo <= kept_hi


class TestDeriveTokenSet:
    def test_empty_kept_words(self, toy_tokenizer):
        vocab = derive_token_set(set(), toy_tokenizer, abbreviations=[])
        expected = (
            set(toy_tokenizer.special_token_ids)
            | toy_tokenizer.byte_token_ids()
            | toy_tokenizer.punctuation_token_ids()
            | toy_tokenizer.emoji_token_ids()
        )
        assert set(vocab.kept_token_ids) == expected

    def test_both_forms_tokenized(self, toy_tokenizer):
        vocab = derive_token_set({"weather"}, toy_tokenizer, abbreviations=[])
        # oracle: run the tokenizer on both forms directly
        expected = set(toy_tokenizer.encode("weather")) | set(toy_tokenizer.encode(" weather"))
        assert expected <= set(vocab.kept_token_ids)

    def test_mask_closure(self, toy_tokenizer):
        kept = {"dog", "sun", "happy"}
        vocab = derive_token_set(kept, toy_tokenizer)
        for w in kept:
            for form in (w, " " + w):
                assert set(toy_tokenizer.encode(form)) <= set(vocab.kept_token_ids)

    def test_specials_always_present(self, toy_tokenizer):
        vocab = derive_token_set({"dog"}, toy_tokenizer)
        assert set(toy_tokenizer.special_token_ids) <= set(vocab.kept_token_ids)

    def test_fingerprint_recorded(self, toy_tokenizer):
        vocab = derive_token_set(set(), toy_tokenizer)
        assert vocab.tokenizer_fingerprint == toy_tokenizer.fingerprint

    def test_json_roundtrip(self, tmp_path, toy_tokenizer):
        vocab = derive_token_set({"dog"}, toy_tokenizer)
        path = tmp_path / "vocab.json"
        vocab.save(path)
        assert CompressedVocabulary.load(path) == vocab


class TestExportMask:
    def _vocab(self, kept_ids, size):
        return CompressedVocabulary(
            kept_words=frozenset(),
            kept_token_ids=frozenset(kept_ids),
            special_token_ids=frozenset(),
            tokenizer_fingerprint="t",
            vocab_size=size,
        )

    def test_full_vocab_denies_nothing(self):
        assert export_decoding_mask(self._vocab(range(20), 20), "deny_bias") == {}

    def test_single_forbidden_id(self):
        deny = export_decoding_mask(self._vocab(set(range(20)) - {7}, 20), "deny_bias")
        assert deny == {"7": -100}

    def test_complementarity(self):
        kept = set(range(0, 20, 2)) | {1, 3}
        vocab = self._vocab(kept, 20)
        allow = export_decoding_mask(vocab, "allow_list")
        deny = export_decoding_mask(vocab, "deny_bias")
        assert len(allow) == 12 and len(deny) == 8
        assert set(allow) | {int(k) for k in deny} == set(range(20))
        assert set(allow) & {int(k) for k in deny} == set()

    def test_unknown_format(self):
        with pytest.raises(DomainError):
            export_decoding_mask(self._vocab({0}, 2), "banana")

    def test_files_written(self, tmp_path):
        vocab = self._vocab({0, 1}, 4)
        p = tmp_path / "allow.json"
        export_decoding_mask(vocab, "allow_list", p)
        import json

        assert json.loads(p.read_text()) == [0, 1]
