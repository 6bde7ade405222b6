"""Intra-cluster word scoring, retention, and decoding-mask derivation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

from .errors import DomainError

DENY_BIAS = -100


@dataclass(frozen=True)
class RetentionConfig:
    lambda_freq: float = 1.0
    lambda_token: float = 1.0
    retention_ratio: float = 0.6

    def __post_init__(self):
        if self.lambda_freq < 0 or self.lambda_token < 0:
            raise DomainError("weights must be nonnegative")
        if self.lambda_freq == 0 and self.lambda_token == 0:
            raise DomainError("at least one weight must be positive")
        if not (0 < self.retention_ratio <= 1):
            raise DomainError("retention ratio must be in (0, 1]")


@dataclass(frozen=True)
class CompressedVocabulary:
    kept_words: frozenset
    kept_token_ids: frozenset
    special_token_ids: frozenset
    tokenizer_fingerprint: str
    vocab_size: int

    def __post_init__(self):
        if not self.special_token_ids <= self.kept_token_ids:
            raise DomainError("special tokens must be inside the kept set")

    def to_json(self):
        return {
            "kept_words": sorted(self.kept_words),
            "kept_token_ids": sorted(self.kept_token_ids),
            "special_token_ids": sorted(self.special_token_ids),
            "tokenizer_fingerprint": self.tokenizer_fingerprint,
            "vocab_size": self.vocab_size,
        }

    @classmethod
    def from_json(cls, data):
        return cls(
            kept_words=frozenset(data["kept_words"]),
            kept_token_ids=frozenset(data["kept_token_ids"]),
            special_token_ids=frozenset(data["special_token_ids"]),
            tokenizer_fingerprint=data["tokenizer_fingerprint"],
            vocab_size=data["vocab_size"],
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=1)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def default_abbreviations():
    text = resources.files("ecolang.data").joinpath("abbreviations.txt").read_text("utf-8")
    return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]


def score_word(word, table, config):
    """lambda_freq * F(w) + lambda_token * (1 - L(w))."""
    if word not in table.entries:
        raise DomainError(f"word {word!r} not in percentile table")
    f, l = table.entries[word]
    return config.lambda_freq * f + config.lambda_token * (1.0 - l)


def keep_count(cluster_size, retention_ratio):
    return max(1, math.ceil(retention_ratio * cluster_size))


def select_words(assignment, table, config):
    """Per cluster, keep the top max(1, ceil(r_w * n)) words by score.

    Ties break lexicographically; unclustered words are excluded (their
    characters stay reachable through the always-kept byte tokens).
    """
    kept = set()
    for cid in sorted(assignment.clusters):
        words = assignment.clusters[cid]
        ranked = sorted(words, key=lambda w: (-score_word(w, table, config), w))
        kept.update(ranked[: keep_count(len(words), config.retention_ratio)])
    return kept


def derive_token_set(kept_words, tokenizer, abbreviations=None):
    """Token ids reachable under the compressed vocabulary.

    Union of both tokenized forms (bare and leading-space) of every kept
    word and shipped abbreviation, plus special tokens, single-character
    punctuation, emoji tokens, and the byte-fallback tokens.
    """
    if abbreviations is None:
        abbreviations = default_abbreviations()
    ids = set(tokenizer.special_token_ids)
    ids |= tokenizer.byte_token_ids()
    ids |= tokenizer.punctuation_token_ids()
    ids |= tokenizer.emoji_token_ids()
    for word in set(kept_words) | set(abbreviations):
        ids.update(tokenizer.encode(word))
        ids.update(tokenizer.encode(" " + word))
    assert all(0 <= i < tokenizer.vocab_size for i in ids)
    return CompressedVocabulary(
        kept_words=frozenset(kept_words),
        kept_token_ids=frozenset(ids),
        special_token_ids=frozenset(tokenizer.special_token_ids),
        tokenizer_fingerprint=tokenizer.fingerprint,
        vocab_size=tokenizer.vocab_size,
    )


def export_decoding_mask(vocab, format, path=None):
    """allow_list: JSON array of permitted ids.  deny_bias: JSON map of
    forbidden id -> -100."""
    if format == "allow_list":
        payload = sorted(vocab.kept_token_ids)
    elif format == "deny_bias":
        payload = {
            str(i): DENY_BIAS
            for i in range(vocab.vocab_size)
            if i not in vocab.kept_token_ids
        }
    else:
        raise DomainError(f"unknown mask format {format!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f)
    return payload
