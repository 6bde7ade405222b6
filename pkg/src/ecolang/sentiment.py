"""Lexicon-based polarity scorer (pluggable stand-in for heavier tools)."""

from __future__ import annotations

from importlib import resources

from .corpus import extract_words

_lexicon_cache = None


def load_lexicon():
    global _lexicon_cache
    if _lexicon_cache is None:
        text = resources.files("ecolang.data").joinpath("polarity_lexicon.tsv").read_text("utf-8")
        lex = {}
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            word, value = line.split("\t")
            lex[word] = float(value)
        _lexicon_cache = lex
    return _lexicon_cache


def lexicon_scorer(text, lexicon=None):
    """Mean polarity of matched words, clipped to [-1, 1]; 0 if none match."""
    lexicon = lexicon or load_lexicon()
    scores = [lexicon[w] for w in extract_words(text) if w in lexicon]
    if not scores:
        return 0.0
    return max(-1.0, min(1.0, sum(scores) / len(scores)))
