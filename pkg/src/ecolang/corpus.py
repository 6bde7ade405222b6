"""Corpus ingestion, word normalization, and frequency/length statistics."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass

from .errors import DomainError, ParseError

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
# ASCII-letter words, optionally hashtag-prefixed, with internal ' or -.
# Pure digits and non-ASCII scripts never match (the "non-English" filter).
_WORD_RE = re.compile(r"#?[a-z]+(?:['\-][a-z]+)*")


@dataclass(frozen=True)
class Corpus:
    documents: tuple
    source_tag: str = ""

    def __post_init__(self):
        if not self.documents:
            raise DomainError("corpus has no documents")


@dataclass(frozen=True)
class WordEntry:
    freq: int
    tok_len: int          # token count with a leading space (mid-sentence form)
    tok_len_bare: int     # token count of the bare word


@dataclass(frozen=True)
class WordStats:
    entries: dict
    total_words: int


@dataclass(frozen=True)
class PercentileTable:
    """Midrank percentiles of frequency (F) and token length (L), in [0,1]."""

    entries: dict  # word -> (F, L)

    def frequency(self, word):
        return self.entries[word][0]

    def token_length(self, word):
        return self.entries[word][1]


def extract_words(text):
    """Normalized word list: lowercase, URLs/mentions stripped, '#' kept."""
    text = _URL_RE.sub(" ", text.lower())
    text = _MENTION_RE.sub(" ", text)
    return _WORD_RE.findall(text)


def ingest_corpus(path, format="lines", source_tag=""):
    """Read a corpus file: one document per line, or JSONL with a "text" field."""
    if format not in ("lines", "jsonl"):
        raise DomainError(f"unknown corpus format {format!r}")
    docs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if format == "jsonl":
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise ParseError(f"malformed JSON record: {e.msg}", line=lineno) from e
                if not isinstance(record, dict) or "text" not in record:
                    raise ParseError('record has no "text" field', line=lineno)
                text = str(record["text"]).strip()
            else:
                text = line
            if text:
                docs.append(text)
    return Corpus(tuple(docs), source_tag=source_tag or str(path))


def compute_word_stats(corpus, tokenizer):
    """Count normalized words and measure their token lengths."""
    freqs = Counter()
    for doc in corpus.documents:
        freqs.update(extract_words(doc))
    if not freqs:
        raise DomainError("corpus yields no words after normalization")
    entries = {}
    for word, freq in freqs.items():
        tok_len = max(1, len(tokenizer.encode(" " + word)))
        tok_len_bare = max(1, len(tokenizer.encode(word)))
        entries[word] = WordEntry(freq=freq, tok_len=tok_len, tok_len_bare=tok_len_bare)
    return WordStats(entries=entries, total_words=sum(freqs.values()))


def _midrank_percentiles(values):
    """word -> (strictly-below + half the ties) / n for a word->value map."""
    n = len(values)
    sorted_vals = sorted(values.values())
    below = {}
    tied = Counter(sorted_vals)
    seen = 0
    for v in sorted_vals:
        if v not in below:
            below[v] = seen
        seen += 1
    return {w: (below[v] + 0.5 * tied[v]) / n for w, v in values.items()}


def percentile_scores(stats):
    """Midrank percentiles of frequency and token length for every word."""
    if not stats.entries:
        raise DomainError("word stats are empty")
    f = _midrank_percentiles({w: e.freq for w, e in stats.entries.items()})
    l = _midrank_percentiles({w: e.tok_len for w, e in stats.entries.items()})
    return PercentileTable(entries={w: (f[w], l[w]) for w in stats.entries})


def export_stats(stats, table, path):
    """Write the word -> {freq, tok_len, F, L} JSON map."""
    out = {
        w: {
            "freq": e.freq,
            "tok_len": e.tok_len,
            "tok_len_bare": e.tok_len_bare,
            "F": table.entries[w][0],
            "L": table.entries[w][1],
        }
        for w, e in stats.entries.items()
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(out, f, ensure_ascii=False, sort_keys=True, indent=1)


def load_stats(path):
    """Inverse of export_stats: rebuild WordStats and PercentileTable."""
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    if not raw:
        raise DomainError(f"stats file {path} is empty")
    entries = {
        w: WordEntry(freq=d["freq"], tok_len=d["tok_len"], tok_len_bare=d.get("tok_len_bare", d["tok_len"]))
        for w, d in raw.items()
    }
    table = PercentileTable(entries={w: (d["F"], d["L"]) for w, d in raw.items()})
    return WordStats(entries=entries, total_words=sum(e.freq for e in entries.values())), table
