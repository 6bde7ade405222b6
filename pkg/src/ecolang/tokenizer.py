"""Byte-level BPE tokenizer loaded from a JSON definition file.

The definition file carries a token-to-id vocabulary, ranked merge rules,
and a special-token list.  Both a flat layout ({"vocab", "merges",
"special_tokens"}) and the nested layout used by open-weight model releases
({"model": {"vocab", "merges"}, "added_tokens": [...]}) are accepted.

Every possible byte has its own base token, so any string is encodable
(byte fallback); merges only coarsen the segmentation.
"""

from __future__ import annotations

import hashlib
import json
import unicodedata
from collections import Counter

from .errors import ConfigError, ParseError

_EMOJI_RANGES = (
    (0x1F300, 0x1FAFF),
    (0x2600, 0x27BF),
    (0x1F000, 0x1F0FF),
    (0xFE00, 0xFE0F),
    (0x2190, 0x21FF),
)


def _byte_to_unicode():
    # Printable bytes map to themselves; the rest are shifted into a
    # private printable range so tokens stay valid JSON strings.
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(0xA1, 0xAD)) + list(range(0xAE, 0x100))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, [chr(c) for c in cs]))


BYTE_TO_UNICODE = _byte_to_unicode()
UNICODE_TO_BYTE = {v: k for k, v in BYTE_TO_UNICODE.items()}


def _pretokenize(text):
    """Split text into space-prefixed word pieces.

    The first piece keeps its bare form unless the text itself starts with
    whitespace; every later piece carries one leading space.  Runs of
    whitespace collapse, which is adequate for vocabulary and accounting
    work (this is not a lossless codec).
    """
    words = text.split()
    if not words:
        return []
    pieces = []
    first_bare = not text[0].isspace()
    for i, w in enumerate(words):
        if i == 0 and first_bare:
            pieces.append(w)
        else:
            pieces.append(" " + w)
    return pieces


def is_emoji_char(ch):
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _EMOJI_RANGES)


class TokenizerSpec:
    """A loaded tokenizer: vocabulary, merge ranks, and special tokens."""

    def __init__(self, vocab, merges, special_tokens):
        self.vocab = dict(vocab)
        self.merges = [tuple(m) for m in merges]
        self.merge_ranks = {tuple(m): i for i, m in enumerate(merges)}
        self.special_tokens = list(special_tokens)
        for tok in self.special_tokens:
            if tok not in self.vocab:
                raise ConfigError(f"special token {tok!r} missing from vocabulary")
        self.id_to_token = {i: t for t, i in self.vocab.items()}
        self.vocab_size = len(self.vocab)
        ids = sorted(self.id_to_token)
        if ids != list(range(self.vocab_size)):
            raise ConfigError("token ids must be dense in [0, vocab_size)")
        self.special_token_ids = frozenset(self.vocab[t] for t in self.special_tokens)
        self._cache = {}

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read tokenizer file {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ParseError(f"tokenizer file {path} is not valid JSON: {e}") from e
        if "model" in data:
            vocab = data["model"]["vocab"]
            merges = data["model"].get("merges", [])
            specials = [t["content"] for t in data.get("added_tokens", [])]
        else:
            vocab = data["vocab"]
            merges = data.get("merges", [])
            specials = data.get("special_tokens", [])
        merges = [tuple(m.split(" ")) if isinstance(m, str) else tuple(m) for m in merges]
        return cls(vocab, merges, specials)

    def to_file(self, path):
        data = {
            "vocab": self.vocab,
            "merges": [" ".join(m) for m in self.merges],
            "special_tokens": self.special_tokens,
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, ensure_ascii=False)

    @property
    def fingerprint(self):
        payload = json.dumps(
            [sorted(self.vocab.items()), [" ".join(m) for m in self.merges], self.special_tokens],
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def _bpe(self, piece):
        if piece in self._cache:
            return self._cache[piece]
        symbols = [BYTE_TO_UNICODE[b] for b in piece.encode("utf-8")]
        while len(symbols) > 1:
            pairs = {(symbols[i], symbols[i + 1]) for i in range(len(symbols) - 1)}
            ranked = [(self.merge_ranks[p], p) for p in pairs if p in self.merge_ranks]
            if not ranked:
                break
            _, best = min(ranked)
            merged = []
            i = 0
            while i < len(symbols):
                if i < len(symbols) - 1 and (symbols[i], symbols[i + 1]) == best:
                    merged.append(symbols[i] + symbols[i + 1])
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        self._cache[piece] = symbols
        return symbols

    def encode(self, text):
        """Encode text to token ids (byte fallback guarantees totality)."""
        ids = []
        for piece in _pretokenize(text):
            for sym in self._bpe(piece):
                ids.append(self.vocab[sym])
        return ids

    def count(self, text):
        return len(self.encode(text))

    def decode(self, ids):
        raw = bytearray()
        for i in ids:
            tok = self.id_to_token[i]
            if tok in self.special_tokens:
                raw.extend(tok.encode("utf-8"))
                continue
            for ch in tok:
                raw.append(UNICODE_TO_BYTE[ch])
        return raw.decode("utf-8", errors="replace")

    def token_text(self, token_id):
        """Decoded surface form of one token (specials pass through)."""
        return self.decode([token_id])

    def byte_token_ids(self):
        """Ids of the 256 single-symbol base tokens (the byte fallback)."""
        out = set()
        for tok, i in self.vocab.items():
            if tok in self.special_tokens:
                continue
            if len(tok) == 1 and tok in UNICODE_TO_BYTE:
                out.add(i)
        return out

    def punctuation_token_ids(self):
        """Ids of tokens that decode to a single punctuation character."""
        out = set()
        for tok, i in self.vocab.items():
            if tok in self.special_tokens:
                continue
            text = self.token_text(i)
            stripped = text.lstrip(" ")
            if len(stripped) == 1 and unicodedata.category(stripped).startswith("P"):
                out.add(i)
        return out

    def emoji_token_ids(self):
        """Ids of tokens whose decoded text is entirely emoji characters."""
        out = set()
        for tok, i in self.vocab.items():
            if tok in self.special_tokens:
                continue
            text = self.token_text(i).strip()
            if text and all(is_emoji_char(c) for c in text):
                out.add(i)
        return out


def train_bpe(texts, num_merges=200, special_tokens=("<s>", "</s>", "<pad>")):
    """Learn a small byte-level BPE tokenizer from raw texts.

    Intended for toy corpora and tests; id layout is specials, then the 256
    byte tokens, then merge products in learned order.
    """
    word_freqs = Counter()
    for text in texts:
        for piece in _pretokenize(text):
            word_freqs[tuple(BYTE_TO_UNICODE[b] for b in piece.encode("utf-8"))] += 1

    merges = []
    words = dict(word_freqs)
    for _ in range(num_merges):
        pair_freqs = Counter()
        for word, freq in words.items():
            for i in range(len(word) - 1):
                pair_freqs[(word[i], word[i + 1])] += freq
        if not pair_freqs:
            break
        # Highest frequency wins; ties break lexicographically for determinism.
        best = min(pair_freqs.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        if pair_freqs[best] < 2:
            break
        merges.append(best)
        new_words = {}
        for word, freq in words.items():
            merged = []
            i = 0
            while i < len(word):
                if i < len(word) - 1 and (word[i], word[i + 1]) == best:
                    merged.append(word[i] + word[i + 1])
                    i += 2
                else:
                    merged.append(word[i])
                    i += 1
            new_words[tuple(merged)] = new_words.get(tuple(merged), 0) + freq
        words = new_words

    vocab = {}
    for tok in special_tokens:
        vocab[tok] = len(vocab)
    for b in range(256):
        vocab[BYTE_TO_UNICODE[b]] = len(vocab)
    for a, b in merges:
        tok = a + b
        if tok not in vocab:
            vocab[tok] = len(vocab)
    return TokenizerSpec(vocab, merges, list(special_tokens))
