import json

import numpy as np
import pytest

from ecolang.clustering import EmbeddingStore, Synset
from ecolang.tokenizer import train_bpe

TOY_DOCS = [
    "the quick brown fox jumps over the lazy dog",
    "a happy dog and a glad fox play in the sun",
    "the sun is warm and the day is good",
    "good dogs play happy games in warm weather",
    "quick games make a good day for the lazy fox",
    "I love this warm sunny weather so much",
    "we play games all day in the sun",
    "the brown dog jumps over a happy fox",
]


@pytest.fixture(scope="session")
def toy_tokenizer():
    return train_bpe(TOY_DOCS, num_merges=80)


@pytest.fixture()
def toy_corpus_file(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text("\n".join(TOY_DOCS), encoding="utf-8")
    return path


def unit(vec):
    arr = np.asarray(vec, dtype=float)
    return arr / np.linalg.norm(arr)


def make_store(dim, words, rng):
    return EmbeddingStore(dim, {w: rng.normal(size=dim) for w in words})


def make_synset(sid, lemmas, centroid):
    return Synset(id=sid, lemmas=list(lemmas), centroid=unit(centroid), weight=len(lemmas))


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")
    return path
