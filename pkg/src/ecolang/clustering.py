"""Synset-based semantic clustering of corpus words via embedding similarity."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NotEmbeddable, ParseError

logger = logging.getLogger(__name__)

UNCLUSTERED = "__unclustered__"


@dataclass
class Synset:
    id: str
    lemmas: list
    centroid: np.ndarray
    weight: int = 1  # number of embedded lemmas behind the centroid

    def __post_init__(self):
        if not self.lemmas:
            raise DomainError(f"synset {self.id} has no lemmas")
        norm = float(np.linalg.norm(self.centroid))
        if abs(norm - 1.0) > 1e-6:
            raise DomainError(f"synset {self.id} centroid is not unit-normalized")


class EmbeddingStore:
    """Word -> vector lookup; absent words are None, never a zero vector."""

    def __init__(self, dim, vectors):
        if dim <= 0:
            raise DomainError("embedding dimension must be positive")
        self.dim = dim
        self.vectors = {}
        for word, vec in vectors.items():
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (dim,):
                raise DomainError(f"vector for {word!r} has wrong dimension")
            self.vectors[word] = arr

    @classmethod
    def from_file(cls, path):
        """Text format: header "dim N", then "word v1 ... vN" per line."""
        with open(path, encoding="utf-8") as f:
            header = f.readline().split()
            if len(header) != 2 or header[0] != "dim":
                raise ParseError(f"bad embedding header in {path}", line=1)
            dim = int(header[1])
            vectors = {}
            for lineno, line in enumerate(f, start=2):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != dim + 1:
                    raise ParseError("wrong number of vector components", line=lineno)
                vectors[parts[0]] = [float(x) for x in parts[1:]]
        return cls(dim, vectors)

    def get(self, word):
        return self.vectors.get(word)

    def __contains__(self, word):
        return word in self.vectors


class BackendEmbeddingStore:
    """EmbeddingStore-compatible adapter over a backend's embed operation."""

    def __init__(self, backend, dim):
        self.backend = backend
        self.dim = dim
        self._cache = {}

    def get(self, word):
        if word not in self._cache:
            self._cache[word] = np.asarray(self.backend.embed(word), dtype=float)
        return self._cache[word]

    def __contains__(self, word):
        return True


@dataclass(frozen=True)
class ClusterAssignment:
    clusters: dict            # cluster_id -> sorted tuple of words
    word_to_cluster: dict     # word -> cluster_id
    unclustered: tuple        # words without embeddings

    def to_json(self):
        return {
            "clusters": {cid: list(words) for cid, words in sorted(self.clusters.items())},
            "unclustered": list(self.unclustered),
        }

    @classmethod
    def from_json(cls, data):
        clusters = {cid: tuple(words) for cid, words in data["clusters"].items()}
        w2c = {w: cid for cid, words in clusters.items() for w in words}
        return cls(clusters=clusters, word_to_cluster=w2c, unclustered=tuple(data["unclustered"]))


def _unit(vec):
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise DomainError("cannot normalize a zero vector")
    return vec / norm


def load_synsets(path, store):
    """Load JSONL {id, lemmas} synsets; centroid = normalized mean of lemma
    embeddings, skipping lemmas absent from the store."""
    synsets = []
    dropped = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                sid, lemmas = record["id"], record["lemmas"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ParseError(f"malformed synset record: {e}", line=lineno) from e
            vecs = [store.get(w) for w in lemmas if store.get(w) is not None]
            if not vecs:
                dropped += 1
                continue
            centroid = _unit(np.mean(vecs, axis=0))
            synsets.append(Synset(id=sid, lemmas=list(lemmas), centroid=centroid, weight=len(vecs)))
    if dropped:
        logger.warning("dropped %d synsets with no embeddable lemmas", dropped)
    if not synsets:
        raise DomainError(f"no usable synsets in {path}")
    return synsets


def assign_word(word, synsets, store):
    """Nearest synset by cosine similarity; ties go to the smallest id."""
    if not synsets:
        raise DomainError("synset list is empty")
    vec = store.get(word)
    if vec is None:
        raise NotEmbeddable(word)
    vec = _unit(np.asarray(vec, dtype=float))
    best_id = None
    best_sim = -np.inf
    for syn in sorted(synsets, key=lambda s: s.id):
        sim = float(np.dot(vec, syn.centroid))
        if sim > best_sim:
            best_sim = sim
            best_id = syn.id
    return best_id


def merge_clusters(synsets, threshold):
    """Greedy agglomeration in ascending-id order until no centroid pair
    reaches the threshold; merged ids take the smallest member id."""
    if not (0 < threshold <= 1):
        raise DomainError("threshold must be in (0, 1]")
    current = sorted(synsets, key=lambda s: s.id)
    while True:
        merged_any = False
        i = 0
        while i < len(current):
            j = i + 1
            while j < len(current):
                a, b = current[i], current[j]
                if float(np.dot(a.centroid, b.centroid)) >= threshold:
                    centroid = _unit((a.weight * a.centroid + b.weight * b.centroid) / (a.weight + b.weight))
                    current[i] = Synset(
                        id=min(a.id, b.id),
                        lemmas=sorted(set(a.lemmas) | set(b.lemmas)),
                        centroid=centroid,
                        weight=a.weight + b.weight,
                    )
                    del current[j]
                    merged_any = True
                else:
                    j += 1
            i += 1
        if not merged_any:
            return sorted(current, key=lambda s: s.id)


def cluster_corpus(stats, synsets, store):
    """Assign every corpus word to its nearest synset; words without an
    embedding go to the unclustered pool."""
    if not synsets:
        raise DomainError("synset list is empty")
    clusters = {}
    word_to_cluster = {}
    unclustered = []
    for word in sorted(stats.entries):
        try:
            cid = assign_word(word, synsets, store)
        except NotEmbeddable:
            unclustered.append(word)
            continue
        clusters.setdefault(cid, []).append(word)
        word_to_cluster[word] = cid
    return ClusterAssignment(
        clusters={cid: tuple(sorted(ws)) for cid, ws in clusters.items()},
        word_to_cluster=word_to_cluster,
        unclustered=tuple(unclustered),
    )
