"""Accuracy and efficiency measurements for simulation runs."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, asdict
from fractions import Fraction

from . import prompts
from .backends import ChatRequest, extract_json_object
from .errors import DomainError, JudgeFailure

logger = logging.getLogger(__name__)

# scheme name -> (categories, residual fallback category)
SCHEMES = {
    "pheme_stance": (("support", "deny", "query", "comment"), "comment"),
    "belief": (("belief", "disbelief", "unknown"), "unknown"),
    "hisim_stance": (("support", "neutral", "oppose"), "neutral"),
    "hisim_content": (
        ("call_for_action", "sharing_of_opinion", "reference_to_third_party", "testimony", "other"),
        "other",
    ),
}


@dataclass(frozen=True)
class LabelSet:
    scheme: str
    labels: dict  # item id -> label

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {self.scheme!r}")
        categories = set(SCHEMES[self.scheme][0])
        bad = {v for v in self.labels.values() if v not in categories}
        if bad:
            raise DomainError(f"labels outside scheme {self.scheme}: {sorted(bad)}")


@dataclass(frozen=True)
class Distribution:
    support: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.support) != len(self.probs):
            raise DomainError("support and probs differ in length")
        if any(p < 0 for p in self.probs):
            raise DomainError("probabilities must be nonnegative")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise DomainError("probabilities must sum to 1")

    @classmethod
    def from_counts(cls, support, counts):
        total = sum(counts)
        if total <= 0:
            raise DomainError("counts must be positive")
        return cls(support=tuple(support), probs=tuple(c / total for c in counts))

    @classmethod
    def from_labels(cls, label_set):
        categories = SCHEMES[label_set.scheme][0]
        counts = Counter(label_set.labels.values())
        return cls.from_counts(categories, [counts.get(c, 0) for c in categories])


def js_divergence(p, q):
    """Jensen-Shannon divergence with base-2 logs, in [0, 1]."""
    if p.support != q.support:
        raise DomainError("distributions have different supports")

    def kl(a, m):
        total = 0.0
        for ai, mi in zip(a, m):
            if ai > 0:
                total += ai * math.log2(ai / mi)
        return total

    m = [(pi + qi) / 2 for pi, qi in zip(p.probs, q.probs)]
    return 0.5 * kl(p.probs, m) + 0.5 * kl(q.probs, m)


def consistency(predicted, reference):
    """Percentage of items whose labels agree."""
    if predicted.scheme != reference.scheme:
        raise DomainError("label sets use different schemes")
    if not predicted.labels:
        raise DomainError("no items to compare")
    missing = set(predicted.labels) - set(reference.labels)
    if missing:
        raise DomainError(f"reference misses items: {sorted(missing)[:5]}")
    matches = sum(1 for k, v in predicted.labels.items() if reference.labels[k] == v)
    return float(Fraction(100 * matches, len(predicted.labels)))


_BELIEF_BY_INT = {0: "disbelief", 1: "belief", 2: "unknown"}


def _scheme_prompt(scheme, text, context, target):
    if scheme == "pheme_stance":
        return prompts.STANCE_LABEL_PROMPT.format(threads=context or "(none)", tweet=text)
    if scheme == "belief":
        return prompts.BELIEF_LABEL_PROMPT.format(source_tweet=context or "(none)", final_tweet=text)
    if scheme == "hisim_stance":
        return prompts.HISIM_STANCE_PROMPT.format(target=target or "the topic", tweet=text)
    return prompts.HISIM_CONTENT_PROMPT.format(tweet=text)


def _parse_label(scheme, raw):
    obj = extract_json_object(raw or "")
    if obj is None:
        return None
    if scheme == "belief":
        label = obj.get("label")
        return _BELIEF_BY_INT.get(label)
    value = obj.get("stance") if "stance" in obj else obj.get("label")
    if isinstance(value, str):
        value = value.strip().lower().replace(" ", "_")
        if value in SCHEMES[scheme][0]:
            return value
    return None


def label_responses(items, scheme, judge, context=None, target=""):
    """Judge-label each (item_id, text); double parse failure falls back to
    the scheme's residual category."""
    if scheme not in SCHEMES:
        raise DomainError(f"unknown scheme {scheme!r}")
    residual = SCHEMES[scheme][1]
    labels = {}
    for item_id, text in items:
        prompt = _scheme_prompt(scheme, text, context, target)
        label = None
        for _ in range(2):
            response = judge.chat(ChatRequest(messages=[{"role": "user", "content": prompt}]))
            label = _parse_label(scheme, response.text)
            if label is not None:
                break
        if label is None:
            logger.warning("labeling failed twice for item %r; using %r", item_id, residual)
            label = residual
        labels[item_id] = label
    return LabelSet(scheme=scheme, labels=labels)


@dataclass(frozen=True)
class OpinionSeries:
    bias: tuple        # per-step |mean attitude|
    diversity: tuple   # per-step population std of attitudes
    carried: tuple     # steps with no posts, carried forward

    @property
    def mean_bias(self):
        return sum(self.bias) / len(self.bias)

    @property
    def mean_diversity(self):
        return sum(self.diversity) / len(self.diversity)


def opinion_series(posts_by_step, scorer):
    """Per-step opinion bias and diversity of content-bearing posts.

    posts_by_step: ordered list of lists of post texts, one list per step.
    Steps without posts carry the previous step's values and are flagged.
    """
    if not posts_by_step:
        raise DomainError("no steps")
    bias, div, carried = [], [], []
    prev = (0.0, 0.0)
    for step_idx, texts in enumerate(posts_by_step):
        scores = [scorer(t) for t in texts if t]
        if scores:
            mean = sum(scores) / len(scores)
            variance = sum((s - mean) ** 2 for s in scores) / len(scores)
            prev = (abs(mean), math.sqrt(variance))
            carried.append(False)
        else:
            carried.append(True)
        bias.append(prev[0])
        div.append(prev[1])
    return OpinionSeries(bias=tuple(bias), diversity=tuple(div), carried=tuple(carried))


def run_posts_by_step(run):
    """Group a SimRun's agent-authored content posts by step (1..num_steps)."""
    from .simulation import NEWS_AUTHOR_ID, CONTENT_KINDS

    steps = [[] for _ in range(run.scenario.num_steps)]
    for p in run.world.posts:
        if p.author_id != NEWS_AUTHOR_ID and p.kind in CONTENT_KINDS and p.content and p.step >= 1:
            steps[p.step - 1].append(p.content)
    return steps


def delta_opinion(sim_series, real_series):
    """(|Δ time-averaged bias|, |Δ time-averaged diversity|)."""
    if len(sim_series.bias) != len(real_series.bias):
        raise DomainError("series have different step counts")
    return (
        abs(sim_series.mean_bias - real_series.mean_bias),
        abs(sim_series.mean_diversity - real_series.mean_diversity),
    )


def _word_counts(texts):
    from .corpus import extract_words

    counts = Counter()
    for t in texts:
        counts.update(extract_words(t))
    return counts


def _cosine(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na == 0 or nb == 0:
        return 0.0
    return dot / (na * nb)


def text_similarity(sim_texts, real_texts, embedder):
    """(cos_sim over aligned pairs, vocabulary jaccard, word-distribution JS)."""
    if not sim_texts or not real_texts:
        raise DomainError("text lists must be non-empty")
    pairs = list(zip(sim_texts, real_texts))
    cos = sum(_cosine(embedder.embed(s), embedder.embed(r)) for s, r in pairs) / len(pairs)

    sim_counts = _word_counts(sim_texts)
    real_counts = _word_counts(real_texts)
    sim_vocab, real_vocab = set(sim_counts), set(real_counts)
    union = sim_vocab | real_vocab
    jaccard = len(sim_vocab & real_vocab) / len(union) if union else 1.0

    support = tuple(sorted(union))
    sim_dist = Distribution.from_counts(support, [sim_counts.get(w, 0) for w in support])
    real_dist = Distribution.from_counts(support, [real_counts.get(w, 0) for w in support])
    return cos, jaccard, js_divergence(sim_dist, real_dist)


def length_deltas(sim_texts, real_texts, tokenizer):
    """(|Δ mean tokens per response|, |Δ mean tokens per word|)."""
    if not sim_texts or not real_texts:
        raise DomainError("text lists must be non-empty")

    def sentence_mean(texts):
        return sum(tokenizer.count(t) for t in texts) / len(texts)

    def word_mean(texts):
        counts = _word_counts(texts)
        if not counts:
            return 0.0
        total_tokens = sum(len(tokenizer.encode(" " + w)) * c for w, c in counts.items())
        return total_tokens / sum(counts.values())

    return (
        abs(sentence_mean(sim_texts) - sentence_mean(real_texts)),
        abs(word_mean(sim_texts) - word_mean(real_texts)),
    )


def drift_scores(trajectories, judge):
    """Judge-rated (structural, semantic) drift means over trajectories."""
    if not trajectories:
        raise DomainError("no trajectories")
    structural, semantic, failures = [], [], 0
    for t in trajectories:
        rendered = t.rendered()
        for prompt, bucket in (
            (prompts.STRUCTURAL_DRIFT_PROMPT.format(simulated_dialog=rendered), structural),
            (
                prompts.SEMANTIC_DRIFT_PROMPT.format(simulated_dialog=rendered, reference_dialog=t.reference),
                semantic,
            ),
        ):
            response = judge.chat(ChatRequest(messages=[{"role": "user", "content": prompt}]))
            obj = extract_json_object(response.text)
            if obj and isinstance(obj.get("score"), int) and 1 <= obj["score"] <= 5:
                bucket.append(obj["score"])
            else:
                failures += 1
    if not structural or not semantic:
        raise JudgeFailure(f"drift judging failed on all inputs ({failures} failures)")
    if failures:
        logger.warning("drift judging: %d failed calls omitted", failures)
    return sum(structural) / len(structural), sum(semantic) / len(semantic)


@dataclass
class MetricReport:
    stance_consistency: float = None
    belief_consistency: float = None
    belief_js: float = None
    content_consistency: float = None
    delta_bias: float = None
    delta_div: float = None
    token_r: int = None
    token_p: int = None
    token_c: int = None
    cos_sim: float = None
    jaccard: float = None
    word_js: float = None
    delta_ls: float = None
    delta_lw: float = None

    def to_json(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    def write(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, sort_keys=True, indent=1)

    def to_csv_row(self):
        fields = sorted(self.to_json())
        values = ",".join(str(self.to_json()[k]) for k in fields)
        return ",".join(fields) + "\n" + values + "\n"
