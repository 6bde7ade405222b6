"""Chat, judge, and embedding backends.

Two implementations share one interface: an OpenAI-compatible HTTP client
and a deterministic seeded mock whose policies cover every prompt family
used by the toolkit (dialogue turns, judging, evolution operators,
simulation actions, labeling).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
import time
from dataclasses import dataclass

import httpx

from . import prompts
from .errors import ConfigError, DomainError, JudgeFailure, TransportError

API_KEY_ENV = "ECOLANG_API_KEY"
JUDGE_API_KEY_ENV = "ECOLANG_JUDGE_API_KEY"

# What a backend can do with a decoding mask.
CAP_SERVER_MASK = "server_mask"
CAP_BIAS_BOUNDED = "bias_map_bounded"
CAP_NONE = "none"


@dataclass
class ChatRequest:
    messages: list
    max_tokens: int = 512
    temperature: float = 0.0
    constraints: object = None  # optional CompressedVocabulary

    def __post_init__(self):
        if not self.messages:
            raise DomainError("messages must be non-empty")
        if self.messages[0]["role"] not in ("system", "user"):
            raise DomainError("first message must be system or user")
        if self.temperature < 0:
            raise DomainError("temperature must be >= 0")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    mask_enforced: bool = False


@dataclass(frozen=True)
class JudgeScore:
    score: int
    reason: str

    def __post_init__(self):
        if not (1 <= self.score <= 5):
            raise DomainError(f"judge score {self.score} outside 1..5")
        if not self.reason:
            raise DomainError("judge reason must be non-empty")


class RateLimiter:
    """Token bucket shared across threads; rate=None disables limiting."""

    def __init__(self, rate=None, capacity=None):
        self.rate = rate
        self.capacity = capacity or (rate or 1)
        self.tokens = self.capacity
        self.updated = time.monotonic()
        self.lock = threading.Lock()

    def acquire(self):
        if self.rate is None:
            return
        while True:
            with self.lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.rate
            time.sleep(wait)


def extract_json_object(text):
    """First parseable {...} object in the text, or None."""
    try:
        obj = json.loads(text.strip())
        if isinstance(obj, dict):
            return obj
    except (json.JSONDecodeError, ValueError):
        pass
    for start in (m.start() for m in re.finditer(r"\{", text)):
        depth = 0
        for i in range(start, len(text)):
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
                if depth == 0:
                    try:
                        obj = json.loads(text[start : i + 1])
                        if isinstance(obj, dict):
                            return obj
                    except json.JSONDecodeError:
                        break
                    break
    return None


class OpenAIChatBackend:
    """Client for OpenAI-compatible chat-completions and embeddings endpoints."""

    def __init__(
        self,
        base_url,
        model="default",
        api_key=None,
        api_key_env=API_KEY_ENV,
        capability=CAP_BIAS_BOUNDED,
        bias_map_limit=300,
        max_retries=3,
        backoff=0.2,
        timeout=60.0,
        rate_limiter=None,
        embedding_model=None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key or os.environ.get(api_key_env, "")
        self.capability = capability
        self.bias_map_limit = bias_map_limit
        self.max_retries = max_retries
        self.backoff = backoff
        self.rate_limiter = rate_limiter or RateLimiter()
        self.embedding_model = embedding_model or model
        self._client = httpx.Client(timeout=timeout)

    def _headers(self):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post(self, path, payload):
        last_exc = None
        for attempt in range(self.max_retries + 1):
            self.rate_limiter.acquire()
            try:
                resp = self._client.post(self.base_url + path, json=payload, headers=self._headers())
            except httpx.HTTPError as e:
                last_exc = e
                time.sleep(self.backoff * (2**attempt))
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_exc = TransportError(f"HTTP {resp.status_code} from {path}")
                time.sleep(self.backoff * (2**attempt))
                continue
            if resp.status_code >= 400:
                raise ConfigError(f"HTTP {resp.status_code} from {path}: {resp.text[:200]}")
            return resp.json()
        raise TransportError(f"request to {path} failed after {self.max_retries + 1} attempts: {last_exc}")

    def chat(self, request):
        payload = {
            "model": self.model,
            "messages": request.messages,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        mask_enforced = False
        if request.constraints is not None:
            vocab = request.constraints
            if self.capability == CAP_SERVER_MASK:
                payload["allowed_token_ids"] = sorted(vocab.kept_token_ids)
                mask_enforced = True
            elif self.capability == CAP_BIAS_BOUNDED:
                deny = [i for i in range(vocab.vocab_size) if i not in vocab.kept_token_ids]
                if len(deny) <= self.bias_map_limit:
                    payload["logit_bias"] = {str(i): -100 for i in deny}
                    mask_enforced = True
                # else: too many forbidden ids for a bounded bias map;
                # the caller validates outputs post hoc.
        data = self._post("/chat/completions", payload)
        usage = data.get("usage", {})
        return ChatResponse(
            text=data["choices"][0]["message"]["content"],
            prompt_tokens=usage.get("prompt_tokens", 0),
            completion_tokens=usage.get("completion_tokens", 0),
            mask_enforced=mask_enforced,
        )

    def embed(self, text):
        if not text:
            raise DomainError("cannot embed empty text")
        data = self._post("/embeddings", {"model": self.embedding_model, "input": text})
        return data["data"][0]["embedding"]


class MockBackend:
    """Deterministic backend for tests: same seed + same request => same output.

    Routing is by prompt family.  The dialogue policy echoes the first 10
    words of the last user message, dropping to 3 when the active rule asks
    for concise/brief output; the judge policies are word-overlap quartiles
    for alignment and mean-word-length for expressiveness unless fixed
    keyword tables are supplied.
    """

    BREVITY_WORDS = ("concise", "brief")
    VERBOSE_TAIL = (
        "and honestly there is quite a lot more that could be said about this "
        "whole situation if anyone asked me about it in detail"
    )

    def __init__(
        self,
        seed=0,
        tokenizer=None,
        capability=CAP_NONE,
        embed_dim=16,
        align_keyword_table=None,
        exp_keyword_table=None,
        keyword_default=2,
    ):
        self.seed = seed
        self.tokenizer = tokenizer
        self.capability = capability
        self.embed_dim = embed_dim
        self.align_keyword_table = align_keyword_table
        self.exp_keyword_table = exp_keyword_table
        self.keyword_default = keyword_default

    # -- token accounting -------------------------------------------------

    def _count(self, text):
        if self.tokenizer is not None:
            return self.tokenizer.count(text)
        return len(text.split())

    # -- routing -----------------------------------------------------------

    def chat(self, request):
        if not isinstance(request, ChatRequest):
            request = ChatRequest(**request)
        joined = "\n".join(m["content"] for m in request.messages)
        if "align with the persona" in joined:
            text = self._judge_alignment(joined)
        elif "clear and easy to understand" in joined:
            text = self._judge_expressiveness(joined)
        elif "cross over the following prompts" in joined:
            text = self._crossover(joined)
        elif "Mutate the prompt" in joined:
            text = self._mutate(joined)
        elif "label the stance of the question tweet" in joined:
            text = self._label_stance(joined)
        elif "believes the source news" in joined:
            text = self._label_belief(joined)
        elif "classify the stance" in joined:
            text = self._label_hisim_stance(joined)
        elif "classify the type" in joined:
            text = self._label_hisim_content(joined)
        elif "fluent and grammatical" in joined:
            text = json.dumps({"reason": "mock structural rating", "score": 4})
        elif "preserves the literal meaning" in joined:
            text = json.dumps({"reason": "mock semantic rating", "score": 4})
        elif "choose some actions" in joined:
            text = self._simulation_action(request, joined)
        else:
            text = self._dialogue_turn(request, joined)

        mask_enforced = False
        if (
            request.constraints is not None
            and self.capability == CAP_SERVER_MASK
            and self.tokenizer is not None
        ):
            kept = request.constraints.kept_token_ids
            text = self._mask_text(text, kept)
            mask_enforced = True

        prompt_tokens = sum(self._count(m["content"]) for m in request.messages)
        return ChatResponse(
            text=text,
            prompt_tokens=prompt_tokens,
            completion_tokens=self._count(text),
            mask_enforced=mask_enforced,
        )

    def _mask_text(self, text, kept):
        """Constrain the readable parts of a response to the kept token set.

        Action responses are JSON envelopes; a real server-side mask would
        only constrain the generated content, so here only the content
        fields are filtered. Plain text is filtered whole.
        """
        obj = None
        try:
            obj = json.loads(text)
        except json.JSONDecodeError:
            pass
        if isinstance(obj, dict):
            for args in obj.values():
                if isinstance(args, dict):
                    for key in ("content", "quote_content"):
                        if isinstance(args.get(key), str):
                            args[key] = self._filter_to_kept(args[key], kept)
            return json.dumps(obj)
        return self._filter_to_kept(text, kept)

    def _filter_to_kept(self, text, kept):
        # Dropping tokens changes how the remainder re-tokenizes, so
        # filter until the text is stable under encode -> decode.
        while text:
            ids = self.tokenizer.encode(text)
            allowed = [i for i in ids if i in kept]
            if len(allowed) == len(ids):
                break
            text = self.tokenizer.decode(allowed).strip()
        return text

    # -- policies ----------------------------------------------------------

    def _wants_brevity(self, text):
        # Only the rule portion counts, so personas can't trip the trigger.
        tail = text
        if "speak next?" in text:
            tail = text.rsplit("speak next?", 1)[1]
        elif "do_nothing" in text:
            tail = text.rsplit("do_nothing", 1)[1]
        return any(w in tail.lower() for w in self.BREVITY_WORDS)

    def _dialogue_turn(self, request, joined):
        last_user = next(
            (m["content"] for m in reversed(request.messages) if m["role"] == "user"),
            request.messages[-1]["content"],
        )
        words = last_user.split()
        limit = 3 if self._wants_brevity(joined) else 10
        return " ".join(words[:limit])

    def _keyword_score(self, table, text):
        lowered = text.lower()
        hits = [score for kw, score in table.items() if kw.lower() in lowered]
        return max(hits) if hits else self.keyword_default

    @staticmethod
    def _section(text, start, end):
        chunk = text.split(start, 1)[1] if start in text else text
        if end and end in chunk:
            chunk = chunk.split(end, 1)[0]
        return chunk.strip()

    def _judge_alignment(self, joined):
        sim = self._section(joined, "Agent's response:", "Reference response:")
        ref = self._section(joined, "Reference response:", "Please rate")
        if self.align_keyword_table is not None:
            score = self._keyword_score(self.align_keyword_table, sim)
            return json.dumps({"reason": "keyword table", "score": score})
        ref_words = set(ref.lower().split())
        sim_words = set(sim.lower().split())
        overlap = len(sim_words & ref_words) / len(ref_words) if ref_words else 0.0
        score = 1 + min(4, int(overlap * 4))
        return json.dumps({"reason": f"word overlap {overlap:.2f}", "score": score})

    def _judge_expressiveness(self, joined):
        sim = self._section(joined, "Agents' language:", "Please rate")
        if self.exp_keyword_table is not None:
            score = self._keyword_score(self.exp_keyword_table, sim)
            return json.dumps({"reason": "keyword table", "score": score})
        words = sim.split()
        mean_len = sum(len(w) for w in words) / len(words) if words else 5.0
        score = max(1, 6 - min(5, int(round(mean_len))))
        return json.dumps({"reason": f"mean word length {mean_len:.2f}", "score": score})

    def _crossover(self, joined):
        p1 = self._section(joined, "Prompt 1:", "Prompt 2:")
        p2 = self._section(joined, "Prompt 2:", None)
        first = p1.split(". ")[0].rstrip(".") + "."
        last = p2.split(". ")[-1]
        return f"<prompt>{first} {last}</prompt>"

    def _mutate(self, joined):
        p = self._section(joined, "Prompt:", None)
        return f"<prompt>{p} Keep it clear.</prompt>"

    def _label_stance(self, joined):
        tweet = self._section(joined, "Question tweet:", "Please choose").lower()
        if any(w in tweet for w in ("true", "agree", "confirmed", "yes")):
            stance = "support"
        elif any(w in tweet for w in ("false", "fake", "hoax", "lie", "wrong", "not")):
            stance = "deny"
        elif "?" in tweet or "source" in tweet:
            stance = "query"
        else:
            stance = "comment"
        return json.dumps({"stance": stance})

    def _label_belief(self, joined):
        tweet = self._section(joined, "Final Tweet:", "If the author").lower()
        if any(w in tweet for w in ("fake", "hoax", "doubt", "false", "really?")):
            label = 0
        elif any(w in tweet for w in ("terrible", "awful", "must", "should", "sad", "true")):
            label = 1
        else:
            label = 2
        return json.dumps({"reason": "keyword heuristic", "label": label})

    def _label_hisim_stance(self, joined):
        tweet = self._section(joined, "Response:", "Please choose").lower()
        if any(w in tweet for w in ("support", "agree", "stand with", "yes")):
            stance = "support"
        elif any(w in tweet for w in ("oppose", "against", "no", "disagree")):
            stance = "oppose"
        else:
            stance = "neutral"
        return json.dumps({"stance": stance})

    def _label_hisim_content(self, joined):
        tweet = self._section(joined, "Response:", "Please choose").lower()
        if any(w in tweet for w in ("join", "sign", "act now", "protest", "must")):
            label = "call_for_action"
        elif any(w in tweet for w in ("i think", "i believe", "in my opinion")):
            label = "sharing_of_opinion"
        elif any(w in tweet for w in ("according to", "reported", "article")):
            label = "reference_to_third_party"
        elif any(w in tweet for w in ("happened to me", "i was", "my story")):
            label = "testimony"
        else:
            label = "other"
        return json.dumps({"label": label})

    def _simulation_action(self, request, joined):
        system = request.messages[0]["content"]
        user = request.messages[-1]["content"]
        brief = self._wants_brevity(system)
        post_ids = re.findall(r"\[(\d+)\]", user)
        if not post_ids:
            return json.dumps({"do_nothing": {}})
        target = int(post_ids[0])
        content = "I agree with this." if brief else "I agree with this. " + self.VERBOSE_TAIL
        if "create_post" in joined:
            return json.dumps({"create_post": {"content": content}})
        return json.dumps({"quote_post": {"post_id": target, "quote_content": content}})

    # -- embeddings ----------------------------------------------------------

    def embed(self, text):
        if not text:
            raise DomainError("cannot embed empty text")
        vec = []
        for i in range(self.embed_dim):
            digest = hashlib.sha256(f"{self.seed}|{text}|{i}".encode("utf-8")).digest()
            value = int.from_bytes(digest[:8], "big") / float(2**64)
            vec.append(2.0 * value - 1.0)
        norm = math.sqrt(sum(v * v for v in vec))
        return [v / norm for v in vec]


def _parse_judge_json(text, score_key="score"):
    obj = extract_json_object(text)
    if obj is None:
        return None
    reason = obj.get("reason")
    score = obj.get(score_key)
    if not isinstance(reason, str) or not reason:
        return None
    if not isinstance(score, int) or not (1 <= score <= 5):
        return None
    return JudgeScore(score=score, reason=reason)


def _judge_call(backend, prompt):
    request = ChatRequest(messages=[{"role": "user", "content": prompt}])
    response = backend.chat(request)
    parsed = _parse_judge_json(response.text)
    if parsed is not None:
        return parsed
    retry = ChatRequest(
        messages=[
            {"role": "user", "content": prompt},
            {"role": "assistant", "content": response.text},
            {"role": "user", "content": 'Please answer again strictly as JSON: {"reason": <str>, "score": <int>}'},
        ]
    )
    parsed = _parse_judge_json(backend.chat(retry).text)
    if parsed is not None:
        return parsed
    raise JudgeFailure("judge output unparseable after retry")


def judge_alignment(backend, simulated, reference):
    if not simulated or not reference:
        raise DomainError("both dialogue texts must be non-empty")
    prompt = prompts.ALIGNMENT_PROMPT.format(simulated_dialog=simulated, reference_dialog=reference)
    return _judge_call(backend, prompt)


def judge_expressiveness(backend, dialogue):
    if not dialogue:
        raise DomainError("dialogue must be non-empty")
    prompt = prompts.EXPRESSIVENESS_PROMPT.format(simulated_dialog=dialogue)
    return _judge_call(backend, prompt)


def embed(backend, text):
    return backend.embed(text)
