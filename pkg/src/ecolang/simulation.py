"""Multi-agent social-simulation harness (reply-thread and opinion modes).

Agents decide concurrently against a frozen snapshot of the world; actions
are applied single-threaded in ascending agent-id order so post ids and
histories are fully deterministic.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import prompts
from .backends import ChatRequest
from .errors import DomainError, TransportError

logger = logging.getLogger(__name__)

THREAD_MODE = "thread"
OPINION_MODE = "opinion"

CONTENT_KINDS = ("source", "reply", "quote", "original")


@dataclass(frozen=True)
class AgentProfile:
    id: int
    name: str
    bio: str
    followees: tuple = ()


@dataclass(frozen=True)
class Post:
    id: int
    author_id: int
    content: str
    step: int
    kind: str
    parent_id: int = None

    def __post_init__(self):
        needs_parent = self.kind in ("reply", "quote", "repost")
        if needs_parent != (self.parent_id is not None):
            raise DomainError(f"post {self.id}: parent_id presence does not match kind {self.kind}")
        if self.kind == "repost" and self.content:
            raise DomainError(f"post {self.id}: repost must have empty content")


@dataclass(frozen=True)
class Action:
    kind: str
    arguments: dict = field(default_factory=dict)
    parse_failure: bool = False


@dataclass
class SimScenario:
    mode: str
    agents: list
    num_steps: int
    source_posts: list = field(default_factory=list)
    news_schedule: dict = field(default_factory=dict)  # step -> list of (author_name, content)
    rule_text: str = None
    mask: object = None  # optional CompressedVocabulary
    memory_window: int = 20
    max_tokens: int = 512
    target: str = ""

    def __post_init__(self):
        if self.mode not in (THREAD_MODE, OPINION_MODE):
            raise DomainError(f"unknown mode {self.mode!r}")
        if self.num_steps < 1:
            raise DomainError("num_steps must be >= 1")
        if self.mode == THREAD_MODE and not self.source_posts:
            raise DomainError("thread mode needs at least one source post")
        if self.mode == OPINION_MODE and not self.news_schedule:
            raise DomainError("opinion mode needs a news schedule")
        ids = {a.id for a in self.agents}
        if len(ids) != len(self.agents):
            raise DomainError("agent ids must be unique")
        for a in self.agents:
            unknown = set(a.followees) - ids
            if unknown:
                raise DomainError(f"agent {a.id} follows unknown agents {sorted(unknown)}")

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as f:
            d = json.load(f)
        agents = [
            AgentProfile(id=a["id"], name=a["name"], bio=a["bio"], followees=tuple(a.get("followees", ())))
            for a in d["agents"]
        ]
        # sources/news share one record shape {step, author, content}
        source_posts = [(rec.get("author", "news"), rec["content"]) for rec in d.get("sources", [])]
        news_schedule = {}
        for rec in d.get("news", []):
            news_schedule.setdefault(int(rec["step"]), []).append(
                (rec.get("author", "news"), rec["content"])
            )
        return cls(
            mode=d["mode"],
            agents=agents,
            num_steps=d["num_steps"],
            source_posts=source_posts,
            news_schedule=news_schedule,
            rule_text=d.get("rule_text"),
            memory_window=d.get("memory_window", 20),
            max_tokens=d.get("max_tokens", 512),
            target=d.get("target", ""),
        )


NEWS_AUTHOR_ID = -1


@dataclass
class WorldState:
    posts: list = field(default_factory=list)
    step: int = 0
    next_post_id: int = 0

    def add_post(self, author_id, content, kind, parent_id=None, step=None):
        post = Post(
            id=self.next_post_id,
            author_id=author_id,
            content=content,
            step=self.step if step is None else step,
            kind=kind,
            parent_id=parent_id,
        )
        self.posts.append(post)
        self.next_post_id += 1
        return post


@dataclass
class CallRecord:
    step: int
    agent_id: int
    action: Action
    text: str
    prompt_tokens: int
    completion_tokens: int
    mask_enforced: bool


@dataclass
class SimRun:
    scenario: SimScenario
    world: WorldState
    calls: list
    tokenizer_fingerprint: str = None

    @property
    def token_p(self):
        return sum(c.prompt_tokens for c in self.calls)

    @property
    def token_c(self):
        return sum(c.completion_tokens for c in self.calls)

    @property
    def token_r(self):
        """Completion tokens over content-bearing actions only."""
        return sum(
            c.completion_tokens for c in self.calls if c.action.kind in ("create_post", "quote_post")
        )

    def generated_texts(self):
        return [
            p.content
            for p in self.world.posts
            if p.author_id != NEWS_AUTHOR_ID and p.kind in CONTENT_KINDS and p.content
        ]

    def summary(self):
        return {
            "mode": self.scenario.mode,
            "num_steps": self.scenario.num_steps,
            "num_agents": len(self.scenario.agents),
            "num_posts": len(self.world.posts),
            "token_r": self.token_r,
            "token_p": self.token_p,
            "token_c": self.token_c,
            "calls": len(self.calls),
            "mask_enforced_all": bool(self.calls) and all(c.mask_enforced for c in self.calls),
            "tokenizer_fingerprint": self.tokenizer_fingerprint,
        }

    def write(self, out_dir):
        import os

        os.makedirs(out_dir, exist_ok=True)
        events_path = os.path.join(out_dir, "events.jsonl")
        with open(events_path, "w", encoding="utf-8") as f:
            for c in self.calls:
                f.write(
                    json.dumps(
                        {
                            "step": c.step,
                            "agent_id": c.agent_id,
                            "action": c.action.kind,
                            "arguments": c.action.arguments,
                            "parse_failure": c.action.parse_failure,
                            "prompt_tokens": c.prompt_tokens,
                            "completion_tokens": c.completion_tokens,
                            "mask_enforced": c.mask_enforced,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
        posts_path = os.path.join(out_dir, "posts.jsonl")
        with open(posts_path, "w", encoding="utf-8") as f:
            for p in self.world.posts:
                f.write(
                    json.dumps(
                        {
                            "id": p.id,
                            "author_id": p.author_id,
                            "content": p.content,
                            "step": p.step,
                            "kind": p.kind,
                            "parent_id": p.parent_id,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as f:
            json.dump(self.summary(), f, sort_keys=True, indent=1)


def visible_posts(agent, world, scenario):
    """Posts an agent may see: news/source posts plus followees' posts from
    earlier steps, trimmed to the configured memory window."""
    followees = set(agent.followees)
    by_id = {p.id: p for p in world.posts}
    seen = {}
    for p in world.posts:
        if p.author_id == NEWS_AUTHOR_ID:
            seen[p.id] = p
        elif p.author_id in followees and p.step < world.step:
            seen[p.id] = p
    if scenario.mode == THREAD_MODE:
        # visible posts pull in their ancestor chain for thread context
        frontier = list(seen.values())
        while frontier:
            p = frontier.pop()
            parent = by_id.get(p.parent_id) if p.parent_id is not None else None
            if parent is not None and parent.id not in seen:
                seen[parent.id] = parent
                frontier.append(parent)
    out = sorted(seen.values(), key=lambda p: (p.step, p.id))
    return out[-scenario.memory_window :]


def build_agent_prompt(agent, visible, scenario):
    """System = action-space prompt + profile + rule; user = rendered feed."""
    if agent not in scenario.agents:
        raise DomainError(f"agent {agent.id} not in scenario")
    template = prompts.THREAD_ACTION_PROMPT if scenario.mode == THREAD_MODE else prompts.OPINION_ACTION_PROMPT
    action_prompt = template.format(rule_prompt=scenario.rule_text or "")
    system = f"{action_prompt.rstrip()}\n\nYour profile: {agent.name}: {agent.bio}"
    if scenario.rule_text:
        system += f"\n\n{scenario.rule_text}"
    lines = [f"[{p.id}] (step {p.step}) author {p.author_id}: {p.content}" for p in visible]
    user = "Here are the posts you can see:\n" + ("\n".join(lines) if lines else "(none)")
    return ChatRequest(
        messages=[{"role": "system", "content": system}, {"role": "user", "content": user}],
        max_tokens=scenario.max_tokens,
        temperature=0.0,
        constraints=scenario.mask,
    )


_ACTION_KINDS = ("do_nothing", "create_post", "repost", "quote_post")


def parse_action(model_output):
    """Total parse of a model action; anything unrecognized is do_nothing
    with the parse-failure flag set."""
    from .backends import extract_json_object

    obj = extract_json_object(model_output or "")
    if obj is None:
        return Action(kind="do_nothing", parse_failure=True)
    for kind in _ACTION_KINDS:
        if kind in obj:
            args = obj[kind] if isinstance(obj[kind], dict) else {}
            return _validate_action(kind, args)
    if "action" in obj and obj["action"] in _ACTION_KINDS:
        return _validate_action(obj["action"], obj.get("arguments", {}))
    return Action(kind="do_nothing", parse_failure=True)


def _validate_action(kind, args):
    if kind == "create_post" and not isinstance(args.get("content"), str):
        return Action(kind="do_nothing", parse_failure=True)
    if kind == "repost" and not isinstance(args.get("post_id"), int):
        return Action(kind="do_nothing", parse_failure=True)
    if kind == "quote_post" and not (
        isinstance(args.get("post_id"), int) and isinstance(args.get("quote_content"), str)
    ):
        return Action(kind="do_nothing", parse_failure=True)
    return Action(kind=kind, arguments=args)


def _mode_allows(mode, kind):
    if mode == THREAD_MODE:
        return kind in ("do_nothing", "quote_post")
    return kind in _ACTION_KINDS


def step(world, actor, scenario, max_workers=4):
    """Advance the world one step; returns (new_world, call records)."""
    world.step += 1
    for author, content in scenario.news_schedule.get(world.step, ()):
        world.add_post(NEWS_AUTHOR_ID, content, kind="source")

    agents = sorted(scenario.agents, key=lambda a: a.id)
    snapshots = {a.id: visible_posts(a, world, scenario) for a in agents}

    def decide(agent):
        request = build_agent_prompt(agent, snapshots[agent.id], scenario)
        try:
            response = actor.chat(request)
        except TransportError:
            logger.warning("agent %d does nothing this step: actor failed", agent.id)
            return agent, None, Action(kind="do_nothing", parse_failure=True)
        return agent, response, parse_action(response.text)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        decisions = list(pool.map(decide, agents))

    records = []
    for agent, response, action in decisions:
        visible_ids = {p.id for p in snapshots[agent.id]}
        if not _mode_allows(scenario.mode, action.kind):
            action = Action(kind="do_nothing", parse_failure=True)
        if action.kind in ("repost", "quote_post") and action.arguments.get("post_id") not in visible_ids:
            action = Action(kind="do_nothing", parse_failure=True)
        if action.kind == "create_post":
            world.add_post(agent.id, action.arguments["content"], kind="original")
        elif action.kind == "repost":
            world.add_post(agent.id, "", kind="repost", parent_id=action.arguments["post_id"])
        elif action.kind == "quote_post":
            world.add_post(
                agent.id,
                action.arguments["quote_content"],
                kind="quote",
                parent_id=action.arguments["post_id"],
            )
        records.append(
            CallRecord(
                step=world.step,
                agent_id=agent.id,
                action=action,
                text=response.text if response else "",
                prompt_tokens=response.prompt_tokens if response else 0,
                completion_tokens=response.completion_tokens if response else 0,
                mask_enforced=response.mask_enforced if response else False,
            )
        )
    return world, records


def run_simulation(scenario, actor, rng_seed=0, max_workers=4, tokenizer_fingerprint=None):
    """Execute the scenario and record the full history and token accounting."""
    world = WorldState()
    for author, content in scenario.source_posts:
        world.add_post(NEWS_AUTHOR_ID, content, kind="source", step=0)
    calls = []
    for _ in range(scenario.num_steps):
        world, records = step(world, actor, scenario, max_workers=max_workers)
        calls.extend(records)
    fingerprint = tokenizer_fingerprint
    if fingerprint is None and scenario.mask is not None:
        fingerprint = scenario.mask.tokenizer_fingerprint
    return SimRun(scenario=scenario, world=world, calls=calls, tokenizer_fingerprint=fingerprint)


@dataclass(frozen=True)
class ComplianceReport:
    total_tokens: int
    violations: int

    @property
    def violation_rate(self):
        return self.violations / self.total_tokens if self.total_tokens else 0.0


def validate_mask_compliance(run, vocab, tokenizer):
    """Tokenize every generated content and count ids outside the kept set."""
    if run.tokenizer_fingerprint is not None and run.tokenizer_fingerprint != vocab.tokenizer_fingerprint:
        raise DomainError("run and vocabulary use different tokenizers")
    if vocab.tokenizer_fingerprint != tokenizer.fingerprint:
        raise DomainError("vocabulary and tokenizer fingerprints differ")
    total = 0
    violations = 0
    for text in run.generated_texts():
        ids = tokenizer.encode(text)
        total += len(ids)
        violations += sum(1 for i in ids if i not in vocab.kept_token_ids)
    return ComplianceReport(total_tokens=total, violations=violations)
