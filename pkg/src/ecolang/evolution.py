"""Genetic search over communication-rule prompts.

Each iteration simulates dialogues under the current rule population,
scores trajectories on judge alignment, judge expressiveness, and token
efficiency, then renews the population by fitness-proportional parent
sampling, LLM crossover/mutation, and elitist update.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import prompts
from .backends import ChatRequest, judge_alignment, judge_expressiveness
from .errors import ConfigError, DomainError, JudgeFailure, ParseError, TransportError

logger = logging.getLogger(__name__)

FITNESS_EPSILON = 1e-6
_PROMPT_MARKER_RE = re.compile(r"<prompt>(.*?)</prompt>", re.DOTALL)


@dataclass
class Rule:
    id: str
    text: str
    fitness: float = None
    trajectory_count: int = 0

    def __post_init__(self):
        if not self.text:
            raise DomainError("rule text must be non-empty")


@dataclass
class Population:
    rules: list
    generation: int = 0

    def __post_init__(self):
        ids = [r.id for r in self.rules]
        if len(ids) != len(set(ids)):
            raise DomainError("rule ids must be unique")

    @property
    def size(self):
        return len(self.rules)

    def best(self):
        scored = [r for r in self.rules if r.fitness is not None]
        if not scored:
            raise DomainError("no rule has a fitness yet")
        return min(scored, key=lambda r: (-r.fitness, r.id))


@dataclass(frozen=True)
class DialogueScenario:
    id: str
    persona_a: str
    persona_b: str
    seed_history: tuple
    reference_dialogue: str
    name_a: str = "A"
    name_b: str = "B"

    def __post_init__(self):
        if not self.persona_a or not self.persona_b:
            raise DomainError(f"scenario {self.id}: both personas must be non-empty")
        if not self.reference_dialogue:
            raise DomainError(f"scenario {self.id}: reference dialogue required")


@dataclass(frozen=True)
class Turn:
    speaker: str
    text: str
    completion_tokens: int


@dataclass
class TrajectoryScores:
    align: int
    exp: int
    eff: float
    fitness: float


@dataclass
class Trajectory:
    scenario_id: str
    rule_id: str
    turns: list
    reference: str
    complete: bool = True
    scores: TrajectoryScores = None

    @property
    def total_tokens(self):
        return sum(t.completion_tokens for t in self.turns)

    def rendered(self):
        return "\n".join(f"{t.speaker}: {t.text}" for t in self.turns)


@dataclass(frozen=True)
class FitnessWeights:
    lambda_align: float = 1.0
    lambda_eff: float = 0.6
    lambda_exp: float = 0.6

    def __post_init__(self):
        if min(self.lambda_align, self.lambda_eff, self.lambda_exp) < 0:
            raise DomainError("weights must be nonnegative")
        if self.lambda_align == self.lambda_eff == self.lambda_exp == 0:
            raise DomainError("at least one weight must be positive")


def load_scenarios(path):
    """JSONL: {id, persona_a, persona_b, seed_history: [[speaker, text]...],
    reference_dialogue, name_a?, name_b?}."""
    scenarios = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                scenarios.append(
                    DialogueScenario(
                        id=str(d["id"]),
                        persona_a=d["persona_a"],
                        persona_b=d["persona_b"],
                        seed_history=tuple((t[0], t[1]) for t in d.get("seed_history", [])),
                        reference_dialogue=d["reference_dialogue"],
                        name_a=d.get("name_a", "A"),
                        name_b=d.get("name_b", "B"),
                    )
                )
            except (json.JSONDecodeError, KeyError, IndexError, TypeError) as e:
                raise ParseError(f"malformed scenario record: {e}", line=lineno) from e
    if not scenarios:
        raise DomainError(f"no scenarios in {path}")
    return scenarios


def initialize_population(seeds, N=10):
    if len(seeds) != N:
        raise ConfigError(f"need exactly {N} seed rules, got {len(seeds)}")
    return Population(rules=[Rule(id=f"r{i:03d}", text=t) for i, t in enumerate(seeds)], generation=0)


def _generate_trajectory(scenario, rule, actor, max_turns):
    history = list(scenario.seed_history)
    turns = []
    personas = {scenario.name_a: scenario.persona_a, scenario.name_b: scenario.persona_b}
    speaker = scenario.name_a
    if history and history[-1][0] == scenario.name_a:
        speaker = scenario.name_b
    for _ in range(max_turns):
        prompt = prompts.COMMUNICATION_PROMPT.format(
            agent_name=speaker,
            agent_profile=personas[speaker],
            history="\n".join(f"{s}: {t}" for s, t in history) or "(no prior conversation)",
            rule=rule.text,
        )
        try:
            response = actor.chat(ChatRequest(messages=[{"role": "user", "content": prompt}]))
        except TransportError:
            logger.warning(
                "trajectory %s/%s incomplete: actor failed", scenario.id, rule.id
            )
            return Trajectory(
                scenario_id=scenario.id,
                rule_id=rule.id,
                turns=turns,
                reference=scenario.reference_dialogue,
                complete=False,
            )
        turns.append(Turn(speaker=speaker, text=response.text, completion_tokens=response.completion_tokens))
        history.append((speaker, response.text))
        speaker = scenario.name_b if speaker == scenario.name_a else scenario.name_a
    return Trajectory(
        scenario_id=scenario.id,
        rule_id=rule.id,
        turns=turns,
        reference=scenario.reference_dialogue,
    )


def run_communication(scenarios, population, M, actor, max_turns=8, max_workers=4):
    """Generate M trajectories per scenario with rules assigned by stratified
    round-robin over the id-sorted population."""
    if M < 1:
        raise DomainError("M must be >= 1")
    if not scenarios:
        raise DomainError("scenario list is empty")
    rules = sorted(population.rules, key=lambda r: r.id)
    slots = [
        (scenario, rules[(i * M + j) % len(rules)])
        for i, scenario in enumerate(scenarios)
        for j in range(M)
    ]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda sr: _generate_trajectory(sr[0], sr[1], actor, max_turns), slots))


def fitness(trajectory, batch, weights, judge, literal_efficiency=False):
    """Score one trajectory against its same-scenario batch.

    align and exp are judge scores normalized from 1..5 to [0,1]; eff is
    1 - total_tokens / batch-max (so brevity raises fitness) unless
    literal_efficiency flips it back to the raw normalized count.
    """
    if not trajectory.complete:
        raise DomainError("cannot score an incomplete trajectory")
    peers = [t for t in batch if t.scenario_id == trajectory.scenario_id and t.complete]
    if trajectory not in peers:
        raise DomainError("batch must contain the trajectory itself")
    max_tokens = max(t.total_tokens for t in peers)
    rendered = trajectory.rendered()
    try:
        align = judge_alignment(judge, rendered, trajectory.reference).score
    except JudgeFailure:
        logger.warning("alignment judge failed for %s/%s", trajectory.scenario_id, trajectory.rule_id)
        align = 1
    try:
        exp = judge_expressiveness(judge, rendered).score
    except JudgeFailure:
        logger.warning("expressiveness judge failed for %s/%s", trajectory.scenario_id, trajectory.rule_id)
        exp = 1
    normalized = trajectory.total_tokens / max_tokens if max_tokens > 0 else 1.0
    eff = normalized if literal_efficiency else 1.0 - normalized
    value = (
        weights.lambda_align * (align - 1) / 4
        + weights.lambda_eff * eff
        + weights.lambda_exp * (exp - 1) / 4
    )
    trajectory.scores = TrajectoryScores(align=align, exp=exp, eff=eff, fitness=value)
    return trajectory


def aggregate_rule_fitness(trajectories, population):
    """rule.fitness = mean trajectory fitness; rules with none stay unset."""
    by_rule = {}
    for t in trajectories:
        if t.scores is not None:
            by_rule.setdefault(t.rule_id, []).append(t.scores.fitness)
    for rule in population.rules:
        values = by_rule.get(rule.id)
        if values:
            rule.fitness = sum(values) / len(values)
            rule.trajectory_count = len(values)
        else:
            rule.fitness = None
            rule.trajectory_count = 0
    return population


def _sampling_weights(rules):
    return [max(r.fitness, FITNESS_EPSILON) if r.fitness is not None else FITNESS_EPSILON for r in rules]


def select_parents(population, k, rng):
    """k fitness-proportional parent pairs, without replacement within a pair."""
    if isinstance(rng, int):
        rng = random.Random(rng)
    rules = population.rules
    if len(rules) < 2:
        raise DomainError("need at least two rules to pair")
    weights = _sampling_weights(rules)
    pairs = []
    for _ in range(k):
        first = rng.choices(range(len(rules)), weights=weights, k=1)[0]
        rest = [i for i in range(len(rules)) if i != first]
        second = rng.choices(rest, weights=[weights[i] for i in rest], k=1)[0]
        pairs.append((rules[first], rules[second]))
    return pairs


def _operator_call(operator, prompt, fallback_text, new_id):
    for _ in range(2):
        response = operator.chat(ChatRequest(messages=[{"role": "user", "content": prompt}]))
        match = _PROMPT_MARKER_RE.search(response.text)
        if match and match.group(1).strip():
            return Rule(id=new_id, text=match.group(1).strip())
    logger.warning("operator produced no <prompt> markers twice; falling back to parent")
    return Rule(id=new_id, text=fallback_text)


def crossover(rule_a, rule_b, operator, new_id="child"):
    prompt = prompts.CROSSOVER_PROMPT.format(rule_prompt1=rule_a.text, rule_prompt2=rule_b.text)
    return _operator_call(operator, prompt, rule_a.text, new_id)


def mutate(rule, operator, new_id="mutant"):
    prompt = prompts.MUTATION_PROMPT.format(rule_prompt=rule.text)
    return _operator_call(operator, prompt, rule.text, new_id)


def update_population(population, children):
    """Elitist update: top half by fitness survives, children fill the rest."""
    n = population.size
    if len(children) != n // 2:
        raise DomainError(f"expected {n // 2} children, got {len(children)}")
    ranked = sorted(
        population.rules,
        key=lambda r: (r.fitness is None, -(r.fitness or 0.0), r.id),
    )
    survivors = ranked[: n - len(children)]
    return Population(rules=survivors + list(children), generation=population.generation + 1)


def _iteration_seed(base_seed, iteration):
    digest = hashlib.sha256(f"{base_seed}:{iteration}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class EvolveConfig:
    scenarios: list
    seeds: list = field(default_factory=lambda: list(prompts.INITIAL_RULES))
    N: int = 10
    M: int = 1
    T: int = 5
    weights: FitnessWeights = field(default_factory=FitnessWeights)
    max_turns: int = 8
    rng_seed: int = 0
    literal_efficiency: bool = False
    max_workers: int = 4


@dataclass
class EvolutionResult:
    best_per_iteration: list
    population: Population
    out_dir: str


def _checkpoint_path(out_dir, iteration):
    return os.path.join(out_dir, f"checkpoint_{iteration:03d}.json")


def _rule_record(rule):
    return {"id": rule.id, "text": rule.text, "fitness": rule.fitness, "trajectory_count": rule.trajectory_count}


def _write_checkpoint(out_dir, iteration, evaluated, new_population, best, trajectories, rng_seed):
    record = {
        "iteration": iteration,
        "rng_seed": rng_seed,
        "evaluated_population": [_rule_record(r) for r in evaluated.rules],
        "population": [_rule_record(r) for r in new_population.rules],
        "generation": new_population.generation,
        "best_rule": _rule_record(best),
        "trajectories": [
            {
                "scenario_id": t.scenario_id,
                "rule_id": t.rule_id,
                "total_tokens": t.total_tokens,
                "complete": t.complete,
                "scores": None
                if t.scores is None
                else {
                    "align": t.scores.align,
                    "exp": t.scores.exp,
                    "eff": t.scores.eff,
                    "fitness": t.scores.fitness,
                },
            }
            for t in trajectories
        ],
    }
    path = _checkpoint_path(out_dir, iteration)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(record, f, sort_keys=True, indent=1)
    return path


def _load_checkpoint(path):
    with open(path, encoding="utf-8") as f:
        record = json.load(f)
    rules = [
        Rule(id=r["id"], text=r["text"], fitness=r["fitness"], trajectory_count=r["trajectory_count"])
        for r in record["population"]
    ]
    best = record["best_rule"]
    return record["iteration"], Population(rules=rules, generation=record["generation"]), Rule(
        id=best["id"], text=best["text"], fitness=best["fitness"], trajectory_count=best["trajectory_count"]
    )


def run_iteration(population, config, actor, judge, operator, iteration):
    """One full communication -> selection -> variation -> update cycle."""
    trajectories = run_communication(
        config.scenarios, population, config.M, actor, config.max_turns, config.max_workers
    )
    complete = [t for t in trajectories if t.complete]
    with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
        list(
            pool.map(
                lambda t: fitness(t, complete, config.weights, judge, config.literal_efficiency),
                complete,
            )
        )
    aggregate_rule_fitness(complete, population)
    best = population.best()
    rng = random.Random(_iteration_seed(config.rng_seed, iteration))
    pairs = select_parents(population, population.size // 2, rng)
    children = []
    for i, (a, b) in enumerate(pairs):
        child = crossover(a, b, operator, new_id=f"tmp{i}")
        child = mutate(child, operator, new_id=f"g{iteration}c{i}")
        children.append(child)
    new_population = update_population(population, children)
    return new_population, best, trajectories


def evolve(config, actor, judge, operator=None, out_dir=None, resume=False):
    """Run (or resume) T iterations, checkpointing each one to out_dir."""
    operator = operator or actor
    if out_dir is None:
        raise ConfigError("out_dir is required for checkpointing")
    os.makedirs(out_dir, exist_ok=True)

    population = initialize_population(config.seeds, config.N)
    best_rules = []
    start = 1
    if resume:
        done = sorted(
            int(m.group(1))
            for m in (re.match(r"checkpoint_(\d+)\.json$", f) for f in os.listdir(out_dir))
            if m
        )
        if done:
            for it in done:
                _, _, best = _load_checkpoint(_checkpoint_path(out_dir, it))
                best_rules.append(best)
            _, population, _ = _load_checkpoint(_checkpoint_path(out_dir, done[-1]))
            start = done[-1] + 1

    for t in range(start, config.T + 1):
        new_population, best, trajectories = run_iteration(
            population, config, actor, judge, operator, t
        )
        _write_checkpoint(out_dir, t, population, new_population, best, trajectories, config.rng_seed)
        best_rules.append(best)
        population = new_population

    with open(os.path.join(out_dir, "best_rules.txt"), "w", encoding="utf-8") as f:
        for i, rule in enumerate(best_rules, start=1):
            f.write(f"iter {i}: {rule.text}\n")
    return EvolutionResult(best_per_iteration=best_rules, population=population, out_dir=out_dir)
