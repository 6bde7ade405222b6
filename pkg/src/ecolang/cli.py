"""Command-line entry point: stats, cluster, compress, evolve, simulate, evaluate."""

from __future__ import annotations

import functools
import json
import logging
import os
import sys

import click

from . import clustering, compression, corpus, evolution, metrics, prompts, sentiment, simulation
from .backends import MockBackend, OpenAIChatBackend, JUDGE_API_KEY_ENV
from .errors import ConfigError, DomainError, EcolangError, ParseError
from .tokenizer import TokenizerSpec

EXIT_USAGE = 2
EXIT_RUNTIME = 1


def _load_config(path):
    if path is None:
        return {}
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib

        with open(path, "rb") as f:
            return tomllib.load(f)
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _merge(ctx, section, **flags):
    """Config-file values fill in for flags left at None; flags win."""
    cfg = dict(ctx.obj.get("config", {}).get(section, {}))
    for key, value in flags.items():
        if value is not None:
            cfg[key] = value
    return cfg


def _require(cfg, *keys):
    for key in keys:
        if cfg.get(key) is None:
            raise ConfigError(f"missing required option --{key.replace('_', '-')}")
        if key.endswith(("path", "file")) or key in ("corpus", "stats", "synsets", "embeddings", "tokenizer", "clusters", "scenario", "scenarios", "reference", "run_dir", "mask"):
            if isinstance(cfg[key], str) and not os.path.exists(cfg[key]):
                raise ConfigError(f"path for --{key.replace('_', '-')} does not exist: {cfg[key]}")
    return cfg


def _seed(ctx):
    seed = ctx.obj.get("seed")
    if seed is None:
        click.echo("notice: no --seed given, defaulting to 0", err=True)
        return 0
    return seed


def _backend(url, seed, role="actor"):
    if url is None or url == "mock":
        return MockBackend(seed=seed)
    if url.startswith("mock://"):
        return MockBackend(seed=int(url[len("mock://") :] or seed))
    env = JUDGE_API_KEY_ENV if role == "judge" else None
    kwargs = {"api_key_env": env} if env else {}
    return OpenAIChatBackend(url, **kwargs)


def _handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ConfigError, ParseError, DomainError, FileNotFoundError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_USAGE)
        except EcolangError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_RUNTIME)

    return wrapper


@click.group()
@click.option("--config", "config_path", type=str, default=None, help="TOML/JSON config file.")
@click.option("--seed", type=int, default=None, help="RNG seed for randomized stages.")
@click.option("--out-dir", default=None, help="Output directory.")
@click.option("--backend-url", default=None, help="Actor backend base URL (or 'mock').")
@click.option("--judge-url", default=None, help="Judge backend base URL (or 'mock').")
@click.option("--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, seed, out_dir, backend_url, judge_url, verbose):
    """Induce a compressed agent language and evaluate it in simulations."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING)
    ctx.ensure_object(dict)
    try:
        ctx.obj["config"] = _load_config(config_path)
    except (OSError, ValueError) as e:
        click.echo(f"error: cannot load config: {e}", err=True)
        sys.exit(EXIT_USAGE)
    ctx.obj["seed"] = seed
    ctx.obj["out_dir"] = out_dir
    ctx.obj["backend_url"] = backend_url
    ctx.obj["judge_url"] = judge_url


def _out_dir(ctx, cfg):
    out = cfg.get("out_dir") or ctx.obj.get("out_dir") or "."
    os.makedirs(out, exist_ok=True)
    return out


@main.command("stats")
@click.option("--corpus", "corpus_path", default=None)
@click.option("--format", "fmt", type=click.Choice(["lines", "jsonl"]), default=None)
@click.option("--tokenizer", "tokenizer_path", default=None)
@click.option("--out-dir", default=None)
@click.pass_context
@_handle_errors
def cmd_stats(ctx, corpus_path, fmt, tokenizer_path, out_dir):
    """Compute word frequency/length statistics and percentiles."""
    cfg = _require(
        _merge(ctx, "stats", corpus=corpus_path, format=fmt, tokenizer=tokenizer_path, out_dir=out_dir),
        "corpus",
        "tokenizer",
    )
    tok = TokenizerSpec.from_file(cfg["tokenizer"])
    corp = corpus.ingest_corpus(cfg["corpus"], format=cfg.get("format", "lines"))
    stats = corpus.compute_word_stats(corp, tok)
    table = corpus.percentile_scores(stats)
    out = _out_dir(ctx, cfg)
    path = os.path.join(out, "stats.json")
    corpus.export_stats(stats, table, path)
    click.echo(f"wrote {path}: {len(stats.entries)} words, {stats.total_words} occurrences")


@main.command("cluster")
@click.option("--stats", "stats_path", default=None)
@click.option("--synsets", "synsets_path", default=None)
@click.option("--embeddings", "embeddings_path", default=None)
@click.option("--merge-threshold", type=float, default=None)
@click.option("--out-dir", default=None)
@click.pass_context
@_handle_errors
def cmd_cluster(ctx, stats_path, synsets_path, embeddings_path, merge_threshold, out_dir):
    """Assign corpus words to merged synsets."""
    cfg = _require(
        _merge(
            ctx,
            "cluster",
            stats=stats_path,
            synsets=synsets_path,
            embeddings=embeddings_path,
            merge_threshold=merge_threshold,
            out_dir=out_dir,
        ),
        "stats",
        "synsets",
        "embeddings",
    )
    store = clustering.EmbeddingStore.from_file(cfg["embeddings"])
    synsets = clustering.load_synsets(cfg["synsets"], store)
    synsets = clustering.merge_clusters(synsets, cfg.get("merge_threshold") or 0.8)
    stats, _ = corpus.load_stats(cfg["stats"])
    assignment = clustering.cluster_corpus(stats, synsets, store)
    out = _out_dir(ctx, cfg)
    path = os.path.join(out, "clusters.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(assignment.to_json(), f, sort_keys=True, indent=1)
    click.echo(
        f"wrote {path}: {len(assignment.clusters)} clusters, {len(assignment.unclustered)} unclustered words"
    )


@main.command("compress")
@click.option("--stats", "stats_path", default=None)
@click.option("--clusters", "clusters_path", default=None)
@click.option("--tokenizer", "tokenizer_path", default=None)
@click.option("--ratio", type=float, default=None)
@click.option("--lambda-freq", type=float, default=None)
@click.option("--lambda-token", type=float, default=None)
@click.option("--out-dir", default=None)
@click.pass_context
@_handle_errors
def cmd_compress(ctx, stats_path, clusters_path, tokenizer_path, ratio, lambda_freq, lambda_token, out_dir):
    """Select kept words per cluster and derive the decoding mask."""
    cfg = _require(
        _merge(
            ctx,
            "compress",
            stats=stats_path,
            clusters=clusters_path,
            tokenizer=tokenizer_path,
            ratio=ratio,
            lambda_freq=lambda_freq,
            lambda_token=lambda_token,
            out_dir=out_dir,
        ),
        "stats",
        "clusters",
        "tokenizer",
    )
    tok = TokenizerSpec.from_file(cfg["tokenizer"])
    _, table = corpus.load_stats(cfg["stats"])
    with open(cfg["clusters"], encoding="utf-8") as f:
        assignment = clustering.ClusterAssignment.from_json(json.load(f))
    retention = compression.RetentionConfig(
        lambda_freq=cfg.get("lambda_freq", 1.0) if cfg.get("lambda_freq") is not None else 1.0,
        lambda_token=cfg.get("lambda_token", 1.0) if cfg.get("lambda_token") is not None else 1.0,
        retention_ratio=cfg.get("ratio") if cfg.get("ratio") is not None else 0.6,
    )
    kept = compression.select_words(assignment, table, retention)
    vocab = compression.derive_token_set(kept, tok)
    out = _out_dir(ctx, cfg)
    vocab.save(os.path.join(out, "vocabulary.json"))
    compression.export_decoding_mask(vocab, "allow_list", os.path.join(out, "mask_allow.json"))
    compression.export_decoding_mask(vocab, "deny_bias", os.path.join(out, "mask_deny.json"))
    kept_ids, total = len(vocab.kept_token_ids), vocab.vocab_size
    click.echo(f"kept {kept_ids} of {total} token ids ({100 * kept_ids / total:.1f}%)")


@main.command("evolve")
@click.option("--scenarios", "scenarios_path", default=None)
@click.option("--seeds-file", default=None, help="Rule seeds, one per line (default: built-in ten).")
@click.option("--n", "n_rules", type=int, default=None)
@click.option("--m", "m_traj", type=int, default=None)
@click.option("--t", "t_iters", type=int, default=None)
@click.option("--max-turns", type=int, default=None)
@click.option("--operator-url", default=None)
@click.option("--literal-efficiency", is_flag=True, default=None)
@click.option("--resume", is_flag=True)
@click.option("--out-dir", default=None)
@click.pass_context
@_handle_errors
def cmd_evolve(ctx, scenarios_path, seeds_file, n_rules, m_traj, t_iters, max_turns, operator_url, literal_efficiency, resume, out_dir):
    """Evolve communication rules over dialogue scenarios."""
    cfg = _require(
        _merge(
            ctx,
            "evolve",
            scenarios=scenarios_path,
            seeds_file=seeds_file,
            N=n_rules,
            M=m_traj,
            T=t_iters,
            max_turns=max_turns,
            operator_url=operator_url,
            literal_efficiency=literal_efficiency,
            out_dir=out_dir,
        ),
        "scenarios",
    )
    seeds = list(prompts.INITIAL_RULES)
    if cfg.get("seeds_file"):
        with open(cfg["seeds_file"], encoding="utf-8") as f:
            seeds = [line.strip() for line in f if line.strip()]
    seed = _seed(ctx)
    config = evolution.EvolveConfig(
        scenarios=evolution.load_scenarios(cfg["scenarios"]),
        seeds=seeds,
        N=cfg.get("N") or len(seeds),
        M=cfg.get("M") or 1,
        T=cfg.get("T") if cfg.get("T") is not None else 5,
        max_turns=cfg.get("max_turns") or 8,
        rng_seed=seed,
        literal_efficiency=bool(cfg.get("literal_efficiency")),
    )
    actor = _backend(ctx.obj.get("backend_url") or cfg.get("backend_url"), seed)
    judge = _backend(ctx.obj.get("judge_url") or cfg.get("judge_url"), seed, role="judge")
    operator = judge if cfg.get("operator_url") is None else _backend(cfg["operator_url"], seed)
    out = _out_dir(ctx, cfg)
    result = evolution.evolve(config, actor, judge, operator=operator, out_dir=out, resume=resume)
    for i, rule in enumerate(result.best_per_iteration, start=1):
        click.echo(f"iter {i}: best fitness {rule.fitness:.4f}: {rule.text}")


@main.command("simulate")
@click.option("--scenario", "scenario_path", default=None)
@click.option("--rule", "rule_text", default=None)
@click.option("--rule-file", default=None)
@click.option("--mask", "mask_path", default=None)
@click.option("--tokenizer", "tokenizer_path", default=None)
@click.option("--out-dir", default=None)
@click.pass_context
@_handle_errors
def cmd_simulate(ctx, scenario_path, rule_text, rule_file, mask_path, tokenizer_path, out_dir):
    """Run one social simulation and record the token accounting."""
    cfg = _require(
        _merge(
            ctx,
            "simulate",
            scenario=scenario_path,
            rule=rule_text,
            rule_file=rule_file,
            mask=mask_path,
            tokenizer=tokenizer_path,
            out_dir=out_dir,
        ),
        "scenario",
    )
    scenario = simulation.SimScenario.from_file(cfg["scenario"])
    if cfg.get("rule_file"):
        with open(cfg["rule_file"], encoding="utf-8") as f:
            scenario.rule_text = f.read().strip()
    elif cfg.get("rule"):
        scenario.rule_text = cfg["rule"]
    tok = TokenizerSpec.from_file(cfg["tokenizer"]) if cfg.get("tokenizer") else None
    if cfg.get("mask"):
        scenario.mask = compression.CompressedVocabulary.load(cfg["mask"])
    seed = _seed(ctx)
    actor = _backend(ctx.obj.get("backend_url") or cfg.get("backend_url"), seed)
    run = simulation.run_simulation(
        scenario, actor, rng_seed=seed, tokenizer_fingerprint=tok.fingerprint if tok else None
    )
    out = _out_dir(ctx, cfg)
    run.write(out)
    if scenario.mask is not None and tok is not None:
        report = simulation.validate_mask_compliance(run, scenario.mask, tok)
        with open(os.path.join(out, "compliance.json"), "w", encoding="utf-8") as f:
            json.dump(
                {
                    "total_tokens": report.total_tokens,
                    "violations": report.violations,
                    "violation_rate": report.violation_rate,
                },
                f,
                sort_keys=True,
                indent=1,
            )
    s = run.summary()
    click.echo(f"token_r={s['token_r']} token_p={s['token_p']} token_c={s['token_c']} posts={s['num_posts']}")


def _load_run(run_dir):
    with open(os.path.join(run_dir, "summary.json"), encoding="utf-8") as f:
        summary = json.load(f)
    posts = []
    with open(os.path.join(run_dir, "posts.jsonl"), encoding="utf-8") as f:
        for line in f:
            if line.strip():
                posts.append(json.loads(line))
    return summary, posts


@main.command("evaluate")
@click.option("--run-dir", default=None)
@click.option("--reference", "reference_path", default=None, help="JSONL {user_id, text, step}.")
@click.option("--scheme", "schemes", multiple=True, type=click.Choice(sorted(metrics.SCHEMES)))
@click.option("--target", default="", help="Stance target for hisim_stance labeling.")
@click.option("--tokenizer", "tokenizer_path", default=None)
@click.option("--out-dir", default=None)
@click.pass_context
@_handle_errors
def cmd_evaluate(ctx, run_dir, reference_path, schemes, target, tokenizer_path, out_dir):
    """Compare a simulation run against reference data."""
    cfg = _require(
        _merge(
            ctx,
            "evaluate",
            run_dir=run_dir,
            reference=reference_path,
            tokenizer=tokenizer_path,
            out_dir=out_dir,
        ),
        "run_dir",
        "reference",
    )
    summary, posts = _load_run(cfg["run_dir"])
    refs = []
    with open(cfg["reference"], encoding="utf-8") as f:
        for line in f:
            if line.strip():
                refs.append(json.loads(line))

    seed = _seed(ctx)
    judge = _backend(ctx.obj.get("judge_url") or cfg.get("judge_url"), seed, role="judge")
    embedder = _backend(ctx.obj.get("backend_url") or cfg.get("backend_url"), seed)

    # pair each agent's first content post with the same user's reference text
    sim_first = {}
    for p in posts:
        if p["author_id"] >= 0 and p["content"] and p["author_id"] not in sim_first:
            sim_first[p["author_id"]] = p["content"]
    ref_first = {}
    for r in refs:
        if r.get("user_id") is not None and r["user_id"] not in ref_first:
            ref_first[r["user_id"]] = r["text"]
    paired = sorted(set(sim_first) & set(ref_first))
    if not paired:
        raise DomainError("no paired users between run and reference")
    skipped = len(set(sim_first) ^ set(ref_first))
    sim_texts = [sim_first[u] for u in paired]
    ref_texts = [ref_first[u] for u in paired]

    report = metrics.MetricReport(
        token_r=summary.get("token_r"), token_p=summary.get("token_p"), token_c=summary.get("token_c")
    )
    for scheme in schemes or ():
        sim_labels = metrics.label_responses(
            list(zip(paired, sim_texts)), scheme, judge, target=target
        )
        ref_labels = metrics.label_responses(
            list(zip(paired, ref_texts)), scheme, judge, target=target
        )
        value = metrics.consistency(sim_labels, ref_labels)
        if scheme in ("pheme_stance", "hisim_stance"):
            report.stance_consistency = value
        elif scheme == "belief":
            report.belief_consistency = value
            report.belief_js = metrics.js_divergence(
                metrics.Distribution.from_labels(sim_labels),
                metrics.Distribution.from_labels(ref_labels),
            )
        else:
            report.content_consistency = value

    report.cos_sim, report.jaccard, report.word_js = metrics.text_similarity(sim_texts, ref_texts, embedder)
    if cfg.get("tokenizer"):
        tok = TokenizerSpec.from_file(cfg["tokenizer"])
        report.delta_ls, report.delta_lw = metrics.length_deltas(sim_texts, ref_texts, tok)

    ref_steps = [r.get("step") for r in refs]
    if all(s is not None for s in ref_steps) and refs:
        num_steps = summary["num_steps"]
        sim_by_step = [[] for _ in range(num_steps)]
        for p in posts:
            if p["author_id"] >= 0 and p["content"] and 1 <= p["step"] <= num_steps:
                sim_by_step[p["step"] - 1].append(p["content"])
        max_ref_step = max(ref_steps)
        if max_ref_step != num_steps:
            raise DomainError(f"reference covers {max_ref_step} steps, run has {num_steps}")
        ref_by_step = [[] for _ in range(num_steps)]
        for r in refs:
            ref_by_step[r["step"] - 1].append(r["text"])
        sim_series = metrics.opinion_series(sim_by_step, sentiment.lexicon_scorer)
        ref_series = metrics.opinion_series(ref_by_step, sentiment.lexicon_scorer)
        report.delta_bias, report.delta_div = metrics.delta_opinion(sim_series, ref_series)

    out = _out_dir(ctx, cfg)
    report.write(os.path.join(out, "report.json"))
    with open(os.path.join(out, "report.csv"), "w", encoding="utf-8") as f:
        f.write(report.to_csv_row())
    click.echo(f"evaluated {len(paired)} paired users ({skipped} unpaired skipped)")
    click.echo(json.dumps(report.to_json(), sort_keys=True))


if __name__ == "__main__":
    main()
