"""Command-line entry point.

Every subcommand is a thin composition of library calls; no behavior
lives only here. Exit codes: 0 success, 1 usage, 2 data error,
3 transport exhaustion.
"""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import click
import yaml

from . import agreement, evalkit, finetune
from .campaign import run_campaign
from .corpus import Corpus, load_corpus_file, validate_corpus_lines
from .errors import DataError, GatewayError, TransportExhausted
from .gateway import (CallPolicy, Gateway, GatewayConfig, HttpTransport,
                      MockTransport, ModelProfile, estimate_cost,
                      human_annotation_cost, load_gateway_config)
from .prompts import build_v1, build_v2
from .store import Store, llm_annotator
from .taxonomy import FeatureTaxonomy, load_default, load_taxonomy_file


@dataclass
class CliContext:
    taxonomy_path: str | None = None
    corpus_path: str | None = None
    store_path: str | None = None
    config_path: str | None = None
    _taxonomy: FeatureTaxonomy | None = None
    _corpus: Corpus | None = None
    _store: Store | None = None

    @property
    def taxonomy(self) -> FeatureTaxonomy:
        if self._taxonomy is None:
            self._taxonomy = (load_taxonomy_file(self.taxonomy_path)
                              if self.taxonomy_path else load_default())
        return self._taxonomy

    @property
    def corpus(self) -> Corpus:
        if self._corpus is None:
            if not self.corpus_path:
                raise click.UsageError("--corpus is required for this command")
            self._corpus = load_corpus_file(self.corpus_path)
        return self._corpus

    @property
    def store(self) -> Store:
        if self._store is None:
            if not self.store_path:
                raise click.UsageError("--store is required for this command")
            corpus = None
            if self.corpus_path:
                corpus = self.corpus
            self._store = Store(self.store_path, taxonomy=self.taxonomy,
                                corpus=corpus)
        return self._store

    def gateway_config(self) -> GatewayConfig:
        if not self.config_path:
            return GatewayConfig(endpoint="", api_key_env="RHETANN_API_KEY")
        return load_gateway_config(self.config_path)

    def gateway(self, mock: bool, seed: int, model: str) -> Gateway:
        config = self.gateway_config()
        profiles = dict(config.profiles)
        if mock:
            if model not in profiles:
                # offline runs do not need real prices
                profiles[model] = ModelProfile(name=model, price_in=Decimal("0"),
                                               price_out=Decimal("0"))
            transport = MockTransport(seed=seed)
        else:
            if not config.endpoint:
                raise click.UsageError(
                    "live campaigns need a gateway config with an endpoint; "
                    "pass --config or use --mock")
            transport = HttpTransport(config.endpoint, config.api_key_env)
        return Gateway(transport, profiles=profiles, taxonomy=self.taxonomy)


pass_ctx = click.make_pass_decorator(CliContext)


@click.group()
@click.option("--taxonomy", "taxonomy_path", type=click.Path(exists=True),
              default=None, help="Taxonomy file (defaults to the bundled one).")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True),
              default=None, help="Corpus JSONL file.")
@click.option("--store", "store_path", type=click.Path(), default=None,
              envvar="RHETANN_STORE", help="Annotation store log.")
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Gateway/model config YAML.")
@click.pass_context
def cli(ctx, taxonomy_path, corpus_path, store_path, config_path):
    """Rhetorical-feature annotation toolkit."""
    ctx.obj = CliContext(taxonomy_path=taxonomy_path, corpus_path=corpus_path,
                         store_path=store_path, config_path=config_path)


# -- corpus -------------------------------------------------------------

@cli.group()
def corpus():
    """Corpus ingestion and validation."""


@corpus.command("validate")
@click.argument("file", type=click.Path(exists=True))
def corpus_validate(file):
    """Check a corpus file; report parse errors and leaf/text mismatches."""
    lines = Path(file).read_text(encoding="utf-8").splitlines()
    errors, warnings = validate_corpus_lines(lines)
    for message in warnings:
        click.echo(f"{file}: warning: {message}")
    for message in errors:
        click.echo(f"{file}: error: {message}", err=True)
    click.echo(f"{len(lines)} lines: {len(errors)} error(s), "
               f"{len(warnings)} warning(s)")
    if errors:
        raise DataError(f"corpus file {file} failed validation")


# -- store --------------------------------------------------------------

@cli.group("store")
def store_group():
    """Store maintenance."""


@store_group.command("export")
@click.option("--out", type=click.Path(), default="-",
              help="Destination file, or - for stdout.")
@pass_ctx
def store_export(ctx, out):
    """Dump the store as canonical JSONL."""
    text = ctx.store.export()
    if out == "-":
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out}")


@store_group.command("import")
@click.argument("file", type=click.Path(exists=True))
@pass_ctx
def store_import(ctx, file):
    """Load an exported log into the --store path."""
    if not ctx.store_path:
        raise click.UsageError("--store is required")
    text = Path(file).read_text(encoding="utf-8")
    store = Store.import_log(text, path=ctx.store_path, taxonomy=ctx.taxonomy)
    click.echo(f"imported {len(store.annotation_history())} annotation(s), "
               f"{len(store.exchanges())} exchange(s)")


@store_group.command("compact")
@pass_ctx
def store_compact(ctx):
    """Drop superseded annotation revisions from the log."""
    dropped = ctx.store.compact()
    click.echo(f"dropped {dropped} superseded revision(s)")


# -- prompt -------------------------------------------------------------

@cli.group()
def prompt():
    """Prompt inspection."""


@prompt.command("render")
@click.option("--version", "version", type=click.Choice(["v1", "v2"]),
              required=True)
@click.option("--feature", required=True)
@click.option("--property", "property_id", default=None)
@click.option("--sentence", default=None, help="Sentence text inline.")
@click.option("--sentence-file", type=click.Path(exists=True), default=None)
@pass_ctx
def prompt_render(ctx, version, feature, property_id, sentence, sentence_file):
    """Emit the exact system/user message pair for one prompt."""
    if sentence is None and sentence_file is None:
        raise click.UsageError("provide --sentence or --sentence-file")
    text = sentence if sentence is not None else \
        Path(sentence_file).read_text(encoding="utf-8")
    if version == "v1":
        spec = build_v1(ctx.taxonomy, feature, text)
    else:
        if not property_id:
            raise click.UsageError("--property is required for v2")
        spec = build_v2(ctx.taxonomy, feature, property_id, text)
    click.echo(f"SYSTEM: {spec.system_text}")
    click.echo("USER:")
    click.echo(spec.user_text)


# -- campaign -----------------------------------------------------------

@cli.command("campaign")
@click.option("--version", type=click.Choice(["v1", "v2"]), required=True)
@click.option("--feature", "features", multiple=True,
              help="Feature id; repeatable. Default: all manual features.")
@click.option("--model", required=True)
@click.option("--temperature", type=float, default=0.0, show_default=True)
@click.option("--repetitions", type=int, default=1, show_default=True)
@click.option("--concurrency", type=int, default=8, show_default=True)
@click.option("--mock/--live", default=False,
              help="Use the deterministic offline transport.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Mock transport seed.")
@pass_ctx
def campaign_cmd(ctx, version, features, model, temperature, repetitions,
                 concurrency, mock, seed):
    """Run (or resume) an LLM annotation campaign over the corpus."""
    taxonomy = ctx.taxonomy
    feature_ids = list(features) or [f.id for f in taxonomy.manual_features()]
    policy = CallPolicy(temperature=temperature, repetitions=repetitions,
                        concurrency=concurrency)
    gateway = ctx.gateway(mock=mock, seed=seed, model=model)
    summary = run_campaign(ctx.store, ctx.corpus, taxonomy, gateway,
                           feature_ids, version.upper(), model, policy)
    click.echo(f"{summary.version} campaign with {summary.model} at "
               f"temperature {summary.temperature}: issued {summary.issued}, "
               f"skipped {summary.skipped} (already answered), wrote "
               f"{summary.records_written} annotation record(s)")
    for failure in summary.failures:
        click.echo(f"failed: {failure}", err=True)
    if summary.failures and not summary.records_written and not summary.skipped:
        raise TransportExhausted("every prompt in the campaign failed")


# -- agree --------------------------------------------------------------

@cli.group()
def agree():
    """Agreement and consistency reports."""


@agree.command("compute")
@click.option("--annotators", required=True,
              help="Comma-separated annotator ids.")
@click.option("--out", type=click.Path(), default="-",
              help="report.table | report.records | - for a table on stdout.")
@click.option("--normalization", type=click.Choice(["per_unit", "global"]),
              default="per_unit", show_default=True)
@click.option("--figure", "figure_path", type=click.Path(), default=None,
              help="Also render score-distribution box plots to this file.")
@pass_ctx
def agree_compute(ctx, annotators, out, normalization, figure_path):
    """Per-feature K/J/E scores plus per-(model, temperature) consistency."""
    ids = [a.strip() for a in annotators.split(",") if a.strip()]
    if len(ids) < 2:
        raise click.UsageError("need at least two annotator ids")
    store = ctx.store
    reports = []
    for feature_id in store.features_with_records():
        report = agreement.compute_report(store, feature_id, ids,
                                          jaccard_normalization=normalization)
        if report.n_units:
            reports.append(report)
    if not reports:
        raise DataError("store has no annotations for the listed annotators")
    consistency = agreement.consistency_by_group(
        [ex for _, ex in store.exchanges()])
    names = {f.id: f.name for f in ctx.taxonomy.features}
    if out.endswith(".records"):
        rendered = agreement.render_records(reports, consistency)
    else:
        rendered = agreement.report_table(reports, consistency, names)
    if out == "-":
        click.echo(rendered, nl=False)
    else:
        Path(out).write_text(rendered, encoding="utf-8")
        click.echo(f"wrote {out}")
    if figure_path:
        agreement.render_figure(reports, consistency, figure_path)
        click.echo(f"wrote {figure_path}")


# -- eval ---------------------------------------------------------------

@cli.group("eval")
def eval_group():
    """Ground-truth evaluation and error tagging."""


@eval_group.command("consensus")
@click.option("--feature", required=True)
@click.option("--k", type=int, default=30, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--annotators", default=None,
              help="Comma-separated ids; default all human annotators.")
@pass_ctx
def eval_consensus(ctx, feature, k, seed, annotators):
    """Sample sentences where all annotators assigned identical sets."""
    ids = [a.strip() for a in annotators.split(",")] if annotators else None
    chosen, note = evalkit.select_consensus(ctx.store, feature, k, seed,
                                            annotators=ids)
    for sentence_id in chosen:
        click.echo(sentence_id)
    if note:
        click.echo(f"note: {note}", err=True)


@eval_group.command("score")
@click.option("--feature", required=True)
@click.option("--annotator", "annotator_id", default=None,
              help="Score this annotator's records against ground truth.")
@click.option("--consensus", "consensus_ids", default=None,
              help="Comma-separated human ids; scores their consensus label.")
@click.option("--mode", type=click.Choice(["exact_set", "per_property"]),
              default="exact_set", show_default=True)
@pass_ctx
def eval_score(ctx, feature, annotator_id, consensus_ids, mode):
    """Accuracy against stored ground-truth labels."""
    if bool(annotator_id) == bool(consensus_ids):
        raise click.UsageError("provide exactly one of --annotator/--consensus")
    store = ctx.store
    gold = {sid: label.properties
            for (sid, _), label in store.ground_truth(feature).items()}
    if not gold:
        raise DataError(f"no ground-truth labels for feature {feature!r}")
    predictions = {}
    if annotator_id:
        system = annotator_id
        for sentence_id in gold:
            record = store.latest(sentence_id, annotator_id, feature)
            if record is None:
                raise DataError(f"{annotator_id!r} has no record for "
                                f"sentence {sentence_id!r}")
            predictions[sentence_id] = record.properties
    else:
        ids = [a.strip() for a in consensus_ids.split(",") if a.strip()]
        system = "consensus:" + ",".join(ids)
        for sentence_id in gold:
            sets = []
            for aid in ids:
                record = store.latest(sentence_id, aid, feature)
                if record is None:
                    raise DataError(f"{aid!r} has no record for {sentence_id!r}")
                sets.append(record.properties)
            if any(s != sets[0] for s in sets[1:]):
                raise DataError(f"annotators disagree on {sentence_id!r}; "
                                "not a consensus sentence")
            predictions[sentence_id] = sets[0]
    props = sorted(ctx.taxonomy.feature(feature).property_ids())
    cell = evalkit.score(predictions, gold, feature, system, mode=mode,
                         property_ids=props)
    click.echo(f"{feature} {system} {mode}: {cell.accuracy:.3f} "
               f"({cell.correct}/{cell.n})")


@eval_group.group("errors")
def eval_errors():
    """Error-taxonomy ledger."""


@eval_errors.command("tag")
@click.option("--exchange", "exchange_seq", type=int, required=True)
@click.option("--category", type=click.Choice(
    ["confounding", "over_generalizing", "hallucinating",
     "greedy_answering", "other"]), required=True)
@click.option("--rationale", default="")
@click.option("--tagger", default="")
@pass_ctx
def eval_errors_tag(ctx, exchange_seq, category, rationale, tagger):
    seq = evalkit.tag_error(ctx.store, exchange_seq, category, rationale, tagger)
    click.echo(f"tagged as revision {seq}")


@eval_errors.command("summarize")
@click.option("--feature", default=None)
@pass_ctx
def eval_errors_summarize(ctx, feature):
    counts = evalkit.summarize_errors(ctx.store, feature_id=feature)
    total = sum(counts.values())
    for category, count in counts.items():
        click.echo(f"{category}: {count}")
    click.echo(f"total: {total}")


# -- finetune -----------------------------------------------------------

@cli.group("finetune")
def finetune_group():
    """Fine-tuning dataset construction."""


@finetune_group.command("build")
@click.option("--kind", type=click.Choice(["small", "medium", "large"]),
              required=True)
@click.option("--feature", required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@pass_ctx
def finetune_build(ctx, kind, feature, seed, out_dir):
    """Build one dataset and write the training file plus manifest."""
    store = ctx.store
    if kind == "small":
        dataset = finetune.build_small(ctx.taxonomy, ctx.corpus, store, feature)
    elif kind == "medium":
        dataset = finetune.build_medium(ctx.taxonomy, ctx.corpus, store,
                                        feature, seed=seed)
    else:
        dataset = finetune.build_large(ctx.taxonomy, ctx.corpus, store, feature)
    path, manifest = finetune.emit(dataset, store, out_dir, seed=seed)
    click.echo(f"wrote {path} ({manifest.n_examples} examples, "
               f"digest {manifest.file_digest[:12]})")
    for warning in manifest.warnings:
        click.echo(f"warning: {warning}", err=True)


# -- cost ---------------------------------------------------------------

@cli.group()
def cost():
    """Cost estimation."""


@cost.command("estimate")
@click.option("--plan", "plan_path", type=click.Path(exists=True),
              required=True, help="YAML plan file.")
@pass_ctx
def cost_estimate(ctx, plan_path):
    """Price a plan: mode human (experts × rate) or llm (token arithmetic)."""
    plan = yaml.safe_load(Path(plan_path).read_text(encoding="utf-8")) or {}
    mode = plan.get("mode", "llm")
    if mode == "human":
        total = human_annotation_cost(
            int(plan["n_sentences"]), int(plan["n_annotators"]),
            Decimal(str(plan["price_per_sentence"])))
        click.echo(f"human annotation: {plan['n_sentences']} sentences x "
                   f"{plan['n_annotators']} experts x "
                   f"${plan['price_per_sentence']} = ${total}")
        return
    config = ctx.gateway_config()
    model = plan.get("model")
    if model not in config.profiles:
        raise DataError(f"unknown model {model!r}; configure it in --config")
    estimate = estimate_cost(
        int(plan["n_sentences"]), int(plan["items_per_sentence"]),
        int(plan.get("prompts_per_item", 1)), int(plan.get("repetitions", 1)),
        int(plan["avg_tokens_in"]), int(plan["avg_tokens_out"]),
        config.profiles[model])
    for key, value in estimate.breakdown().items():
        click.echo(f"{key}: {value}")


# -- serve --------------------------------------------------------------

@cli.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--assist-model", default=None)
@click.option("--assistant-capture/--no-assistant-capture", default=False)
@click.option("--mock/--live", default=False)
@click.option("--seed", type=int, default=0)
@pass_ctx
def serve(ctx, host, port, assist_model, assistant_capture, mock, seed):
    """Run the annotation HTTP server."""
    import uvicorn

    from .server import ServerConfig, create_app

    gateway = None
    if assist_model:
        gateway = ctx.gateway(mock=mock, seed=seed, model=assist_model)
    app = create_app(ctx.store, ctx.corpus, ctx.taxonomy, gateway=gateway,
                     config=ServerConfig(assistant_capture=assistant_capture,
                                         assist_model=assist_model))
    uvicorn.run(app, host=host, port=port)


def main(argv=None) -> int:
    """Entry point mapping exceptions onto the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except TransportExhausted as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    except DataError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except GatewayError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
