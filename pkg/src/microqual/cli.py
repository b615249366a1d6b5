"""Command-line front door: ingest, score, evaluate, retrieve, tree, serve, export.

Exit codes: 0 success, 1 operational error, 2 usage error. Every
subcommand is deterministic for a given data directory; numeric output is
rendered with a locale-independent decimal point at 4 decimals (pass
--precision full for 17 significant digits).
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from .core import (
    FileFormatError,
    FusionConfig,
    MicroqualError,
    SigmaConvention,
    ZScorePopulation,
)
from .fusion import confusion as run_confusion
from .fusion import score_batch, score_deltas
from .kb import (
    KnowledgeBase,
    StoredBaseline,
    batch_digest,
    read_delta_fixture,
    write_score_table,
)
from .retrieval import retrieval_report
from .tree import TreeConfig, evaluate_tree

DATA_DIR_ENVVAR = "MICROQUAL_DATA_DIR"


def open_kb(data_dir: str) -> KnowledgeBase:
    return KnowledgeBase.load(data_dir)


def fail(message: str):
    raise click.ClickException(message)


data_dir_option = click.option(
    "--data-dir",
    envvar=DATA_DIR_ENVVAR,
    default="./data/store",
    show_default=True,
    help="Store directory (embeddings.jsonl + knowledge.json).",
)


@click.group()
def main():
    """Microstructure qualification engine."""


@main.command()
@click.option("--embeddings", type=click.Path(exists=True, dir_okay=False), help="Interchange JSONL file.")
@click.option("--labels", type=click.Path(exists=True, dir_okay=False), help="Expert labels CSV.")
@click.option("--criteria", type=click.Path(exists=True, dir_okay=False), help="Knowledge JSON with criteria.")
@data_dir_option
def ingest(embeddings, labels, criteria, data_dir):
    """Load embeddings, labels, or criteria into the store."""
    if not any((embeddings, labels, criteria)):
        raise click.UsageError("nothing to ingest: pass --embeddings, --labels, or --criteria")
    kb = open_kb(data_dir)
    try:
        if embeddings:
            result = kb.ingest_embeddings(embeddings)
            click.echo(f"{result.count} embeddings loaded")
            for w in result.warnings:
                click.echo(f"warning: {w}", err=True)
        if labels:
            count = kb.load_labels(labels)
            click.echo(f"{count} labels loaded")
        if criteria:
            kb.load_knowledge(criteria)
            click.echo(f"{len(kb.snapshot().criteria)} criteria stored")
    except (FileFormatError, MicroqualError) as exc:
        fail(str(exc))
    kb.save(data_dir)


strategy_option = click.option(
    "--strategy",
    type=click.Choice(["zscore_sum", "weighted", "vote"]),
    default="zscore_sum",
    show_default=True,
)


@main.command()
@click.option("--criterion", "criterion_id", required=True, help="Criterion id, e.g. EA6.")
@strategy_option
@click.option("--weights", default="1,1", show_default=True, help="w_text,w_image for --strategy weighted.")
@click.option("--threshold", type=float, default=0.0, show_default=True)
@click.option("--sigma", type=click.Choice(["population", "sample"]), default="population", show_default=True)
@click.option("--variant", type=click.Choice(["plain", "color"]), default="plain", show_default=True)
@click.option("--fixture", type=click.Path(exists=True, dir_okay=False), help="Inject raw deltas from a score CSV instead of computing them.")
@click.option("--text-model", default="clip", show_default=True)
@click.option("--image-model", default="flava", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output score-table CSV.")
@click.option("--precision", type=click.Choice(["fixed", "full"]), default="fixed", show_default=True)
@click.option("--store-baseline", is_flag=True, help="Freeze this batch's stats as the criterion baseline.")
@data_dir_option
def score(criterion_id, strategy, weights, threshold, sigma, variant, fixture, text_model,
          image_model, out, precision, store_baseline, data_dir):
    """Score a batch and write the six-column table."""
    try:
        w = tuple(float(x) for x in weights.split(","))
        if len(w) != 2:
            raise ValueError
    except ValueError:
        raise click.UsageError(f"--weights expects two comma-separated reals, got {weights!r}")
    config = FusionConfig(
        strategy=strategy,
        weights=w,
        threshold=threshold,
        sigma_convention=SigmaConvention(sigma),
        zscore_population=ZScorePopulation.BATCH,
    )
    kb = open_kb(data_dir)
    try:
        if fixture:
            deltas = [
                _with_criterion(d, criterion_id) for d in read_delta_fixture(fixture)
            ]
            batch_id = batch_digest([d.sample_id for d in deltas], criterion_id, "fixture")
            table = score_deltas(deltas, config, batch_id=batch_id, criterion_id=criterion_id)
        else:
            snapshot = kb.snapshot()
            sample_ids = [sid for sid, _ in snapshot.vision_corpus(image_model)]
            if not sample_ids:
                fail(f"no samples with {image_model!r} vision embeddings in store")
            table = score_batch(
                snapshot, sample_ids, criterion_id, config,
                text_model=text_model, image_model=image_model, variant=variant,
            )
    except MicroqualError as exc:
        fail(str(exc))
    except ValueError as exc:
        fail(str(exc))
    write_score_table(table, out, precision=precision)
    for w_msg in table.warnings:
        click.echo(f"warning: {w_msg}", err=True)
    if store_baseline:
        kb.record_score_table(table)
        kb.store_baseline(
            StoredBaseline(
                criterion_id=criterion_id,
                text_model=text_model,
                image_model=image_model,
                variant=variant,
                batch_id=table.batch_id,
                stats=table.population_stats,
            )
        )
        kb.save(data_dir)
        click.echo(f"baseline stored for {criterion_id} (batch {table.batch_id})")
    click.echo(f"{len(table.rows)} rows written to {out}")


def _with_criterion(delta, criterion_id):
    from dataclasses import replace

    return replace(delta, criterion_id=criterion_id)


@main.command()
@click.option("--criterion", "criterion_id", required=True)
@click.option("--against", "labels_path", type=click.Path(exists=True, dir_okay=False), required=True, help="Expert labels CSV.")
@click.option("--scores", "scores_path", type=click.Path(exists=True, dir_okay=False), required=True, help="Score-table CSV (from `score`).")
def evaluate(criterion_id, labels_path, scores_path):
    """Confusion matrix and metrics for a score table against expert labels."""
    import csv

    kb = KnowledgeBase()
    try:
        kb.load_labels(labels_path)
    except FileFormatError as exc:
        fail(str(exc))
    labels = {}
    for sid, record in kb.snapshot().samples.items():
        if criterion_id in record.labels:
            labels[sid] = record.labels[criterion_id]
    if not labels or all(v == "na" for v in labels.values()):
        fail(f"no labeled samples for criterion {criterion_id}")
    with open(scores_path, encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        fail("empty score table")
    from .core import FusionStrategy, HybridScore
    from .fusion import LABEL_NEGATIVE, LABEL_POSITIVE, PopulationStats, ScoreTable

    hybrid_rows = []
    for r in rows:
        combined = float(r["delta_combined"])
        hybrid_rows.append(
            HybridScore(
                sample_id=r["image"],
                criterion_id=criterion_id,
                z_text=float(r["delta_clip_z"]),
                z_image=float(r["delta_flava_z"]),
                combined=combined,
                strategy=FusionStrategy.ZSCORE_SUM,
                threshold=0.0,
                label=LABEL_POSITIVE if combined >= 0.0 else LABEL_NEGATIVE,
                batch_id="file",
            )
        )
    table = ScoreTable(
        batch_id="file",
        criterion_id=criterion_id,
        rows=tuple(hybrid_rows),
        population_stats=PopulationStats(0.0, 0.0, 0.0, 0.0),
        config=FusionConfig(),
    )
    try:
        result = run_confusion(table, labels)
    except MicroqualError as exc:
        fail(str(exc))
    click.echo(f"tp={result.tp} fp={result.fp} fn={result.fn} tn={result.tn}")
    click.echo(f"accuracy={result.accuracy:.4f} precision={result.precision:.4f} recall={result.recall:.4f}")
    click.echo(f"misclassified: {', '.join(result.misclassified) if result.misclassified else '(none)'}")


@main.command()
@click.option("--criteria", "criteria_list", required=True, help="Comma-separated criterion ids, e.g. EA1,EA2,EA3.")
@click.option("--cumulative", is_flag=True, help="Query with the mean embedding over the listed criteria.")
@click.option("--variant", type=click.Choice(["plain", "color"]), default="plain", show_default=True)
@click.option("--model", default="clip", show_default=True)
@click.option("--k", type=int, default=5, show_default=True)
@data_dir_option
def retrieve(criteria_list, cumulative, variant, model, k, data_dir):
    """Rank stored images against assessment text embeddings."""
    from .retrieval import QueryDescriptor, cumulative_text_embedding, rank_by_text

    criteria = [c.strip() for c in criteria_list.split(",") if c.strip()]
    if not criteria:
        raise click.UsageError("--criteria must name at least one criterion id")
    kb = open_kb(data_dir)
    snapshot = kb.snapshot()
    try:
        corpus = snapshot.vision_corpus(model)
        ids = criteria if cumulative else criteria[:1]
        query = cumulative_text_embedding(snapshot, ids, variant, model)
        descriptor = QueryDescriptor(
            criterion_ids=tuple(ids), variant=variant,
            mode="cumulative" if cumulative else "individual",
        )
        result = rank_by_text(query, corpus, k=k, model_id=model, descriptor=descriptor)
    except MicroqualError as exc:
        fail(str(exc))
    except ValueError as exc:
        fail(str(exc))
    for sample_id, sim in result.ranked:
        click.echo(f"{sample_id}\t{sim:.4f}")


@main.command()
@click.option("--sample", "sample_id", required=True)
@click.option("--order", default=",".join(TreeConfig().order), show_default=True, help="Comma-separated criterion order.")
@click.option("--gates", default="EA3", show_default=True, help="Comma-separated gate criteria ('' for none).")
@click.option("--stop-at-first-failure", is_flag=True)
@click.option("--text-model", default="clip", show_default=True)
@click.option("--image-model", default="flava", show_default=True)
@click.option("--variant", type=click.Choice(["plain", "color"]), default="plain", show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Emit the full trace document.")
@data_dir_option
def tree(sample_id, order, gates, stop_at_first_failure, text_model, image_model, variant, as_json, data_dir):
    """Run the multi-criterion detection tree for one sample."""
    kb = open_kb(data_dir)
    try:
        config = TreeConfig(
            order=tuple(c.strip() for c in order.split(",") if c.strip()),
            gate_criteria=frozenset(c.strip() for c in gates.split(",") if c.strip()),
            stop_at_first_failure=stop_at_first_failure,
            text_model=text_model,
            image_model=image_model,
            variant=variant,
        )
        trace = evaluate_tree(sample_id, config, snapshot=kb.snapshot())
    except (MicroqualError, ValueError) as exc:
        fail(str(exc))
    if as_json:
        click.echo(json.dumps(trace.to_doc(), indent=2))
        return
    for step in trace.steps:
        combined = f"{step.score.combined:.4f}" if step.score else "-"
        note = f"  ({step.error})" if step.error else ""
        click.echo(f"{step.criterion_id}\t{step.verdict}\tcombined={combined}{note}")
    mark = " (short-circuited)" if trace.short_circuited else ""
    click.echo(f"final: {trace.final}{mark}  config={trace.config_hash}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Service config JSON.")
def serve(config_path):
    """Start the HTTP service."""
    from .service import ServiceConfig, run

    run(ServiceConfig.from_file(config_path))


@main.command()
@click.option("--what", type=click.Choice(["projection", "report"]), required=True)
@click.option("--model", default="flava", show_default=True)
@click.option("--variant", default="plain", show_default=True)
@click.option("--criteria", "criteria_list", default="EA1,EA2,EA3,EA4,EA5,EA6", show_default=True)
@click.option("--cumulative", is_flag=True, help="report: add prefix-mean rows over the criteria order.")
@click.option("--ks", default="5,10,15", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@data_dir_option
def export(what, model, variant, criteria_list, cumulative, ks, out, data_dir):
    """Export raw vectors (projection) or a retrieval precision report."""
    kb = open_kb(data_dir)
    snapshot = kb.snapshot()
    if what == "projection":
        corpus = snapshot.vision_corpus(model)
        if not corpus:
            fail(f"no vision corpus for model {model!r}")
        dim = len(corpus[0][1])
        lines = ["sample_id,model," + ",".join(f"v{i}" for i in range(dim))]
        for sid, vec in corpus:
            lines.append(sid + f",{model}," + ",".join(f"{x:.17g}" for x in vec))
        Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        click.echo(f"{len(corpus)} vectors written to {out}")
        return
    criteria = [c.strip() for c in criteria_list.split(",") if c.strip()]
    sets = [[c] for c in criteria]
    if cumulative:
        sets += [criteria[:n] for n in range(2, len(criteria) + 1)]
    try:
        report = retrieval_report(
            snapshot,
            criterion_sets=sets,
            variants=[variant],
            models=[model],
            ks=[int(x) for x in ks.split(",")],
        )
    except (MicroqualError, ValueError) as exc:
        fail(str(exc))
    Path(out).write_text(report.to_csv(), encoding="utf-8")
    click.echo(f"{len(report.rows)} report rows written to {out}")


if __name__ == "__main__":
    main()
