"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import augment as augment_mod
from . import experiment, metrics, normalize, synth, tagging
from .corpus import (
    cui_set,
    load_concept_table,
    load_corpus,
    load_crosswalk,
    save_corpus,
)
from .errors import DataError
from .normalize import CandidateList
from .vectors import embed_corpus_ingest


@click.group()
@click.option("--config", type=click.Path(), default=None, help="Experiment config (TOML).")
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--quiet", is_flag=True, default=False)
@click.pass_context
def cli(ctx, config, threads, seed, quiet):
    """Synthetic disease-mention corpus toolkit."""
    ctx.obj = {"config": config, "threads": threads, "seed": seed, "quiet": quiet}


def _echo(ctx, message):
    if not ctx.obj.get("quiet"):
        click.echo(message)


@cli.command()
@click.option("--corpus", "corpora", type=click.Path(exists=True), multiple=True)
@click.option("--concepts", type=click.Path(exists=True), default=None)
@click.option("--group-filter", default=None)
@click.option("--vectors", type=click.Path(exists=True), default=None)
@click.option("--text-vectors", is_flag=True, default=False)
@click.option("--crosswalk", type=click.Path(exists=True), default=None)
@click.pass_context
def ingest(ctx, corpora, concepts, group_filter, vectors, text_vectors, crosswalk):
    """Load inputs, verify invariants, and print counts."""
    for path in corpora:
        split = load_corpus(path)
        _echo(
            ctx,
            f"{path}: {len(split.documents)} documents, {len(split.mentions)} "
            f"mentions, {len(cui_set(split))} cuis",
        )
    if concepts:
        table = load_concept_table(concepts, group_filter=group_filter)
        with_syn = sum(1 for c in table.values() if c.synonyms)
        with_def = sum(1 for c in table.values() if c.definitions)
        _echo(
            ctx,
            f"{concepts}: {len(table)} concepts, {with_syn} with synonyms, "
            f"{with_def} with definitions, {table.warning_count} warnings",
        )
    if vectors:
        space = embed_corpus_ingest(vectors, text_format=text_vectors)
        _echo(ctx, f"{vectors}: {len(space)} entries, dim {space.dim}")
    if crosswalk:
        xwalk = load_crosswalk(crosswalk)
        _echo(ctx, f"{crosswalk}: {len(xwalk.entries)} crosswalk entries")


@cli.command()
@click.option("--concepts", type=click.Path(exists=True), required=True)
@click.option("--group-filter", default=None)
@click.option("--per-cui", type=int, default=5, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def prompts(ctx, concepts, group_filter, per_cui, out):
    """Render generation prompts for every concept."""
    table = load_concept_table(concepts, group_filter=group_filter)
    cfg = synth.GenerationConfig(generations_per_cui=per_cui)
    specs = synth.render_prompt_specs(table, cfg)
    synth.write_prompts(specs, table, cfg, out)
    _echo(ctx, f"wrote {len(specs)} prompts to {out}")


@cli.command()
@click.option("--raw", type=click.Path(exists=True), required=True, help="Raw generations (JSONL).")
@click.option("--concepts", type=click.Path(exists=True), required=True)
@click.option("--group-filter", default=None)
@click.option("--budget", type=int, default=4, show_default=True)
@click.option("--records-out", type=click.Path(), required=True)
@click.option("--corpus-out", type=click.Path(), default=None, help="Corpus of accepted records.")
@click.pass_context
def extract(ctx, raw, concepts, group_filter, budget, records_out, corpus_out):
    """Validate raw generations and extract mention spans."""
    table = load_concept_table(concepts, group_filter=group_filter)
    cfg = synth.GenerationConfig(budget=budget)
    outputs = synth.read_raw_generations(raw)
    records = synth.validate_and_extract(outputs, table, cfg)
    synth.write_records(records, records_out)
    by_status = {}
    for rec in records:
        by_status[rec.status] = by_status.get(rec.status, 0) + 1
    _echo(ctx, f"{len(records)} records: " + ", ".join(f"{k}={v}" for k, v in sorted(by_status.items())))
    if corpus_out:
        accepted = [r for r in records if r.status in ("accepted", "relabelled")]
        save_corpus(synth.to_corpus(accepted), corpus_out)
        _echo(ctx, f"wrote corpus of {len(accepted)} accepted records to {corpus_out}")


@cli.command()
@click.option("--strategy", type=click.Choice(augment_mod.STRATEGIES), required=True)
@click.option("--synth", "synth_path", type=click.Path(exists=True), required=True)
@click.option("--train", type=click.Path(exists=True), required=True)
@click.option("--test", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--report", type=click.Path(), default=None)
@click.pass_context
def augment(ctx, strategy, synth_path, train, test, out, report):
    """Compose an augmented training split."""
    synth_split = load_corpus(synth_path, name="synth")
    train_split = load_corpus(train, name="train")
    test_split = load_corpus(test, name="test")
    plan = augment_mod.compose(strategy, synth_split, train_split, test_split)
    save_corpus(plan.combined_train, out)
    _echo(
        ctx,
        f"{strategy}: selected {plan.stats.selected_mentions} synthetic mentions "
        f"({plan.stats.selected_cuis} cuis); combined train has "
        f"{len(plan.combined_train.mentions)} mentions",
    )
    if report:
        full = augment_mod.overlap_report(synth_split, train_split, test_split)
        augment_mod.write_overlap_report(full, train_split, test_split, report)


def _read_predictions(path) -> list[CandidateList]:
    preds = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            preds.append(
                CandidateList(
                    query_id=rec["query_id"],
                    ranked=tuple((c, s) for c, s in rec["ranked"]),
                )
            )
    return preds


@cli.command("normalize")
@click.option("--mode", type=click.Choice(experiment.ENGINES), required=True)
@click.option("--index", "index_path", type=click.Path(exists=True), required=True,
              help="Concept TSV for string modes; vector file for knn modes.")
@click.option("--queries", type=click.Path(exists=True), required=True,
              help="Corpus JSONL for string modes; vector file for knn modes.")
@click.option("--synth", "synth_path", type=click.Path(exists=True), default=None,
              help="Synthetic corpus whose surfaces join the string index.")
@click.option("--k", type=int, default=50, show_default=True)
@click.option("--vote-k", type=int, default=5, show_default=True)
@click.option("--jaccard-threshold", type=float, default=0.7, show_default=True)
@click.option("--text-vectors", is_flag=True, default=False)
@click.option("--group-filter", default=None)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def normalize_cmd(ctx, mode, index_path, queries, synth_path, k, vote_k,
                  jaccard_threshold, text_vectors, group_filter, out):
    """Rank candidate cuis for each query mention."""
    ncfg = normalize.NormalizerConfig(
        mode=experiment._ENGINE_MODE[mode],
        jaccard_threshold=jaccard_threshold,
        # vote_k only matters for knn-vote; don't let the default trip the
        # vote_k <= k invariant in the other modes
        vote_k=vote_k if mode == "knn-vote" else min(vote_k, k),
        k_max=k,
    )
    if mode.startswith("knn"):
        space = embed_corpus_ingest(index_path, text_format=text_vectors)
        vindex = normalize.build_vector_index(space)
        qspace = embed_corpus_ingest(queries, text_format=text_vectors)
        preds = [
            normalize.normalize_knn(qspace.vectors[i], qspace.entry_ids[i], vindex, ncfg)
            for i in range(len(qspace))
        ]
    else:
        table = load_concept_table(index_path, group_filter=group_filter)
        synth_split = load_corpus(synth_path, name="synth") if synth_path else None
        sindex = normalize.build_string_index(table, synth_split)
        fn = {
            "exact": normalize.normalize_exact,
            "token": normalize.normalize_token_overlap,
            "char3": normalize.normalize_char3gram,
        }[mode]
        split = load_corpus(queries, name="test")
        preds = [fn(m.surface, m.mention_id, sindex, ncfg) for m in split.mentions]
    experiment.write_predictions(preds, out)
    _echo(ctx, f"wrote {len(preds)} candidate lists to {out}")


@cli.command()
@click.option("--corpus", type=click.Path(exists=True), required=True)
@click.option("--concepts", type=click.Path(exists=True), default=None)
@click.option("--synth", "synth_path", type=click.Path(exists=True), default=None)
@click.option("--from-annotations", is_flag=True, default=False,
              help="Derive labels from the corpus's own mention spans instead of the gazetteer.")
@click.option("--group-filter", default=None)
@click.option("--labels-out", type=click.Path(), required=True)
@click.option("--tokens-out", type=click.Path(), default=None)
@click.pass_context
def tag(ctx, corpus, concepts, synth_path, from_annotations, group_filter,
        labels_out, tokens_out):
    """Binary-tag a corpus (gazetteer baseline, or from gold annotations)."""
    split = load_corpus(corpus)
    if from_annotations:
        seqs = tagging.tokenize_and_tag(split)
    else:
        if not concepts:
            raise click.UsageError("--concepts is required unless --from-annotations")
        table = load_concept_table(concepts, group_filter=group_filter)
        synth_split = load_corpus(synth_path, name="synth") if synth_path else None
        sindex = normalize.build_string_index(table, synth_split)
        seqs = tagging.gazetteer_tag(split, sindex)
    tagging.write_tag_file(seqs, labels_out, tokens_out)
    tagged = sum(1 for s in seqs for lab in s.labels if lab == "D")
    _echo(ctx, f"tagged {len(seqs)} documents ({tagged} D tokens) to {labels_out}")


@cli.command("eval-der")
@click.option("--gold-corpus", type=click.Path(exists=True), required=True)
@click.option("--pred", type=click.Path(exists=True), required=True, help="Predicted tag file (JSONL).")
@click.option("--train", type=click.Path(exists=True), default=None, help="Training corpus for OOD subsetting.")
@click.option("--dataset", default="dataset", show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--figures-dir", type=click.Path(), default=None)
@click.pass_context
def eval_der(ctx, gold_corpus, pred, train, dataset, out, figures_dir):
    """Strict entity-level P/R/F1 and token accuracy against gold spans."""
    gold_split = load_corpus(gold_corpus, name="test")
    gold_seqs = tagging.tokenize_and_tag(gold_split)
    pred_seqs = tagging.ingest_predictions(pred, gold_seqs)
    prf = metrics.entity_prf(gold_seqs, pred_seqs)
    acc = metrics.token_accuracy(gold_seqs, pred_seqs)

    rows = []

    def add(metric, value, count):
        rows.append(
            {
                "dataset": dataset,
                "strategy": "",
                "engine": "der",
                "metric": metric,
                "k": "",
                "value": value,
                "evaluated_count": count,
                "significant": "",
            }
        )

    add("precision", prf.precision, prf.tp + prf.fp)
    add("recall", prf.recall, prf.tp + prf.fn)
    add("f1", prf.f1, prf.tp + prf.fp + prf.fn)
    add("token_accuracy", acc, sum(len(s.labels) for s in gold_seqs))

    results = {"overall": (prf.precision, prf.recall, prf.f1)}
    if train:
        train_split = load_corpus(train, name="train")
        keep = tagging.ood_filter(train_split)
        g, p = tagging.restrict_to_ood(gold_seqs, pred_seqs, gold_split, keep)
        ood = metrics.prf_from_spans(g, p)
        add("ood_precision", ood.precision, ood.tp + ood.fp)
        add("ood_recall", ood.recall, ood.tp + ood.fn)
        add("ood_f1", ood.f1, ood.tp + ood.fp + ood.fn)
        results["ood"] = (ood.precision, ood.recall, ood.f1)

    experiment.write_report(rows, out)
    if figures_dir:
        from .figures import render_prf_figure

        Path(figures_dir).mkdir(parents=True, exist_ok=True)
        render_prf_figure(results, figures_dir)
    _echo(ctx, f"P={prf.precision:.4f} R={prf.recall:.4f} F1={prf.f1:.4f} Acc={acc:.4f}")


@cli.command("eval-den")
@click.option("--gold", "gold_corpus", type=click.Path(exists=True), required=True)
@click.option("--pred", type=click.Path(exists=True), required=True, help="Predictions JSONL.")
@click.option("--train", type=click.Path(exists=True), default=None, help="Training corpus for OOD subsetting.")
@click.option("--ks", default="1,5,50", show_default=True)
@click.option("--dataset", default="dataset", show_default=True)
@click.option("--strategy", default="", show_default=True)
@click.option("--engine", default="", show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--figures-dir", type=click.Path(), default=None)
@click.pass_context
def eval_den(ctx, gold_corpus, pred, train, ks, dataset, strategy, engine, out, figures_dir):
    """Accuracy@k (and OOD variant) of ranked candidate lists."""
    split = load_corpus(gold_corpus, name="test")
    gold = [(m.mention_id, m.cui) for m in split.mentions]
    preds = _read_predictions(pred)
    k_list = [int(x) for x in ks.split(",") if x]

    rows = []
    for acc in metrics.accuracy_at_k(gold, preds, k_list):
        rows.append(
            {
                "dataset": dataset, "strategy": strategy, "engine": engine,
                "metric": "accuracy", "k": acc.k, "value": acc.value,
                "evaluated_count": acc.evaluated_count, "significant": "",
            }
        )
    if train:
        train_cuis = cui_set(load_corpus(train, name="train"))
        for acc in metrics.ood_accuracy_at_k(gold, preds, train_cuis, k_list):
            rows.append(
                {
                    "dataset": dataset, "strategy": strategy, "engine": engine,
                    "metric": "ood_accuracy", "k": acc.k, "value": acc.value,
                    "evaluated_count": acc.evaluated_count, "significant": "",
                }
            )
    experiment.write_report(rows, out)
    if figures_dir:
        from .figures import render_report_figures

        Path(figures_dir).mkdir(parents=True, exist_ok=True)
        render_report_figures(rows, figures_dir)
    for row in rows:
        _echo(ctx, f"{row['metric']}@{row['k']}: {experiment.format_value(row['value'])}")


@cli.command()
@click.option("--a", "file_a", type=click.Path(exists=True), required=True)
@click.option("--b", "file_b", type=click.Path(exists=True), required=True)
@click.option("--column", required=True, help="Metric column name in the per-run TSV files.")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.pass_context
def stats(ctx, file_a, file_b, column, alpha):
    """Mann-Whitney U test between two per-run metric files."""

    def read_column(path):
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            if column not in header:
                raise DataError(f"{path} has no column {column!r} (has {header})")
            idx = header.index(column)
            values = []
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    values.append(float(line.split("\t")[idx]))
        return values

    result = metrics.mann_whitney_u(read_column(file_a), read_column(file_b), alpha=alpha)
    click.echo(
        f"U={result.u_statistic:g} p={result.p_value:.6f} method={result.method} "
        f"significant={'yes' if result.significant else 'no'} (alpha={alpha})"
    )


@cli.command()
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--no-figures", is_flag=True, default=False)
@click.pass_context
def run(ctx, config, no_figures):
    """Run the full strategy x engine experiment grid from a config file."""
    config = config or ctx.obj.get("config")
    if not config:
        raise click.UsageError("a config file is required (--config)")
    cfg = experiment.load_config(config)
    cfg.seed = ctx.obj.get("seed", cfg.seed)
    outdir = experiment.run_experiment(
        cfg, threads=ctx.obj.get("threads", 1), figures=not no_figures
    )
    _echo(ctx, f"experiment outputs in {outdir}")


@cli.command()
@click.option("--config", type=click.Path(exists=True), default=None)
@click.pass_context
def validate(ctx, config):
    """Check an experiment config; exit 0 only when diagnostics are clean."""
    config = config or ctx.obj.get("config")
    if not config:
        raise click.UsageError("a config file is required (--config)")
    cfg = experiment.load_config(config)
    diags = experiment.validate(cfg)
    for d in diags:
        click.echo(d)
    if any(not d.startswith("warning:") for d in diags):
        sys.exit(2)
    _echo(ctx, "clean")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except SystemExit as exc:
        code = exc.code or 0
        return code
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except Exception as exc:  # noqa: BLE001
        click.echo(f"internal error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
