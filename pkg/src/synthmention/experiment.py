"""Experiment orchestration: a TOML config ties datasets, strategies,
engines, and output locations together; ``run_experiment`` executes the
strategy x engine grid deterministically.
"""

from __future__ import annotations

import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import augment, metrics, normalize
from .corpus import (
    ConceptTable,
    CorpusSplit,
    apply_crosswalk,
    cui_set,
    load_concept_table,
    load_corpus,
    load_crosswalk,
)
from .errors import DataError
from .vectors import EmbeddingSpace, build_space, embed_corpus_ingest

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENGINES = ("exact", "token", "char3", "knn-nearest", "knn-vote")

_ENGINE_MODE = {
    "exact": "exact",
    "token": "token_overlap",
    "char3": "char3gram",
    "knn-nearest": "knn_nearest",
    "knn-vote": "knn_vote",
}


@dataclass
class ExperimentConfig:
    train: Path
    test: Path
    synth: Path
    concepts: Path
    dev: Path | None = None
    crosswalk: Path | None = None
    vectors: Path | None = None
    text_vectors: bool = False
    dataset: str = "dataset"
    strategies: list[str] = field(default_factory=lambda: list(augment.STRATEGIES))
    engines: list[str] = field(default_factory=lambda: ["token", "char3"])
    ks: list[int] = field(default_factory=lambda: [1, 5, 50])
    vote_k: int = 5
    k_max: int = 50
    jaccard_threshold: float = 0.7
    budget: int = 4
    seed: int = 0
    group_filter: str | None = None
    output_dir: Path = Path("out")

    def __post_init__(self):
        if self.ks != sorted(self.ks):
            raise DataError("ks must be sorted ascending")
        for s in self.strategies:
            if s not in augment.STRATEGIES:
                raise DataError(f"unknown strategy {s!r}")
        for e in self.engines:
            if e not in ENGINES:
                raise DataError(f"unknown engine {e!r}")


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    paths = raw.get("paths", {})
    exp = raw.get("experiment", {})
    base = Path(path).parent

    def resolve(key):
        value = paths.get(key)
        return (base / value) if value is not None else None

    required = {}
    for key in ("train", "test", "synth", "concepts"):
        p = resolve(key)
        if p is None:
            raise DataError(f"config missing paths.{key}")
        required[key] = p
    return ExperimentConfig(
        **required,
        dev=resolve("dev"),
        crosswalk=resolve("crosswalk"),
        vectors=resolve("vectors"),
        text_vectors=bool(exp.get("text_vectors", False)),
        dataset=exp.get("dataset", "dataset"),
        strategies=list(exp.get("strategies", augment.STRATEGIES)),
        engines=list(exp.get("engines", ["token", "char3"])),
        ks=list(exp.get("ks", [1, 5, 50])),
        vote_k=int(exp.get("vote_k", 5)),
        k_max=int(exp.get("k_max", 50)),
        jaccard_threshold=float(exp.get("jaccard_threshold", 0.7)),
        budget=int(exp.get("budget", 4)),
        seed=int(exp.get("seed", 0)),
        group_filter=exp.get("group_filter"),
        output_dir=base / exp.get("output_dir", "out"),
    )


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def validate(cfg: ExperimentConfig) -> list[str]:
    """Diagnostics: missing files, vector coverage gaps, crosswalk gaps,
    empty synthetic data.  Empty list means clean."""
    diags: list[str] = []
    paths = {
        "train": cfg.train,
        "test": cfg.test,
        "synth": cfg.synth,
        "concepts": cfg.concepts,
    }
    if cfg.dev:
        paths["dev"] = cfg.dev
    if cfg.crosswalk:
        paths["crosswalk"] = cfg.crosswalk
    if cfg.vectors:
        paths["vectors"] = cfg.vectors
    missing = [f"missing {name} file: {p}" for name, p in paths.items() if not Path(p).exists()]
    if missing:
        return missing

    try:
        train = load_corpus(cfg.train, name="train")
        test = load_corpus(cfg.test, name="test")
        synth = load_corpus(cfg.synth, name="synth")
    except DataError as exc:
        return [str(exc)]
    if not synth.mentions:
        diags.append(f"warning: synth file {cfg.synth} contains no mentions")

    if cfg.crosswalk:
        xwalk = load_crosswalk(cfg.crosswalk)
        for name, split in (("train", train), ("test", test)):
            _, unmapped = apply_crosswalk(split, xwalk)
            if unmapped:
                diags.append(
                    f"crosswalk leaves {len(unmapped)} {name} mentions unmapped "
                    f"(first: {unmapped[0].cui})"
                )

    needs_vectors = any(e.startswith("knn") for e in cfg.engines)
    if needs_vectors:
        if not cfg.vectors:
            diags.append("knn engine configured but no vectors file given")
        else:
            try:
                space = embed_corpus_ingest(cfg.vectors, text_format=cfg.text_vectors)
            except DataError as exc:
                return diags + [str(exc)]
            have = set(space.entry_ids)
            for name, split in (("train", train), ("test", test), ("synth", synth)):
                gap = [m.mention_id for m in split.mentions if m.mention_id not in have]
                if gap:
                    diags.append(
                        f"vectors file {cfg.vectors} missing {len(gap)} {name} "
                        f"mention vectors (first: {gap[0]})"
                    )
    return diags


@dataclass
class _LoadedInputs:
    table: ConceptTable
    train: CorpusSplit
    test: CorpusSplit
    synth: CorpusSplit
    space: EmbeddingSpace | None


def _load_inputs(cfg: ExperimentConfig) -> _LoadedInputs:
    table = load_concept_table(cfg.concepts, group_filter=cfg.group_filter)
    train = load_corpus(cfg.train, name="train")
    test = load_corpus(cfg.test, name="test")
    synth = load_corpus(cfg.synth, name="synth")
    if cfg.crosswalk:
        xwalk = load_crosswalk(cfg.crosswalk)
        train, _ = apply_crosswalk(train, xwalk)
        test, _ = apply_crosswalk(test, xwalk)
    space = None
    if cfg.vectors:
        space = embed_corpus_ingest(cfg.vectors, text_format=cfg.text_vectors)
    return _LoadedInputs(table=table, train=train, test=test, synth=synth, space=space)


def _subspace(space: EmbeddingSpace, mentions) -> EmbeddingSpace:
    """Vectors for the given mentions, keyed by mention_id, labeled by cui."""
    by_id = {eid: i for i, eid in enumerate(space.entry_ids)}
    entries = []
    for m in mentions:
        idx = by_id.get(m.mention_id)
        if idx is None:
            raise DataError(f"no vector for mention {m.mention_id!r}")
        entries.append((m.mention_id, m.cui, space.vectors[idx].tolist()))
    return build_space(space.dim, entries)


def _run_cell(cfg: ExperimentConfig, inputs: _LoadedInputs, strategy: str, engine: str):
    """One (strategy, engine) grid cell: build the index over the augmented
    training data, rank every test mention, and score it."""
    plan = augment.compose(strategy, inputs.synth, inputs.train, inputs.test)
    ncfg = normalize.NormalizerConfig(
        mode=_ENGINE_MODE[engine],
        jaccard_threshold=cfg.jaccard_threshold,
        vote_k=cfg.vote_k,
        k_max=cfg.k_max,
    )
    test_mentions = list(inputs.test.mentions)
    gold = [(m.mention_id, m.cui) for m in test_mentions]

    if engine.startswith("knn"):
        if inputs.space is None:
            raise DataError("knn engine requires a vectors file")
        index_mentions = list(plan.combined_train.mentions)
        space = _subspace(inputs.space, index_mentions)
        vindex = normalize.build_vector_index(space)
        qspace = _subspace(inputs.space, test_mentions)
        preds = [
            normalize.normalize_knn(qspace.vectors[i], m.mention_id, vindex, ncfg)
            for i, m in enumerate(test_mentions)
        ]
    else:
        sindex = normalize.build_string_index(inputs.table, plan.synthetic_selected)
        fn = {
            "exact": normalize.normalize_exact,
            "token": normalize.normalize_token_overlap,
            "char3": normalize.normalize_char3gram,
        }[engine]
        preds = [fn(m.surface, m.mention_id, sindex, ncfg) for m in test_mentions]

    train_cuis = cui_set(plan.combined_train)
    overall = metrics.accuracy_at_k(gold, preds, cfg.ks)
    ood = metrics.ood_accuracy_at_k(gold, preds, train_cuis, cfg.ks)

    rows = []
    for acc in overall:
        rows.append(
            {
                "dataset": cfg.dataset,
                "strategy": strategy,
                "engine": engine,
                "metric": "accuracy",
                "k": acc.k,
                "value": acc.value,
                "evaluated_count": acc.evaluated_count,
                "significant": "",
            }
        )
    for acc in ood:
        rows.append(
            {
                "dataset": cfg.dataset,
                "strategy": strategy,
                "engine": engine,
                "metric": "ood_accuracy",
                "k": acc.k,
                "value": acc.value,
                "evaluated_count": acc.evaluated_count,
                "significant": "",
            }
        )
    return rows, preds, plan


REPORT_COLUMNS = (
    "dataset",
    "strategy",
    "engine",
    "metric",
    "k",
    "value",
    "evaluated_count",
    "significant",
)


def format_value(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_report(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(REPORT_COLUMNS) + "\n")
        for row in rows:
            fh.write("\t".join(format_value(row[c]) for c in REPORT_COLUMNS) + "\n")


def write_summary(rows: list[dict], path) -> None:
    """Human-readable grid: engines x strategies, accuracy and OOD accuracy
    per k."""
    engines = sorted({r["engine"] for r in rows})
    strategies = [s for s in augment.STRATEGIES if any(r["strategy"] == s for r in rows)]
    ks = sorted({r["k"] for r in rows})
    cell = {
        (r["engine"], r["strategy"], r["metric"], r["k"]): r["value"] for r in rows
    }
    with open(path, "w", encoding="utf-8") as fh:
        for metric in ("accuracy", "ood_accuracy"):
            fh.write(f"== {metric} ==\n")
            header = ["engine", "strategy"] + [f"top{k}" for k in ks]
            fh.write("  ".join(f"{h:>14}" for h in header) + "\n")
            for engine in engines:
                for strategy in strategies:
                    vals = [
                        format_value(cell.get((engine, strategy, metric, k)))
                        for k in ks
                    ]
                    fh.write(
                        "  ".join(
                            f"{v:>14}" for v in [engine, strategy] + vals
                        )
                        + "\n"
                    )
            fh.write("\n")


def write_predictions(preds, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(
                json.dumps(
                    {
                        "query_id": p.query_id,
                        "ranked": [[cui, round(score, 9)] for cui, score in p.ranked],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def run_experiment(cfg: ExperimentConfig, threads: int = 1, figures: bool = True) -> Path:
    """Execute the strategy x engine grid.  Identical config and inputs
    produce byte-identical reports and manifest, at any thread count."""
    diags = validate(cfg)
    errors = [d for d in diags if not d.startswith("warning:")]
    if errors:
        raise DataError("config validation failed: " + "; ".join(errors))

    inputs = _load_inputs(cfg)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    cells = [(s, e) for s in cfg.strategies for e in cfg.engines]
    results = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                cell: pool.submit(_run_cell, cfg, inputs, *cell) for cell in cells
            }
            for cell, fut in futures.items():
                results[cell] = fut.result()
    else:
        for cell in cells:
            results[cell] = _run_cell(cfg, inputs, *cell)

    rows = []
    for cell in cells:  # config order, independent of scheduling
        cell_rows, preds, _plan = results[cell]
        rows.extend(cell_rows)
        write_predictions(preds, outdir / f"predictions_{cell[0]}_{cell[1]}.jsonl")

    report_path = outdir / "report.tsv"
    write_report(rows, report_path)
    write_summary(rows, outdir / "summary.txt")

    overlap = augment.overlap_report(inputs.synth, inputs.train, inputs.test)
    augment.write_overlap_report(overlap, inputs.train, inputs.test, outdir / "overlap.tsv")

    if figures:
        from .figures import render_report_figures

        render_report_figures(rows, outdir)

    manifest = {
        "seed": cfg.seed,
        "vote_k": cfg.vote_k,
        "k_max": cfg.k_max,
        "ks": cfg.ks,
        "budget": cfg.budget,
        "jaccard_threshold": cfg.jaccard_threshold,
        "strategies": list(cfg.strategies),
        "engines": list(cfg.engines),
        "inputs": {
            name: _sha256(p)
            for name, p in sorted(
                {
                    "train": cfg.train,
                    "test": cfg.test,
                    "synth": cfg.synth,
                    "concepts": cfg.concepts,
                    **({"crosswalk": cfg.crosswalk} if cfg.crosswalk else {}),
                    **({"vectors": cfg.vectors} if cfg.vectors else {}),
                }.items()
            )
        },
        "outputs": {
            p.name: _sha256(p)
            for p in sorted(outdir.glob("*.tsv")) + sorted(outdir.glob("*.jsonl"))
        },
    }
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return outdir
