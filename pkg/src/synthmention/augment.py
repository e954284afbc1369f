"""The four augmentation strategies, as set algebra over cuis.

Selection is decided purely by cui membership, never by surface strings;
gold training mentions are always retained.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import CorpusSplit, Mention, cui_set
from .errors import DataError

STRATEGIES = ("naive", "ideal", "supplemental", "ablation")


@dataclass(frozen=True)
class OverlapStats:
    synth_cuis_in_train: int
    synth_cuis_in_test: int
    selected_mentions: int
    selected_cuis: int

    def __post_init__(self):
        if min(
            self.synth_cuis_in_train,
            self.synth_cuis_in_test,
            self.selected_mentions,
            self.selected_cuis,
        ) < 0:
            raise DataError("overlap counts must be nonnegative")
        if self.selected_mentions > 0 and self.selected_cuis > self.selected_mentions:
            raise DataError("selected_cuis cannot exceed selected_mentions")


@dataclass(frozen=True)
class AugmentationPlan:
    strategy: str
    synthetic_selected: CorpusSplit
    combined_train: CorpusSplit
    stats: OverlapStats


def _select(strategy: str, synth: CorpusSplit, train_cuis: set, test_cuis: set):
    if strategy == "naive":
        keep = lambda m: True
    elif strategy == "ideal":
        keep = lambda m: m.cui in test_cuis
    elif strategy == "supplemental":
        keep = lambda m: m.cui not in train_cuis
    elif strategy == "ablation":
        keep = lambda m: m.cui not in test_cuis
    else:
        raise DataError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    mentions = tuple(m for m in synth.mentions if keep(m))
    kept_docs = {m.doc_id for m in mentions}
    documents = tuple(d for d in synth.documents if d.doc_id in kept_docs)
    return CorpusSplit(name=synth.name, documents=documents, mentions=mentions)


def compose(
    strategy: str, synth: CorpusSplit, train: CorpusSplit, test: CorpusSplit
) -> AugmentationPlan:
    """Select synthetic mentions per strategy and append them to the gold
    training split.  Deterministic and order-preserving."""
    train_cuis = cui_set(train)
    test_cuis = cui_set(test)
    selected = _select(strategy, synth, train_cuis, test_cuis)
    synth_cuis = cui_set(synth)

    combined_docs = train.documents + selected.documents
    combined_mentions = train.mentions + selected.mentions
    combined = CorpusSplit(
        name=train.name, documents=combined_docs, mentions=combined_mentions
    )
    stats = OverlapStats(
        synth_cuis_in_train=len(synth_cuis & train_cuis),
        synth_cuis_in_test=len(synth_cuis & test_cuis),
        selected_mentions=len(selected.mentions),
        selected_cuis=len(cui_set(selected)),
    )
    return AugmentationPlan(
        strategy=strategy,
        synthetic_selected=selected,
        combined_train=combined,
        stats=stats,
    )


def overlap_report(
    synth: CorpusSplit, train: CorpusSplit, test: CorpusSplit
) -> dict[str, OverlapStats]:
    """Per-strategy overlap accounting: shared cuis with train and test,
    plus selected mention/cui counts."""
    return {s: compose(s, synth, train, test).stats for s in STRATEGIES}


def write_overlap_report(
    report: dict[str, OverlapStats],
    train: CorpusSplit,
    test: CorpusSplit,
    path,
) -> None:
    """TSV report: gold, synthetic-selected, and combined counts are printed
    separately so either reading of a combined total can be checked."""
    gold_train_m = len(train.mentions)
    gold_train_c = len(cui_set(train))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            "strategy\tsynth_cuis_in_train\tsynth_cuis_in_test\t"
            "selected_cuis\tselected_mentions\tgold_train_cuis\tgold_train_mentions\t"
            "combined_mentions\ttest_cuis\ttest_mentions\n"
        )
        for strategy in STRATEGIES:
            st = report[strategy]
            fh.write(
                f"{strategy}\t{st.synth_cuis_in_train}\t{st.synth_cuis_in_test}\t"
                f"{st.selected_cuis}\t{st.selected_mentions}\t"
                f"{gold_train_c}\t{gold_train_m}\t"
                f"{gold_train_m + st.selected_mentions}\t"
                f"{len(cui_set(test))}\t{len(test.mentions)}\n"
            )
