"""Binary tagging for disease span evaluation: a token is either part of
a disease mention (D) or not (O).

Includes a gazetteer baseline tagger for desk-scale end-to-end runs and
ingestion of external tagger predictions.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass

from .corpus import CorpusSplit, cui_set
from .errors import DataError, ParseError
from .normalize import StringIndex, _norm_text

LABELS = ("O", "D")


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    end: int


@dataclass(frozen=True)
class TagSequence:
    doc_id: str
    tokens: tuple[Token, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise DataError(
                f"doc {self.doc_id!r}: {len(self.labels)} labels for "
                f"{len(self.tokens)} tokens"
            )
        for lab in self.labels:
            if lab not in LABELS:
                raise DataError(f"doc {self.doc_id!r}: bad label {lab!r}")
        prev_end = -1
        for tok in self.tokens:
            if tok.start < prev_end:
                raise DataError(f"doc {self.doc_id!r}: overlapping or unsorted tokens")
            prev_end = tok.end


@dataclass(frozen=True)
class EntitySpan:
    """Maximal run of D labels, at token granularity."""

    doc_id: str
    token_start: int
    token_end: int  # exclusive


def _is_punct(c: str) -> bool:
    return unicodedata.category(c).startswith("P")


def tokenize(text: str) -> tuple[Token, ...]:
    """Split on Unicode whitespace, then peel leading/trailing punctuation
    characters off as separate single-character tokens."""
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        lo, hi = i, j
        while lo < hi and _is_punct(text[lo]):
            tokens.append(Token(surface=text[lo], start=lo, end=lo + 1))
            lo += 1
        trailing = []
        while hi > lo and _is_punct(text[hi - 1]):
            trailing.append(Token(surface=text[hi - 1], start=hi - 1, end=hi))
            hi -= 1
        if lo < hi:
            tokens.append(Token(surface=text[lo:hi], start=lo, end=hi))
        tokens.extend(reversed(trailing))
        i = j
    return tuple(tokens)


def tokenize_and_tag(split: CorpusSplit) -> list[TagSequence]:
    """Token labeled D iff its character span overlaps any mention span."""
    spans_by_doc: dict[str, list[tuple[int, int]]] = {}
    for m in split.mentions:
        spans_by_doc.setdefault(m.doc_id, []).append((m.start, m.end))
    out = []
    for doc in split.documents:
        tokens = tokenize(doc.text)
        spans = spans_by_doc.get(doc.doc_id, [])
        labels = tuple(
            "D" if any(tok.start < e and s < tok.end for s, e in spans) else "O"
            for tok in tokens
        )
        out.append(TagSequence(doc_id=doc.doc_id, tokens=tokens, labels=labels))
    return out


def gazetteer_tag(split: CorpusSplit, index: StringIndex) -> list[TagSequence]:
    """Longest-match left-to-right dictionary tagging over token windows
    against the indexed names; longest wins, then leftmost."""
    name_seqs: set[tuple[str, ...]] = set()
    max_len = 0
    for name in index.names:
        toks = tuple(t.surface for t in tokenize(_norm_text(name)))
        if toks:
            name_seqs.add(toks)
            max_len = max(max_len, len(toks))

    out = []
    for doc in split.documents:
        tokens = tokenize(doc.text)
        lowered = [_norm_text(t.surface) for t in tokens]
        labels = ["O"] * len(tokens)
        i = 0
        while i < len(tokens):
            matched = 0
            for width in range(min(max_len, len(tokens) - i), 0, -1):
                if tuple(lowered[i : i + width]) in name_seqs:
                    matched = width
                    break
            if matched:
                for j in range(i, i + matched):
                    labels[j] = "D"
                i += matched
            else:
                i += 1
        out.append(TagSequence(doc_id=doc.doc_id, tokens=tokens, labels=tuple(labels)))
    return out


def entity_spans(seq: TagSequence) -> list[EntitySpan]:
    """Maximal D-runs as entity spans."""
    spans = []
    start = None
    for i, lab in enumerate(seq.labels):
        if lab == "D" and start is None:
            start = i
        elif lab == "O" and start is not None:
            spans.append(EntitySpan(doc_id=seq.doc_id, token_start=start, token_end=i))
            start = None
    if start is not None:
        spans.append(
            EntitySpan(doc_id=seq.doc_id, token_start=start, token_end=len(seq.labels))
        )
    return spans


def write_tag_file(seqs: list[TagSequence], labels_path, tokens_path=None) -> None:
    with open(labels_path, "w", encoding="utf-8") as fh:
        for seq in seqs:
            fh.write(
                json.dumps({"doc_id": seq.doc_id, "labels": list(seq.labels)}) + "\n"
            )
    if tokens_path is not None:
        with open(tokens_path, "w", encoding="utf-8") as fh:
            for seq in seqs:
                fh.write(
                    json.dumps(
                        {
                            "doc_id": seq.doc_id,
                            "tokens": [[t.surface, t.start, t.end] for t in seq.tokens],
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )


def ingest_predictions(path, gold: list[TagSequence]) -> list[TagSequence]:
    """Attach predicted label sequences to the gold tokenization, by
    doc_id.  Unknown doc_ids, missing doc_ids, or length mismatches are
    rejected, listing every offender."""
    predicted: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                predicted[rec["doc_id"]] = rec["labels"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise ParseError(f"bad tag record: {exc}", path=path, line=lineno)

    gold_ids = {seq.doc_id for seq in gold}
    problems = []
    for doc_id in predicted:
        if doc_id not in gold_ids:
            problems.append(f"unknown doc_id {doc_id!r}")
    out = []
    for seq in gold:
        labels = predicted.get(seq.doc_id)
        if labels is None:
            problems.append(f"no prediction for doc_id {seq.doc_id!r}")
            continue
        if len(labels) != len(seq.tokens):
            problems.append(
                f"doc {seq.doc_id!r}: {len(labels)} labels for {len(seq.tokens)} tokens"
            )
            continue
        bad = [lab for lab in labels if lab not in LABELS]
        if bad:
            problems.append(f"doc {seq.doc_id!r}: labels outside {{O,D}}: {bad[:3]}")
            continue
        out.append(TagSequence(doc_id=seq.doc_id, tokens=seq.tokens, labels=tuple(labels)))
    if problems:
        raise DataError("prediction ingest failed: " + "; ".join(problems))
    return out


def ood_filter(train: CorpusSplit):
    """Predicate on mentions: true exactly when the cui never occurs in
    the training split."""
    train_cuis = cui_set(train)
    return lambda mention: mention.cui not in train_cuis


def restrict_to_ood(
    gold_seqs: list[TagSequence],
    pred_seqs: list[TagSequence],
    gold_split: CorpusSplit,
    keep,
) -> tuple[set[EntitySpan], set[EntitySpan]]:
    """Entity sets restricted for OOD scoring.

    Gold entities overlapping only non-OOD mentions are removed from the
    reference; predicted entities overlapping a removed gold entity are
    removed from the prediction set (otherwise precision is
    uninterpretable).  Predicted entities overlapping no gold entity stay
    and count as false positives.
    """
    mentions_by_doc: dict[str, list] = {}
    for m in gold_split.mentions:
        mentions_by_doc.setdefault(m.doc_id, []).append(m)

    def overlapping_mentions(seq: TagSequence, span: EntitySpan):
        cs = seq.tokens[span.token_start].start
        ce = seq.tokens[span.token_end - 1].end
        return [
            m for m in mentions_by_doc.get(span.doc_id, []) if m.start < ce and cs < m.end
        ]

    gold_by_doc = {seq.doc_id: seq for seq in gold_seqs}
    kept_gold: set[EntitySpan] = set()
    removed_gold: set[EntitySpan] = set()
    for seq in gold_seqs:
        for span in entity_spans(seq):
            ms = overlapping_mentions(seq, span)
            if any(keep(m) for m in ms):
                kept_gold.add(span)
            else:
                removed_gold.add(span)

    kept_pred: set[EntitySpan] = set()
    for seq in pred_seqs:
        gold_seq = gold_by_doc.get(seq.doc_id)
        for span in entity_spans(seq):
            if gold_seq is not None and any(
                g.doc_id == span.doc_id
                and span.token_start < g.token_end
                and g.token_start < span.token_end
                for g in removed_gold
            ):
                continue
            kept_pred.add(span)
    return kept_gold, kept_pred
