"""Domain types and loaders for corpora, concept dictionaries, and crosswalks.

File formats:
  * concept table: TSV ``cui<TAB>term<TAB>term_type<TAB>group<TAB>definition``
    with term_type in {PREF, SYN, DEF}; group and definition columns optional.
  * corpus: line-delimited JSON; document records carry ``text``, mention
    records carry ``start``/``end``.
  * crosswalk: TSV ``source_vocab<TAB>source_id<TAB>cui``.

All character offsets are Unicode scalar-value counts (Python string
indices), never bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DataError, ParseError

VALID_SOURCES = ("gold", "synthetic")


@dataclass(frozen=True)
class Concept:
    """One vocabulary entry: the normalization target for a mention."""

    cui: str
    preferred_name: str
    synonyms: tuple[str, ...] = ()
    definitions: tuple[str, ...] = ()
    semantic_group: str = ""

    def __post_init__(self):
        if not self.cui:
            raise DataError("concept cui must be non-empty")
        if not self.preferred_name:
            raise DataError(f"concept {self.cui}: preferred_name must be non-empty")
        if len(set(self.synonyms)) != len(self.synonyms):
            raise DataError(f"concept {self.cui}: duplicate synonyms")
        if self.preferred_name in self.synonyms:
            raise DataError(f"concept {self.cui}: preferred_name repeated in synonyms")

    @property
    def all_names(self) -> tuple[str, ...]:
        return (self.preferred_name,) + self.synonyms


@dataclass(frozen=True)
class ConceptTable:
    """Immutable cui -> Concept map, optionally restricted to one semantic group."""

    concepts: dict[str, Concept]
    group_filter: str | None = None
    warning_count: int = 0

    def __len__(self):
        return len(self.concepts)

    def __contains__(self, cui):
        return cui in self.concepts

    def __getitem__(self, cui) -> Concept:
        return self.concepts[cui]

    def values(self):
        return self.concepts.values()


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    source: str = "gold"

    def __post_init__(self):
        if not self.text:
            raise DataError(f"document {self.doc_id!r}: text must be non-empty")
        if self.source not in VALID_SOURCES:
            raise DataError(f"document {self.doc_id!r}: bad source {self.source!r}")


@dataclass(frozen=True)
class Mention:
    """A contiguous character span in a document, normalized to a cui."""

    doc_id: str
    start: int
    end: int
    surface: str
    cui: str

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise DataError(
                f"mention in {self.doc_id!r}: bad span ({self.start}, {self.end})"
            )

    @property
    def mention_id(self) -> str:
        """Stable identifier used to key external vector files."""
        return f"{self.doc_id}:{self.start}-{self.end}"


@dataclass(frozen=True)
class CorpusSplit:
    name: str
    documents: tuple[Document, ...]
    mentions: tuple[Mention, ...]

    def __post_init__(self):
        by_id = {}
        for doc in self.documents:
            if doc.doc_id in by_id:
                raise DataError(f"duplicate doc_id {doc.doc_id!r} in split {self.name!r}")
            by_id[doc.doc_id] = doc
        for m in self.mentions:
            doc = by_id.get(m.doc_id)
            if doc is None:
                raise DataError(
                    f"mention references unknown doc_id {m.doc_id!r} in split {self.name!r}"
                )
            if m.end > len(doc.text):
                raise DataError(
                    f"mention span ({m.start}, {m.end}) out of range for "
                    f"doc {m.doc_id!r} (length {len(doc.text)})"
                )
            actual = doc.text[m.start : m.end]
            if actual != m.surface:
                raise DataError(
                    f"mention surface mismatch in doc {m.doc_id!r} at "
                    f"({m.start}, {m.end}): file says {m.surface!r}, "
                    f"document says {actual!r}"
                )

    def document(self, doc_id: str) -> Document:
        for doc in self.documents:
            if doc.doc_id == doc_id:
                return doc
        raise KeyError(doc_id)


@dataclass(frozen=True)
class Crosswalk:
    """(source_vocab, source_id) -> cui mapping, e.g. MeSH/OMIM to UMLS."""

    entries: dict[tuple[str, str], str]

    def __post_init__(self):
        for key, cui in self.entries.items():
            if not cui:
                raise DataError(f"crosswalk entry {key} maps to empty cui")


def load_concept_table(path, group_filter: str | None = None) -> ConceptTable:
    """Parse a concept TSV into a ConceptTable.

    The first PREF row per cui (or the first term row when none is marked
    PREF) becomes the preferred name; remaining terms become synonyms.
    Definitions are collected in file order.  A duplicate preferred term
    keeps the first and bumps the warning counter.
    """
    terms: dict[str, list[tuple[str, str]]] = {}  # cui -> [(term_type, term)]
    defs: dict[str, list[str]] = {}
    groups: dict[str, str] = {}
    warnings = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 3:
                raise ParseError(
                    f"concept row needs >=3 tab-separated fields, got {len(cols)}",
                    path=path,
                    line=lineno,
                )
            cui, term, term_type = cols[0], cols[1], cols[2]
            group = cols[3] if len(cols) > 3 else ""
            definition = cols[4] if len(cols) > 4 else ""
            if not cui:
                raise ParseError("empty cui", path=path, line=lineno)
            if term_type not in ("PREF", "SYN", "DEF"):
                raise ParseError(
                    f"unknown term_type {term_type!r}", path=path, line=lineno
                )
            if group_filter is not None and group != group_filter:
                continue
            if group and cui not in groups:
                groups[cui] = group
            if term_type == "DEF":
                text = definition or term
                if text:
                    defs.setdefault(cui, []).append(text)
                continue
            if definition:
                defs.setdefault(cui, []).append(definition)
            if not term:
                raise ParseError("empty term", path=path, line=lineno)
            terms.setdefault(cui, []).append((term_type, term))

    concepts = {}
    for cui, rows in terms.items():
        preferred = None
        for term_type, term in rows:
            if term_type == "PREF":
                if preferred is None:
                    preferred = term
                elif term != preferred:
                    warnings += 1
        if preferred is None:
            preferred = rows[0][1]
        synonyms = []
        for _, term in rows:
            if term != preferred and term not in synonyms:
                synonyms.append(term)
        definitions = []
        for d in defs.get(cui, []):
            if d not in definitions:
                definitions.append(d)
        concepts[cui] = Concept(
            cui=cui,
            preferred_name=preferred,
            synonyms=tuple(synonyms),
            definitions=tuple(definitions),
            semantic_group=groups.get(cui, ""),
        )
    return ConceptTable(
        concepts=concepts, group_filter=group_filter, warning_count=warnings
    )


def load_corpus(path, name: str = "train") -> CorpusSplit:
    """Parse a line-delimited JSON corpus file; all Mention invariants are
    verified at load and violations raise DataError naming the record."""
    documents: list[Document] = []
    mentions: list[Mention] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON: {exc}", path=path, line=lineno)
            if "text" in rec:
                documents.append(
                    Document(
                        doc_id=rec["doc_id"],
                        text=rec["text"],
                        source=rec.get("source", "gold"),
                    )
                )
            elif "start" in rec:
                try:
                    mentions.append(
                        Mention(
                            doc_id=rec["doc_id"],
                            start=rec["start"],
                            end=rec["end"],
                            surface=rec["surface"],
                            cui=rec["cui"],
                        )
                    )
                except DataError as exc:
                    raise ParseError(str(exc), path=path, line=lineno)
            else:
                raise ParseError(
                    "record is neither a document (text) nor a mention (start)",
                    path=path,
                    line=lineno,
                )
    try:
        return CorpusSplit(name=name, documents=tuple(documents), mentions=tuple(mentions))
    except DataError as exc:
        raise DataError(f"{exc} (while loading {path})")


def save_corpus(split: CorpusSplit, path) -> None:
    """Inverse of load_corpus: document records first, then mentions, in order."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in split.documents:
            fh.write(
                json.dumps(
                    {"doc_id": doc.doc_id, "text": doc.text, "source": doc.source},
                    ensure_ascii=False,
                )
                + "\n"
            )
        for m in split.mentions:
            fh.write(
                json.dumps(
                    {
                        "doc_id": m.doc_id,
                        "start": m.start,
                        "end": m.end,
                        "surface": m.surface,
                        "cui": m.cui,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_crosswalk(path) -> Crosswalk:
    entries: dict[tuple[str, str], str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(
                    f"crosswalk row needs 3 fields, got {len(cols)}",
                    path=path,
                    line=lineno,
                )
            vocab, source_id, cui = cols
            if not cui:
                raise ParseError("crosswalk row maps to empty cui", path=path, line=lineno)
            entries[(vocab, source_id)] = cui
    return Crosswalk(entries=entries)


def apply_crosswalk(
    split: CorpusSplit, xwalk: Crosswalk
) -> tuple[CorpusSplit, list[Mention]]:
    """Replace MESH:/OMIM:-prefixed mention cuis with their UMLS cuis.

    Mentions without a mapping are returned separately and dropped from the
    output split; plain cuis pass through unchanged.
    """
    mapped: list[Mention] = []
    unmapped: list[Mention] = []
    for m in split.mentions:
        if ":" in m.cui:
            vocab, _, source_id = m.cui.partition(":")
            cui = xwalk.entries.get((vocab, source_id))
            if cui is None:
                unmapped.append(m)
                continue
            m = Mention(
                doc_id=m.doc_id, start=m.start, end=m.end, surface=m.surface, cui=cui
            )
        mapped.append(m)
    out = CorpusSplit(name=split.name, documents=split.documents, mentions=tuple(mapped))
    return out, unmapped


def cui_set(split: CorpusSplit) -> set[str]:
    """Distinct cuis over a split's mentions."""
    return {m.cui for m in split.mentions}
