"""Generation-prompt rendering and extraction of mentions from raw LLM output.

The pipeline is: render prompts for each concept, feed them to an external
generator, then turn the raw generations back into validated mention
records via tag parsing with a fuzzy-match fallback.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .corpus import Concept, ConceptTable, CorpusSplit, Document, Mention
from .errors import DataError, ParseError

PROMPT_WITH_DEFINITION = (
    "Pretend you are a physician: Write a clinical note for a patient that "
    "mentions the condition {mention} either explicitly or as a synonym or "
    "abbreviation to this condition. It is also known as {names}. "
    "It is defined as {definition}. "
    "Place tokens {tag} before and after the mention of this condition. "
    "For example {tag} {mention} {tag}."
)

PROMPT_WITHOUT_DEFINITION = (
    "Pretend you are a physician: Write a clinical note for a patient that "
    "mentions the condition {mention} either explicitly or as a synonym or "
    "abbreviation to this condition. It is also known as {names}. "
    "For example {tag} {mention} {tag}."
)


@dataclass(frozen=True)
class GenerationConfig:
    budget: int = 4
    generations_per_cui: int = 5
    open_tag: str = "<1CUI>"
    close_tag: str = "</1CUI>"

    def __post_init__(self):
        if self.budget < 0:
            raise DataError("edit budget must be >= 0")
        if not self.open_tag or not self.close_tag:
            raise DataError("tags must be non-empty")
        if self.open_tag == self.close_tag:
            raise DataError("open and close tags must be distinct")


@dataclass(frozen=True)
class PromptSpec:
    cui: str
    mention_name: str
    synonym_list: tuple[str, ...]
    definition: str | None
    variant_index: int


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    surface: str


@dataclass(frozen=True)
class ParsedTag:
    span: Span
    pair_count: int


@dataclass
class SyntheticRecord:
    """One generated note with its extraction outcome.

    ``text`` is the tag-stripped note; span offsets index into it.
    ``spans`` holds the extracted span first, plus any spans merged in from
    an external tagger.
    """

    cui: str
    raw_text: str
    text: str
    doc_id: str
    spans: list[Span] = field(default_factory=list)
    edit_distance: int | None = None
    status: str = "rejected_no_match"  # accepted | rejected_no_match | rejected_duplicate | relabelled

    @property
    def extracted(self) -> Span | None:
        return self.spans[0] if self.spans else None


def _lower(s: str) -> str:
    # Length-preserving lowercasing so offsets survive; the rare characters
    # whose lowercase form changes length are left as-is.
    return "".join(c.lower() if len(c.lower()) == 1 else c for c in s)


def render_prompt(concept: Concept, variant_index: int, cfg: GenerationConfig) -> str:
    """Fill the generation template for one concept.

    The with-definition template is used when the concept has any
    definition.  The name list is the synonyms, or the preferred name alone
    when there are none.  Deterministic: prompts do not vary by
    variant_index (diversity comes from generator sampling).
    """
    names = ", ".join(concept.synonyms) if concept.synonyms else concept.preferred_name
    if concept.definitions:
        return PROMPT_WITH_DEFINITION.format(
            mention=concept.preferred_name,
            names=names,
            definition=concept.definitions[0],
            tag=cfg.open_tag,
        )
    return PROMPT_WITHOUT_DEFINITION.format(
        mention=concept.preferred_name, names=names, tag=cfg.open_tag
    )


def render_prompt_specs(
    table: ConceptTable, cfg: GenerationConfig
) -> list[PromptSpec]:
    specs = []
    for cui in sorted(table.concepts):
        concept = table[cui]
        for variant in range(cfg.generations_per_cui):
            specs.append(
                PromptSpec(
                    cui=cui,
                    mention_name=concept.preferred_name,
                    synonym_list=concept.synonyms,
                    definition=concept.definitions[0] if concept.definitions else None,
                    variant_index=variant,
                )
            )
    return specs


def _scan_tags(raw: str, cfg: GenerationConfig) -> list[tuple[int, str]]:
    """Positions of tag occurrences, left to right; close checked first
    since the open tag may be a prefix-sibling of the close tag."""
    events = []
    i = 0
    n = len(raw)
    while i < n:
        if raw.startswith(cfg.close_tag, i):
            events.append((i, "close"))
            i += len(cfg.close_tag)
        elif raw.startswith(cfg.open_tag, i):
            events.append((i, "open"))
            i += len(cfg.open_tag)
        else:
            i += 1
    return events


def strip_tags(raw: str, cfg: GenerationConfig) -> str:
    """Remove every tag occurrence, keeping surrounding text untouched."""
    out = []
    last = 0
    for pos, kind in _scan_tags(raw, cfg):
        out.append(raw[last:pos])
        last = pos + len(cfg.close_tag if kind == "close" else cfg.open_tag)
    out.append(raw[last:])
    return "".join(out)


def parse_tagged_output(raw: str, cfg: GenerationConfig) -> ParsedTag | None:
    """Extract the first tag-enclosed span, with offsets over the
    tag-stripped text.

    The open tag doubles as a closer (the prompt's example clause uses the
    open form on both sides).  Surrounding whitespace inside the tags is
    trimmed.  No complete pair -> None.
    """
    events = _scan_tags(raw, cfg)
    pairs = []
    open_pos = None
    for pos, kind in events:
        if open_pos is None:
            if kind == "open":
                open_pos = pos + len(cfg.open_tag)
        else:
            pairs.append((open_pos, pos))
            open_pos = None
    if not pairs:
        return None

    raw_start, raw_end = pairs[0]
    enclosed = raw[raw_start:raw_end]
    lstrip = len(enclosed) - len(enclosed.lstrip())
    rstrip = len(enclosed) - len(enclosed.rstrip())
    raw_start += lstrip
    raw_end -= rstrip
    if raw_start >= raw_end:
        return None

    def to_stripped(raw_pos: int) -> int:
        # Subtract the length of every tag occurrence left of raw_pos.
        rem = 0
        for pos, kind in events:
            if pos < raw_pos:
                rem += len(cfg.close_tag if kind == "close" else cfg.open_tag)
            else:
                break
        return raw_pos - rem

    start = to_stripped(raw_start)
    end = start + (raw_end - raw_start)
    surface = enclosed.strip()
    return ParsedTag(span=Span(start=start, end=end, surface=surface), pair_count=len(pairs))


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute distance (case-sensitive; callers
    lowercase first)."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def fuzzy_locate(
    haystack: str, needle: str, budget: int
) -> tuple[int, int, int] | None:
    """Best fuzzy occurrence of needle in haystack.

    Returns (start, end, distance) for the non-empty substring window
    minimizing case-insensitive Levenshtein distance to needle, or None
    when the minimum exceeds the budget.  Ties broken by smaller distance,
    then smaller start, then shorter window.
    """
    if not needle:
        raise DataError("fuzzy_locate needle must be non-empty")
    if not haystack:
        return None
    h = _lower(haystack)
    n = _lower(needle)
    m, length = len(n), len(h)

    # DP with a free start: dist[j] = best distance of needle vs any window
    # ending at j; start[j] = smallest start among distance-optimal windows.
    dist = [0] * (length + 1)
    start = list(range(length + 1))
    for i in range(1, m + 1):
        ndist = [i] + [0] * length
        nstart = [0] * (length + 1)
        ci = n[i - 1]
        for j in range(1, length + 1):
            cost = 0 if ci == h[j - 1] else 1
            sub = dist[j - 1] + cost
            ins = ndist[j - 1] + 1
            dele = dist[j] + 1
            best = min(sub, ins, dele)
            s = length + 1
            if sub == best:
                s = min(s, start[j - 1])
            if ins == best:
                s = min(s, nstart[j - 1])
            if dele == best:
                s = min(s, start[j])
            ndist[j] = best
            nstart[j] = s
        dist, start = ndist, nstart

    best = None  # (distance, start, window_length, end)
    for j in range(1, length + 1):
        s = start[j]
        if s >= j:  # empty window: needle deleted entirely, not a match
            continue
        key = (dist[j], s, j - s)
        if best is None or key < best[:3]:
            best = (dist[j], s, j - s, j)
    if best is None or best[0] > budget:
        return None
    return (best[1], best[3], best[0])


def _best_name_distance(surface: str, concept: Concept) -> int:
    s = _lower(surface)
    return min(levenshtein(s, _lower(name)) for name in concept.all_names)


def validate_and_extract(
    raw_outputs: list[tuple[str, str]],
    table: ConceptTable,
    cfg: GenerationConfig,
    errors: list[str] | None = None,
) -> list[SyntheticRecord]:
    """Turn raw (cui, text) generations into validated SyntheticRecords.

    Tag parsing is preferred; when tags are absent or the tagged surface is
    outside the edit budget against every concept name, fuzzy matching over
    the preferred name then each synonym decides.  Exact duplicates of
    (cui, raw_text) after the first are rejected.  An unknown cui produces
    an error entry (appended to ``errors`` when given) and processing
    continues.
    """
    records: list[SyntheticRecord] = []
    seen: set[tuple[str, str]] = set()
    ordinals: dict[str, int] = {}
    for cui, raw in raw_outputs:
        if cui not in table:
            if errors is not None:
                errors.append(f"unknown cui {cui!r}; record skipped")
            continue
        ordinal = ordinals.get(cui, 0)
        ordinals[cui] = ordinal + 1
        stripped = strip_tags(raw, cfg)
        rec = SyntheticRecord(
            cui=cui, raw_text=raw, text=stripped, doc_id=f"synth:{cui}:{ordinal}"
        )
        if (cui, raw) in seen:
            rec.status = "rejected_duplicate"
            records.append(rec)
            continue
        seen.add((cui, raw))
        concept = table[cui]

        parsed = parse_tagged_output(raw, cfg)
        if parsed is not None:
            d = _best_name_distance(parsed.span.surface, concept)
            if d <= cfg.budget:
                rec.spans = [parsed.span]
                rec.edit_distance = d
                rec.status = "accepted"
                records.append(rec)
                continue
        for name in concept.all_names:
            hit = fuzzy_locate(stripped, name, cfg.budget)
            if hit is not None:
                s, e, d = hit
                rec.spans = [Span(start=s, end=e, surface=stripped[s:e])]
                rec.edit_distance = d
                rec.status = "accepted"
                break
        records.append(rec)
    return records


def merge_external_labels(
    records: list[SyntheticRecord], predictions: CorpusSplit
) -> tuple[list[SyntheticRecord], int]:
    """Union externally predicted spans into each record's span set.

    Predictions are matched by the record's doc_id.  Records whose span set
    changes become status=relabelled.  Returns the updated records plus a
    count of prediction doc_ids with no matching record.
    """
    by_doc: dict[str, list[Mention]] = {}
    for m in predictions.mentions:
        by_doc.setdefault(m.doc_id, []).append(m)
    known = {rec.doc_id for rec in records}
    orphaned = len(set(by_doc) - known)

    out = []
    for rec in records:
        preds = by_doc.get(rec.doc_id, [])
        spans = list(rec.spans)
        changed = False
        for p in sorted(preds, key=lambda m: (m.start, m.end)):
            span = Span(start=p.start, end=p.end, surface=rec.text[p.start : p.end])
            if span not in spans:
                spans.append(span)
                changed = True
        if changed:
            rec = SyntheticRecord(
                cui=rec.cui,
                raw_text=rec.raw_text,
                text=rec.text,
                doc_id=rec.doc_id,
                spans=spans,
                edit_distance=rec.edit_distance,
                status="relabelled",
            )
        out.append(rec)
    return out, orphaned


def to_corpus(records: list[SyntheticRecord], name: str = "synth") -> CorpusSplit:
    """One synthetic Document per accepted/relabelled record, with Mentions
    from its span set."""
    documents = []
    mentions = []
    for rec in records:
        if rec.status not in ("accepted", "relabelled"):
            raise DataError(
                f"record {rec.doc_id} has status {rec.status!r}; only accepted or "
                "relabelled records can become corpus documents"
            )
        documents.append(Document(doc_id=rec.doc_id, text=rec.text, source="synthetic"))
        for span in rec.spans:
            mentions.append(
                Mention(
                    doc_id=rec.doc_id,
                    start=span.start,
                    end=span.end,
                    surface=span.surface,
                    cui=rec.cui,
                )
            )
    return CorpusSplit(name=name, documents=tuple(documents), mentions=tuple(mentions))


# -- line-delimited JSON bridges to the external generator -------------------

def write_prompts(specs, table: ConceptTable, cfg: GenerationConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for spec in specs:
            prompt = render_prompt(table[spec.cui], spec.variant_index, cfg)
            fh.write(
                json.dumps(
                    {"cui": spec.cui, "variant": spec.variant_index, "prompt": prompt},
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_raw_generations(path) -> list[tuple[str, str]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out.append((rec["cui"], rec["text"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ParseError(f"bad generation record: {exc}", path=path, line=lineno)
    return out


def write_records(records: list[SyntheticRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "doc_id": rec.doc_id,
                        "cui": rec.cui,
                        "raw_text": rec.raw_text,
                        "text": rec.text,
                        "spans": [[s.start, s.end, s.surface] for s in rec.spans],
                        "edit_distance": rec.edit_distance,
                        "status": rec.status,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_records(path) -> list[SyntheticRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out.append(
                    SyntheticRecord(
                        cui=rec["cui"],
                        raw_text=rec["raw_text"],
                        text=rec["text"],
                        doc_id=rec["doc_id"],
                        spans=[Span(start=s, end=e, surface=t) for s, e, t in rec["spans"]],
                        edit_distance=rec["edit_distance"],
                        status=rec["status"],
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ParseError(f"bad record: {exc}", path=path, line=lineno)
    return out
